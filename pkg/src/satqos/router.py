"""Grid-aware QoS routing.

The primary router works in three stages: a Bresenham-style line walk on
the torus finds a minimum-hop path; if that path fails the flow's QoS
constraints, a restricted Dijkstra is run inside the "ideal
parallelogram" -- the subgraph of all equal-length monotone paths between
the endpoints -- with congested links priced out; if no admissible path
exists the congestion threshold is relaxed in fixed steps before giving
up.  Straight-line cases (no parallelogram exists) are re-routed by
deviating around the first blocked link.
"""
from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Callable, Iterable

from .constellation import Constellation, GridCoord, neighbors
from .link_state import MAX_COST, available_bandwidth, raw_score
from .network import Edge, InstalledFlow, NetworkView, edge_key

if TYPE_CHECKING:  # pragma: no cover
    from .sim_engine import FlowRequest


class UnreachableError(RuntimeError):
    """No admissible path exists between the endpoints."""


class DegenerateLineError(ValueError):
    """The endpoints admit no parallelogram (single-line geometry)."""


class RouteStatus(Enum):
    SATISFIED = "satisfied"
    UNSATISFIABLE = "unsatisfiable"
    NON_QOS = "non_qos"


class LinkMark(Enum):
    CONGESTED = "congested"
    FAILED = "failed"


@dataclass(frozen=True)
class FlowConstraints:
    min_bandwidth_gbps: float = 0.0
    max_delay_ms: float = math.inf
    max_jitter_ms: float = math.inf
    max_plr: float = 1.0
    qos_enabled: bool = True

    @classmethod
    def non_qos(cls) -> "FlowConstraints":
        return cls(qos_enabled=False)


@dataclass(frozen=True)
class GridPath:
    hops: tuple[GridCoord, ...]
    m: int  # diagonal steps
    n: int  # longitudinal steps

    @property
    def hop_count(self) -> int:
        return len(self.hops) - 1

    @classmethod
    def from_hops(cls, hops: Iterable[GridCoord]) -> "GridPath":
        hops = tuple(hops)
        m = sum(1 for a, b in zip(hops, hops[1:]) if a.orbit != b.orbit)
        return cls(hops=hops, m=m, n=len(hops) - 1 - m)


@dataclass
class RoutingOutcome:
    status: RouteStatus
    path: GridPath | None
    iterations_used: int = 0
    route_time_ms: float = 0.0


@dataclass
class SearchGraph:
    """Directed monotone subgraph between source and dest."""

    vertices: set[GridCoord]
    edges: dict[tuple[GridCoord, GridCoord], float]
    source: GridCoord
    dest: GridCoord
    adjacency: dict[GridCoord, list[GridCoord]] = field(default_factory=dict)

    def rebuild_adjacency(self) -> None:
        self.adjacency = {v: [] for v in self.vertices}
        for u, v in self.edges:
            self.adjacency[u].append(v)
        for nbrs in self.adjacency.values():
            nbrs.sort()


# ---------------------------------------------------------------------------
# Bresenham line walk
# ---------------------------------------------------------------------------


def _axis_choices(offset: int, size: int) -> list[tuple[int, int]]:
    """(distance, direction) options along one torus axis."""
    fwd = offset % size
    if fwd == 0:
        return [(0, 1)]
    return [(fwd, 1), (size - fwd, -1)]


def _best_displacements(src: GridCoord, dst: GridCoord, c: Constellation) -> tuple[int, int, int]:
    """Signed (orbit, slot) displacements realising the minimum hop count.

    Every step moves the slot index by exactly one, and only diagonal
    steps move the orbit, so a walk of h hops realises orbit displacement
    a and slot displacement b iff h >= |a|, h >= |b| and h = b (mod 2).
    The orbit side always uses the shorter ring direction; for the slot
    side displacements one wrap beyond the direct offsets can win on odd
    rings, where the extra lap flips the parity.  Ties prefer the smaller
    displacement, then the increasing-index direction.
    """
    fwd_o = (dst.orbit - src.orbit) % c.num_orbits
    a_options = {fwd_o, fwd_o - c.num_orbits}
    a = min(a_options, key=lambda v: (abs(v), -v))

    fwd_s = (dst.slot - src.slot) % c.sats_per_orbit
    best = None
    for b in (fwd_s, fwd_s - c.sats_per_orbit, fwd_s + c.sats_per_orbit):
        h = max(abs(a), abs(b))
        if (h - b) % 2:
            h += 1
        key = (h, abs(b), 0 if b >= 0 else 1)
        if best is None or key < best[0]:
            best = (key, b, h)
    _, b, h = best
    return a, b, h


def bresenham_path(src: GridCoord, dst: GridCoord, c: Constellation) -> GridPath:
    """Minimum-hop line walk from src to dst on the 6-neighbour torus.

    The hop count equals the BFS distance under the grid adjacency.  The
    |a| diagonal steps and the surplus of forward over backward slot
    moves are interleaved in rasterisation order via integer error terms,
    which keeps the walk deterministic and repeat-free.
    """
    c._check_coord(src)
    c._check_coord(dst)
    if src == dst:
        return GridPath(hops=(src,), m=0, n=0)

    a, b, h = _best_displacements(src, dst, c)
    d = abs(a)
    odir = 1 if a >= 0 else -1
    plus = (h + b) // 2  # +1 slot moves; the remaining h - plus are -1

    n_o, n_s = c.num_orbits, c.sats_per_orbit
    hops = [src]
    o, s = src.orbit, src.slot
    prev_diag = prev_plus = 0
    for i in range(1, h + 1):
        cum_diag = i * d // h
        cum_plus = i * plus // h
        if cum_diag > prev_diag:
            o = (o + odir) % n_o
        s = (s + (1 if cum_plus > prev_plus else -1)) % n_s
        prev_diag, prev_plus = cum_diag, cum_plus
        hops.append(GridCoord(o, s))
    return GridPath(hops=tuple(hops), m=d, n=h - d)


# ---------------------------------------------------------------------------
# Ideal parallelogram + restricted Dijkstra
# ---------------------------------------------------------------------------


def _monotone_directions(
    src: GridCoord, dst: GridCoord, m: int, n: int, c: Constellation
) -> tuple[int, int]:
    """Axis directions for which dst is m orbits and m+n slots from src."""
    for d_o, odir in _axis_choices(dst.orbit - src.orbit, c.num_orbits):
        if d_o != m:
            continue
        for d_s, sdir in _axis_choices(dst.slot - src.slot, c.sats_per_orbit):
            if d_s == m + n:
                return odir, sdir
    raise ValueError(
        f"no monotone (m={m}, n={n}) decomposition connects {src} to {dst}"
    )


def ideal_parallelogram(
    src: GridCoord, dst: GridCoord, m: int, n: int, c: Constellation
) -> SearchGraph:
    """Subgraph of all monotone paths with m diagonal + n slot steps.

    Vertices form an (m+1) x (n+1) lattice with src and dst at opposite
    corners; every monotone path through it has exactly m + n hops.  Edge
    costs are left unassigned (zero) until priced against a network view.
    """
    if m < 1 or n < 1:
        raise DegenerateLineError(
            f"parallelogram needs m >= 1 and n >= 1 diagonal/slot steps, got ({m}, {n})"
        )
    odir, sdir = _monotone_directions(src, dst, m, n, c)
    n_o, n_s = c.num_orbits, c.sats_per_orbit

    def vertex(i: int, j: int) -> GridCoord:
        return GridCoord(
            (src.orbit + i * odir) % n_o, (src.slot + (i + j) * sdir) % n_s
        )

    vertices: set[GridCoord] = set()
    edges: dict[tuple[GridCoord, GridCoord], float] = {}
    for i in range(m + 1):
        for j in range(n + 1):
            v = vertex(i, j)
            vertices.add(v)
            if i < m:
                edges[(v, vertex(i + 1, j))] = 0.0
            if j < n:
                edges[(v, vertex(i, j + 1))] = 0.0
    g = SearchGraph(vertices=vertices, edges=edges, source=src, dest=dst)
    g.rebuild_adjacency()
    return g


def edge_cost(net: NetworkView, a: GridCoord, b: GridCoord, max_cd: float) -> float:
    """Routing price of one link under a congestion admission threshold.

    Links that are failed, explicitly marked, or loaded beyond max_cd are
    priced at MAX_COST; admitted links cost the reciprocal of their score
    (available bandwidth still zeroes out above the network's base
    congestion threshold, independent of max_cd).
    """
    if net.is_edge_blocked(a, b):
        return MAX_COST
    metrics = net.edge_metrics(a, b)
    if net.edge_cd(a, b) > max_cd:
        return MAX_COST
    score = raw_score(
        metrics, net.weights, net.cd_threshold, jitter=net.edge_jitter_ms(a, b)
    )
    if score <= 0.0:
        return MAX_COST
    return 1.0 / score


def assign_costs(g: SearchGraph, net: NetworkView, max_cd: float) -> None:
    for u, v in g.edges:
        g.edges[(u, v)] = edge_cost(net, u, v, max_cd)


def path_cost(net: NetworkView, hops: Iterable[GridCoord], max_cd: float) -> float:
    hops = list(hops)
    return sum(edge_cost(net, a, b, max_cd) for a, b in zip(hops, hops[1:]))


def _dijkstra(
    source: GridCoord,
    dest: GridCoord,
    neighbors_of: Callable[[GridCoord], Iterable[GridCoord]],
    cost_of: Callable[[GridCoord, GridCoord], float],
) -> tuple[float, tuple[GridCoord, ...]]:
    """Deterministic Dijkstra: minimise cost, then hops, then the
    lexicographic coordinate sequence.  Edges priced at MAX_COST or above
    are treated as absent."""
    heap: list[tuple[float, int, tuple[GridCoord, ...]]] = [(0.0, 0, (source,))]
    settled: set[GridCoord] = set()
    while heap:
        cost, hops, path = heapq.heappop(heap)
        node = path[-1]
        if node in settled:
            continue
        settled.add(node)
        if node == dest:
            return cost, path
        for nxt in neighbors_of(node):
            if nxt in settled:
                continue
            w = cost_of(node, nxt)
            if w >= MAX_COST:
                continue
            heapq.heappush(heap, (cost + w, hops + 1, path + (nxt,)))
    raise UnreachableError(f"{dest} unreachable from {source}")


def dijkstra_in_subgraph(g: SearchGraph) -> GridPath:
    """Cheapest monotone path through an already-priced search graph."""
    cost, path = _dijkstra(
        g.source,
        g.dest,
        lambda v: g.adjacency.get(v, ()),
        lambda u, v: g.edges[(u, v)],
    )
    del cost
    return GridPath.from_hops(path)


def _cheapest_minimal_walk(
    src: GridCoord, dst: GridCoord, net: NetworkView, max_cd: float
) -> GridPath | None:
    """Cheapest admissible walk among ALL minimum-hop walks.

    When the orbit distance exceeds the slot distance the minimum-hop
    walks zigzag (diagonal slot moves partly cancel) and no parallelogram
    exists, but the family of minimal walks is still rich.  States track
    (steps taken, diagonals used, forward slot moves used); every state
    path is a simple grid walk of exactly the minimal hop count.
    """
    c = net.constellation
    a, b, h = _best_displacements(src, dst, c)
    d, odir = abs(a), (1 if a >= 0 else -1)
    plus = (h + b) // 2
    minus = h - plus
    n_o, n_s = c.num_orbits, c.sats_per_orbit

    def coord(i: int, du: int, pu: int) -> GridCoord:
        return GridCoord(
            (src.orbit + du * odir) % n_o, (src.slot + 2 * pu - i) % n_s
        )

    heap: list[tuple[float, tuple[GridCoord, ...], tuple[int, int, int]]] = [
        (0.0, (src,), (0, 0, 0))
    ]
    settled: set[tuple[int, int, int]] = set()
    while heap:
        cost, path, state = heapq.heappop(heap)
        if state in settled:
            continue
        settled.add(state)
        i, du, pu = state
        if i == h:
            return GridPath.from_hops(path)
        here = path[-1]
        left = h - i - 1
        for ddiag in (1, 0):
            ndu = du + ddiag
            if ndu > d or (i + 1 - ndu) > h - d or d - ndu > left:
                continue
            for npu in (pu + 1, pu):
                if npu > plus or (i + 1 - npu) > minus:
                    continue
                nxt = coord(i + 1, ndu, npu)
                w = edge_cost(net, here, nxt, max_cd)
                if w >= MAX_COST:
                    continue
                heapq.heappush(heap, (cost + w, path + (nxt,), (i + 1, ndu, npu)))
    return None


# ---------------------------------------------------------------------------
# QoS admission test
# ---------------------------------------------------------------------------


def is_satisfying_path(
    p: GridPath, fc: FlowConstraints, net: NetworkView
) -> bool:
    """Check a path against a flow's declared QoS constraints.

    Bottleneck available bandwidth, summed latency, worst per-link jitter
    and the composite loss ratio (independent losses) must all be within
    bounds; flows without QoS requirements accept any path.
    """
    if not fc.qos_enabled:
        return True
    hops = list(p.hops)
    if len(hops) < 2:
        return True
    bottleneck = min(
        available_bandwidth(net.edge_metrics(a, b), net.cd_threshold)
        for a, b in zip(hops, hops[1:])
    )
    if bottleneck < fc.min_bandwidth_gbps:
        return False
    if net.path_latency_ms(hops) > fc.max_delay_ms:
        return False
    if net.path_max_jitter_ms(hops) > fc.max_jitter_ms:
        return False
    return net.path_plr(hops) <= fc.max_plr


# ---------------------------------------------------------------------------
# Degenerate (single-line) geometry
# ---------------------------------------------------------------------------


def _line_is_clear(net: NetworkView, hops: list[GridCoord]) -> bool:
    return all(
        not net.is_edge_blocked(a, b) and net.edge_cd(a, b) <= net.cd_threshold
        for a, b in zip(hops, hops[1:])
    )


def _clear_deviated_route(
    net: NetworkView,
    start: GridCoord,
    dst: GridCoord,
    visited: set[GridCoord],
    hop_budget: int,
    deviations_left: int,
) -> tuple[GridCoord, ...] | None:
    """Cheapest clear route from start to dst by repeated line deviation.

    Walks the line toward dst; at the first congested/blocked link (or a
    node already used) it side-steps to every clear neighbour and re-runs
    the walk from there, recursively, within the hop budget.
    """
    c = net.constellation
    line = list(bresenham_path(start, dst, c).hops)
    if len(line) - 1 > hop_budget:
        return None

    cut = len(line) - 1  # first unusable edge index, if any
    for i, (a, b) in enumerate(zip(line, line[1:])):
        if (
            b in visited
            or net.is_edge_blocked(a, b)
            or net.edge_cd(a, b) > net.cd_threshold
        ):
            cut = i
            break
    if cut == len(line) - 1:
        return tuple(line)
    if deviations_left == 0:
        return None

    prefix = line[: cut + 1]
    pivot = line[cut]
    blocked_next = line[cut + 1]
    seen = visited | set(prefix)

    best: tuple[int, float, tuple[GridCoord, ...]] | None = None
    for w, _kind in sorted(neighbors(pivot, c)):
        if w in seen or w == blocked_next:
            continue
        if net.is_edge_blocked(pivot, w) or net.edge_cd(pivot, w) > net.cd_threshold:
            continue
        budget = hop_budget - cut - 1
        if budget < 0:
            continue
        tail = _clear_deviated_route(net, w, dst, seen | {w}, budget, deviations_left - 1)
        if tail is None:
            continue
        composite = tuple(prefix) + tail
        if len(set(composite)) != len(composite):
            continue
        key = (
            len(composite) - 1,
            path_cost(net, composite, net.cd_threshold),
            composite,
        )
        if best is None or key < best:
            best = key
    return best[2] if best is not None else None


def handle_degenerate_line(
    src: GridCoord, dst: GridCoord, net: NetworkView
) -> GridPath:
    """Route around congestion when no parallelogram exists.

    The line walk is returned unchanged when it is clear; otherwise the
    walk deviates sideways at the node before the first congested or
    blocked link and re-runs from there (recursively, within twice the
    original hop count), returning the shortest clear composite with total
    cost breaking length ties.
    """
    line = bresenham_path(src, dst, net.constellation)
    if _line_is_clear(net, list(line.hops)):
        return line
    budget = max(2 * line.hop_count, line.hop_count + 2)
    found = _clear_deviated_route(net, src, dst, set(), budget, deviations_left=4)
    if found is None:
        raise UnreachableError(
            f"all deviations around the blocked line {src}->{dst} are congested"
        )
    return GridPath.from_hops(found)


# ---------------------------------------------------------------------------
# Flow routing with congestion-threshold relaxation
# ---------------------------------------------------------------------------


def _install(net: NetworkView, flow: "FlowRequest", path: GridPath, router) -> None:
    hops = list(path.hops)
    if net.controller is not None:
        net.controller.install_path(flow.flow_id, [net.constellation.id_of(h) for h in hops])
    existing = net.flows.get(flow.flow_id)
    if existing is not None:
        net.remove_path_load(existing.hops, existing.demand_gbps)
    net.add_path_load(hops, flow.demand_gbps)
    net.flows[flow.flow_id] = InstalledFlow(
        flow_id=flow.flow_id,
        request=flow,
        hops=hops,
        demand_gbps=flow.demand_gbps,
        router=router,
    )


def relaxation_iterations(max_cd: float, delta_cd: float) -> int:
    """Number of admission-threshold relaxations to attempt (at least 1)."""
    if not 0 < max_cd < 1:
        raise ValueError("max_cd must be in (0, 1)")
    if delta_cd <= 0:
        raise ValueError("delta_cd must be positive")
    return max(1, math.floor((1.0 - max_cd) / delta_cd))


def route_flow(
    f: "FlowRequest",
    net: NetworkView,
    max_cd: float = 0.82,
    delta_cd: float = 0.05,
    router=None,
) -> RoutingOutcome:
    """Route one flow and install the resulting path.

    Non-QoS flows take the line walk directly whenever it is free of
    failed/marked links.  QoS flows that the line walk cannot satisfy go
    through the parallelogram search, relaxing the admission threshold by
    delta_cd per iteration; if the geometry admits no parallelogram the
    deviation handler is used instead.  Flows that remain unsatisfied are
    still installed on the best path found, which is reported back.
    """
    c = net.constellation
    src = f.src if isinstance(f.src, GridCoord) else c.coord_of(f.src)
    dst = f.dst if isinstance(f.dst, GridCoord) else c.coord_of(f.dst)
    c._check_coord(src)
    c._check_coord(dst)
    fc = f.constraints
    iters_allowed = relaxation_iterations(max_cd, delta_cd)

    line = bresenham_path(src, dst, c)
    line_usable = not net.path_has_blocked_edge(list(line.hops))
    non_qos = not fc.qos_enabled

    if line_usable and (non_qos or is_satisfying_path(line, fc, net)):
        _install(net, f, line, router)
        status = RouteStatus.NON_QOS if non_qos else RouteStatus.SATISFIED
        return RoutingOutcome(status=status, path=line, iterations_used=0)

    # Classify the geometry: with |b| > d a parallelogram of monotone
    # paths exists; with 0 < |b| < d (or b = 0, d > 0) the minimal walks
    # zigzag and are searched as a family; d = 0 or |b| = d means the
    # line is the unique minimal path and only deviation can help.
    a, b, _h = _best_displacements(src, dst, c)
    d = abs(a)
    best: GridPath | None = None
    best_cost = math.inf
    iterations = 0

    if d == 0 or abs(b) == d:
        iterations = 1
        try:
            path = handle_degenerate_line(src, dst, net)
        except UnreachableError:
            path = None
        if path is not None:
            if non_qos or is_satisfying_path(path, fc, net):
                _install(net, f, path, router)
                status = RouteStatus.NON_QOS if non_qos else RouteStatus.SATISFIED
                return RoutingOutcome(status=status, path=path, iterations_used=1)
            best, best_cost = path, path_cost(net, path.hops, max_cd)
    else:
        g = ideal_parallelogram(src, dst, d, abs(b) - d, c) if abs(b) > d else None
        threshold = max_cd
        for i in range(iters_allowed):
            iterations = i + 1
            if g is not None:
                assign_costs(g, net, threshold)
                try:
                    path = dijkstra_in_subgraph(g)
                except UnreachableError:
                    path = None
            else:
                path = _cheapest_minimal_walk(src, dst, net, threshold)
            if path is not None:
                if non_qos or is_satisfying_path(path, fc, net):
                    _install(net, f, path, router)
                    status = RouteStatus.NON_QOS if non_qos else RouteStatus.SATISFIED
                    return RoutingOutcome(
                        status=status, path=path, iterations_used=iterations
                    )
                cost = path_cost(net, path.hops, threshold)
                if cost < best_cost:
                    best, best_cost = path, cost
            threshold += delta_cd

    fallback = best if best is not None else line
    _install(net, f, fallback, router)
    status = RouteStatus.NON_QOS if non_qos else RouteStatus.UNSATISFIABLE
    return RoutingOutcome(status=status, path=fallback, iterations_used=iterations)


# ---------------------------------------------------------------------------
# Congestion / failure marking
# ---------------------------------------------------------------------------


def mark_link(net: NetworkView, edge: Edge, reason: LinkMark) -> list[int]:
    """Exclude a link from routing and re-route every flow crossing it.

    Returns the ids of the flows that were re-routed, in admission order.
    """
    key = edge_key(*edge)
    if key not in net.metrics:
        raise ValueError(f"unknown edge {edge}")
    if reason is LinkMark.FAILED:
        net.failed_edges.add(key)
    else:
        net.congested_edges.add(key)

    rerouted: list[int] = []
    for flow_id in list(net.flows):
        flow = net.flows[flow_id]
        if key not in {edge_key(a, b) for a, b in zip(flow.hops, flow.hops[1:])}:
            continue
        if flow.router is not None:
            flow.router.route(flow.request, net)
        else:
            route_flow(flow.request, net)
        rerouted.append(flow_id)
    return rerouted


def fail_satellite(net: NetworkView, sat_id: int) -> list[int]:
    """Mark a satellite and all six incident links failed; re-route flows."""
    coord = net.constellation.coord_of(sat_id)
    net.failed_satellites.add(sat_id)
    rerouted: list[int] = []
    for nbr, _ in neighbors(coord, net.constellation):
        for fid in mark_link(net, (coord, nbr), LinkMark.FAILED):
            if fid not in rerouted:
                rerouted.append(fid)
    return rerouted


class ParallelogramRouter:
    """Line walk + parallelogram-restricted Dijkstra with CD relaxation."""

    name = "parallelogram"

    def __init__(self, max_cd: float = 0.82, delta_cd: float = 0.05):
        self.max_cd = max_cd
        self.delta_cd = delta_cd

    def route(self, f: "FlowRequest", net: NetworkView) -> RoutingOutcome:
        start = time.perf_counter()
        outcome = route_flow(f, net, self.max_cd, self.delta_cd, router=self)
        outcome.route_time_ms = (time.perf_counter() - start) * 1000.0
        return outcome
