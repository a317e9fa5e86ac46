"""Reference routers the grid router is compared against.

All three operate on the full constellation graph with propagation
latency as the edge weight: a single-source Dijkstra that refuses
congested links, a K-shortest-paths selector that picks the least
congested QoS-satisfying candidate, and a bounded all-simple-paths DFS
that keeps the cheapest feasible path it enumerates.
"""
from __future__ import annotations

import heapq
import time
from typing import TYPE_CHECKING, Callable

from .constellation import GridCoord, neighbors
from .link_state import MAX_COST
from .network import NetworkView
from .router import (
    RouteStatus,
    RoutingOutcome,
    GridPath,
    UnreachableError,
    _dijkstra,
    _install,
    bresenham_path,
    is_satisfying_path,
)

if TYPE_CHECKING:  # pragma: no cover
    from .sim_engine import FlowRequest

# Hard ceiling on DFS work when the destination is unreachable inside the
# pruned graph; proportional to the requested number of paths.
DFS_EXPANSION_FACTOR = 50


def _endpoints(f: "FlowRequest", net: NetworkView) -> tuple[GridCoord, GridCoord]:
    c = net.constellation
    src = f.src if isinstance(f.src, GridCoord) else c.coord_of(f.src)
    dst = f.dst if isinstance(f.dst, GridCoord) else c.coord_of(f.dst)
    return src, dst


def _grid_neighbors(net: NetworkView) -> Callable[[GridCoord], list[GridCoord]]:
    c = net.constellation
    return lambda v: [w for w, _ in neighbors(v, c)]


def _latency_if_open(net: NetworkView, congestion_pruned: bool):
    """Latency weight; blocked links (and congested ones, if pruning) are
    priced out."""

    def cost(u: GridCoord, v: GridCoord) -> float:
        if net.is_edge_blocked(u, v):
            return MAX_COST
        if congestion_pruned and net.edge_cd(u, v) > net.cd_threshold:
            return MAX_COST
        return net.edge_latency_ms(u, v)

    return cost


def _classify(
    f: "FlowRequest", net: NetworkView, path: GridPath | None, satisfied: bool
) -> RouteStatus:
    if not f.constraints.qos_enabled:
        return RouteStatus.NON_QOS
    if path is not None and satisfied:
        return RouteStatus.SATISFIED
    return RouteStatus.UNSATISFIABLE


def global_dijkstra(f: "FlowRequest", net: NetworkView, router=None) -> RoutingOutcome:
    """Latency-shortest path over the whole graph, congested links excluded.

    When pruning disconnects the endpoints the congestion restriction is
    dropped so a best-effort path can still be reported.
    """
    src, dst = _endpoints(f, net)
    nbrs = _grid_neighbors(net)
    path: GridPath | None = None
    try:
        _, hops = _dijkstra(src, dst, nbrs, _latency_if_open(net, True))
        path = GridPath.from_hops(hops)
    except UnreachableError:
        try:
            _, hops = _dijkstra(src, dst, nbrs, _latency_if_open(net, False))
            path = GridPath.from_hops(hops)
        except UnreachableError:
            return RoutingOutcome(status=_classify(f, net, None, False), path=None)
    satisfied = is_satisfying_path(path, f.constraints, net)
    _install(net, f, path, router)
    return RoutingOutcome(status=_classify(f, net, path, satisfied), path=path)


def yen_k_shortest(
    net: NetworkView, src: GridCoord, dst: GridCoord, k: int
) -> list[tuple[float, tuple[GridCoord, ...]]]:
    """The k cheapest loop-free paths by latency, in nondecreasing order.

    Classic spur-node construction: for each prefix of the last accepted
    path, the next edges used by already-accepted paths sharing that
    prefix are banned, the prefix interior is removed, and a shortest
    spur is grafted on.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    nbrs = _grid_neighbors(net)
    base_cost = _latency_if_open(net, False)

    cost, hops = _dijkstra(src, dst, nbrs, base_cost)
    accepted: list[tuple[float, tuple[GridCoord, ...]]] = [(cost, hops)]
    candidates: list[tuple[float, int, tuple[GridCoord, ...]]] = []
    seen: set[tuple[GridCoord, ...]] = {hops}

    while len(accepted) < k:
        _, prev = accepted[-1]
        for i in range(len(prev) - 1):
            spur = prev[i]
            root = prev[: i + 1]
            banned_edges = {
                (p[i], p[i + 1])
                for _, p in accepted
                if len(p) > i + 1 and p[: i + 1] == root
            }
            banned_nodes = set(root[:-1])

            def spur_cost(u: GridCoord, v: GridCoord) -> float:
                if (u, v) in banned_edges:
                    return MAX_COST
                return base_cost(u, v)

            def spur_nbrs(v: GridCoord) -> list[GridCoord]:
                return [w for w in nbrs(v) if w not in banned_nodes]

            try:
                sc, sp = _dijkstra(spur, dst, spur_nbrs, spur_cost)
            except UnreachableError:
                continue
            total = root + sp[1:]
            if total in seen:
                continue
            seen.add(total)
            root_cost = sum(base_cost(a, b) for a, b in zip(root, root[1:]))
            heapq.heappush(candidates, (root_cost + sc, len(total), total))
        if not candidates:
            break
        c, _, p = heapq.heappop(candidates)
        accepted.append((c, p))
    return accepted


def k_shortest_route(
    f: "FlowRequest", net: NetworkView, k: int = 4, router=None
) -> RoutingOutcome:
    """Pick the least congested QoS-satisfying path among the k cheapest."""
    src, dst = _endpoints(f, net)
    try:
        ranked = yen_k_shortest(net, src, dst, k)
    except UnreachableError:
        return RoutingOutcome(status=_classify(f, net, None, False), path=None)

    paths = [GridPath.from_hops(p) for _, p in ranked]
    chosen: GridPath | None = None
    satisfied = False
    if f.constraints.qos_enabled:
        best_key = None
        for idx, p in enumerate(paths):
            if not is_satisfying_path(p, f.constraints, net):
                continue
            worst_cd = max(net.edge_cd(a, b) for a, b in zip(p.hops, p.hops[1:]))
            key = (worst_cd, idx)
            if best_key is None or key < best_key:
                best_key, chosen = key, p
        satisfied = chosen is not None
    if chosen is None:
        chosen = paths[0]
    _install(net, f, chosen, router)
    return RoutingOutcome(status=_classify(f, net, chosen, satisfied), path=chosen)


def dfs_enumerate_paths(
    net: NetworkView,
    src: GridCoord,
    dst: GridCoord,
    max_paths: int,
    hop_bound: int,
) -> list[tuple[GridCoord, ...]]:
    """Simple paths from src to dst in depth-first order, skipping
    congested or blocked links, cut off at max_paths and a hop bound."""
    c = net.constellation
    expansion_cap = DFS_EXPANSION_FACTOR * max_paths

    def open_nbrs(v: GridCoord) -> list[GridCoord]:
        out = [
            w
            for w, _ in neighbors(v, c)
            if not net.is_edge_blocked(v, w) and net.edge_cd(v, w) <= net.cd_threshold
        ]
        out.sort()
        return out

    found: list[tuple[GridCoord, ...]] = []
    stack: list[tuple[GridCoord, ...]] = [(src,)]
    expansions = 0
    while stack and len(found) < max_paths and expansions < expansion_cap:
        path = stack.pop()
        node = path[-1]
        expansions += 1
        if node == dst:
            found.append(path)
            continue
        if len(path) - 1 >= hop_bound:
            continue
        on_path = set(path)
        for w in reversed(open_nbrs(node)):
            if w not in on_path:
                stack.append(path + (w,))
    return found


def bounded_dfs_route(
    f: "FlowRequest", net: NetworkView, max_paths: int = 10_000, router=None
) -> RoutingOutcome:
    """Exhaustive (capped) path enumeration, then cheapest feasible pick.

    The hop bound is twice the line-walk distance; congested links are
    never traversed.  Among enumerated paths the minimum-latency one that
    satisfies the flow wins; with no satisfying path the minimum-latency
    enumerated path is reported as the best effort.
    """
    if max_paths < 1:
        raise ValueError("max_paths must be at least 1")
    src, dst = _endpoints(f, net)
    hop_bound = 2 * bresenham_path(src, dst, net.constellation).hop_count
    found = dfs_enumerate_paths(net, src, dst, max_paths, hop_bound)

    if not found:
        # Nothing within bounds: fall back to the uncongested-unpruned
        # shortest path purely to report a best-effort route.
        try:
            _, hops = _dijkstra(
                src, dst, _grid_neighbors(net), _latency_if_open(net, False)
            )
        except UnreachableError:
            return RoutingOutcome(status=_classify(f, net, None, False), path=None)
        path = GridPath.from_hops(hops)
        _install(net, f, path, router)
        return RoutingOutcome(status=_classify(f, net, path, False), path=path)

    def latency_key(p: tuple[GridCoord, ...]) -> tuple[float, int, tuple]:
        return (net.path_latency_ms(list(p)), len(p), p)

    chosen: tuple[GridCoord, ...] | None = None
    satisfied = False
    if f.constraints.qos_enabled:
        sat = [
            p
            for p in found
            if is_satisfying_path(GridPath.from_hops(p), f.constraints, net)
        ]
        if sat:
            chosen = min(sat, key=latency_key)
            satisfied = True
    if chosen is None:
        chosen = min(found, key=latency_key)
    path = GridPath.from_hops(chosen)
    _install(net, f, path, router)
    return RoutingOutcome(status=_classify(f, net, path, satisfied), path=path)


class GlobalDijkstraRouter:
    """Whole-graph latency Dijkstra with congested links excluded."""

    name = "dijkstra"

    def route(self, f: "FlowRequest", net: NetworkView) -> RoutingOutcome:
        start = time.perf_counter()
        outcome = global_dijkstra(f, net, router=self)
        outcome.route_time_ms = (time.perf_counter() - start) * 1000.0
        return outcome


class KShortestPathsRouter:
    """Yen-style K-shortest-paths selection (least congested satisfier)."""

    name = "ksp"

    def __init__(self, k: int = 4):
        if k < 1:
            raise ValueError("k must be at least 1")
        self.k = k

    def route(self, f: "FlowRequest", net: NetworkView) -> RoutingOutcome:
        start = time.perf_counter()
        outcome = k_shortest_route(f, net, self.k, router=self)
        outcome.route_time_ms = (time.perf_counter() - start) * 1000.0
        return outcome


class BoundedDfsRouter:
    """Capped all-simple-paths DFS, cheapest feasible path wins."""

    name = "dfs"

    def __init__(self, max_paths: int = 10_000):
        if max_paths < 1:
            raise ValueError("max_paths must be at least 1")
        self.max_paths = max_paths

    def route(self, f: "FlowRequest", net: NetworkView) -> RoutingOutcome:
        start = time.perf_counter()
        outcome = bounded_dfs_route(f, net, self.max_paths, router=self)
        outcome.route_time_ms = (time.perf_counter() - start) * 1000.0
        return outcome
