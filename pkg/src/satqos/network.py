"""Mutable controller-side view of the constellation and its link state.

One NetworkView instance is owned by a single simulation run; routing
code treats it as a read-only snapshot while the engine mutates metrics
between events.  Edges are keyed by the canonical (smaller, larger)
coordinate pair.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Iterable

from .constellation import Constellation, GridCoord, IslKind, neighbors
from .link_state import (
    DEFAULT_CD_THRESHOLD,
    LinkMetrics,
    ScoreWeights,
    congestion_degree,
    jitter_ms,
    packet_loss_ratio,
)

Edge = tuple[GridCoord, GridCoord]


def edge_key(a: GridCoord, b: GridCoord) -> Edge:
    return (a, b) if a <= b else (b, a)


@dataclass
class InstalledFlow:
    flow_id: int
    request: Any  # FlowRequest; kept loose to avoid an import cycle
    hops: list[GridCoord]
    demand_gbps: float
    router: Any  # the router that produced the path, reused on re-route


@dataclass
class NetworkView:
    constellation: Constellation
    metrics: dict[Edge, LinkMetrics]
    weights: ScoreWeights = field(default_factory=ScoreWeights)
    cd_threshold: float = DEFAULT_CD_THRESHOLD
    failed_edges: set[Edge] = field(default_factory=set)
    congested_edges: set[Edge] = field(default_factory=set)
    failed_satellites: set[int] = field(default_factory=set)
    state_index: int = 0
    flows: dict[int, InstalledFlow] = field(default_factory=dict)
    controller: Any = None

    # -- topology ---------------------------------------------------------

    def all_edges(self) -> Iterable[Edge]:
        return self.metrics.keys()

    def edge_metrics(self, a: GridCoord, b: GridCoord) -> LinkMetrics:
        return self.metrics[edge_key(a, b)]

    def is_edge_failed(self, a: GridCoord, b: GridCoord) -> bool:
        key = edge_key(a, b)
        c = self.constellation
        return (
            key in self.failed_edges
            or c.id_of(a) in self.failed_satellites
            or c.id_of(b) in self.failed_satellites
        )

    def is_edge_blocked(self, a: GridCoord, b: GridCoord) -> bool:
        """Failed or explicitly marked congested: out of new routes."""
        return self.is_edge_failed(a, b) or edge_key(a, b) in self.congested_edges

    def live_neighbors(self, s: GridCoord) -> list[GridCoord]:
        """Grid neighbours reachable over non-failed links."""
        return [
            n
            for n, _ in neighbors(s, self.constellation)
            if not self.is_edge_failed(s, n)
        ]

    # -- per-edge quantities ----------------------------------------------

    def edge_latency_ms(self, a: GridCoord, b: GridCoord) -> float:
        return self.edge_metrics(a, b).latency_ms

    def edge_jitter_ms(self, a: GridCoord, b: GridCoord) -> float:
        hist = self.edge_metrics(a, b).latency_history
        return jitter_ms(hist, 0, len(hist) - 1)

    def edge_cd(self, a: GridCoord, b: GridCoord) -> float:
        return congestion_degree(self.edge_metrics(a, b))

    # -- path aggregates ----------------------------------------------------

    @staticmethod
    def _pairs(hops: list[GridCoord]) -> Iterable[Edge]:
        return zip(hops, hops[1:])

    def path_latency_ms(self, hops: list[GridCoord]) -> float:
        return sum(self.edge_latency_ms(a, b) for a, b in self._pairs(hops))

    def path_plr(self, hops: list[GridCoord]) -> float:
        """End-to-end loss assuming independent per-link losses."""
        survive = 1.0
        for a, b in self._pairs(hops):
            survive *= 1.0 - packet_loss_ratio(self.edge_metrics(a, b))
        return 1.0 - survive

    def path_max_jitter_ms(self, hops: list[GridCoord]) -> float:
        return max(
            (self.edge_jitter_ms(a, b) for a, b in self._pairs(hops)), default=0.0
        )

    def path_has_blocked_edge(self, hops: list[GridCoord]) -> bool:
        return any(self.is_edge_blocked(a, b) for a, b in self._pairs(hops))

    # -- load bookkeeping ---------------------------------------------------

    def add_path_load(self, hops: list[GridCoord], demand_gbps: float) -> None:
        for a, b in self._pairs(hops):
            self.edge_metrics(a, b).load_gbps += demand_gbps

    def remove_path_load(self, hops: list[GridCoord], demand_gbps: float) -> None:
        for a, b in self._pairs(hops):
            m = self.edge_metrics(a, b)
            m.load_gbps = max(m.load_gbps - demand_gbps, 0.0)

    def average_cd(self) -> float:
        """Mean congestion degree across all non-failed links."""
        values = [
            congestion_degree(m)
            for key, m in self.metrics.items()
            if not self.is_edge_failed(*key)
        ]
        if not values:
            raise ValueError("no live edges to average over")
        return sum(values) / len(values)

    def clone(self) -> "NetworkView":
        """Independent copy used to run several routers on one initial state.

        The constellation is immutable and shared; link metrics, marks and
        the flow registry are copied.  The controller is not carried over
        (each run attaches its own).
        """
        metrics = {
            key: replace(m, latency_history=list(m.latency_history))
            for key, m in self.metrics.items()
        }
        flows = {
            fid: InstalledFlow(
                flow_id=f.flow_id,
                request=f.request,
                hops=list(f.hops),
                demand_gbps=f.demand_gbps,
                router=f.router,
            )
            for fid, f in self.flows.items()
        }
        return NetworkView(
            constellation=self.constellation,
            metrics=metrics,
            weights=self.weights,
            cd_threshold=self.cd_threshold,
            failed_edges=set(self.failed_edges),
            congested_edges=set(self.congested_edges),
            failed_satellites=set(self.failed_satellites),
            state_index=self.state_index,
            flows=flows,
            controller=None,
        )


def build_network(
    c: Constellation,
    metrics: dict[Edge, LinkMetrics],
    weights: ScoreWeights | None = None,
    cd_threshold: float = DEFAULT_CD_THRESHOLD,
) -> NetworkView:
    return NetworkView(
        constellation=c,
        metrics=metrics,
        weights=weights if weights is not None else ScoreWeights(),
        cd_threshold=cd_threshold,
    )


def grid_edges(c: Constellation) -> list[tuple[Edge, IslKind]]:
    """Every undirected ISL of the torus with its kind, deterministic order."""
    seen: set[Edge] = set()
    out: list[tuple[Edge, IslKind]] = []
    for sat in c.satellites:
        for n, kind in neighbors(sat.coord, c):
            key = edge_key(sat.coord, n)
            if key not in seen:
                seen.add(key)
                out.append((key, kind))
    return out
