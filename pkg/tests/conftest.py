import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from satqos.constellation import (
    Constellation,
    ConstellationConfig,
    build_constellation,
    inter_satellite_distance,
)
from satqos.link_state import LinkMetrics, ScoreWeights, propagation_delay_ms
from satqos.network import NetworkView, edge_key, grid_edges
from satqos.constellation import IslKind


@pytest.fixture
def grid10() -> Constellation:
    return build_constellation(ConstellationConfig())


@pytest.fixture
def grid3() -> Constellation:
    return build_constellation(ConstellationConfig(num_orbits=3, sats_per_orbit=3))


def make_network(
    c: Constellation,
    bandwidth: float = 4.0,
    cd: float = 0.5,
    plr: float = 0.001,
    uniform_distance_km: float | None = None,
    weights: ScoreWeights | None = None,
) -> NetworkView:
    """Network with identical metrics on every link (distance optionally
    forced uniform so latency-shortest equals hop-shortest)."""
    metrics = {}
    for (a, b), kind in grid_edges(c):
        d = (
            uniform_distance_km
            if uniform_distance_km is not None
            else inter_satellite_distance(a, b, c, 0.0)
        )
        metrics[edge_key(a, b)] = LinkMetrics(
            bandwidth_gbps=bandwidth,
            load_gbps=cd * bandwidth,
            latency_history=[propagation_delay_ms(d)],
            stability_flag=1 if kind is IslKind.INTRA_ORBIT else 0,
            distance_km=d,
            initial_plr=plr,
        )
    return NetworkView(
        constellation=c,
        metrics=metrics,
        weights=weights if weights is not None else ScoreWeights(),
    )
