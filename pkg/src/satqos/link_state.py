"""Per-link metrics and the score/cost function used for routing.

A link's fitness score combines available bandwidth (Gbps), the inverse of
its propagation latency (ms), its packet-delivery probability, the inverse
of its jitter (ms) and a stability flag, each with a configurable weight.
Cost is the reciprocal of the score; congested or failed links are priced
at MAX_COST so they drop out of any route while alternatives exist.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .constellation import SPEED_OF_LIGHT_KM_S

# Sentinel cost excluding a link from new routes.  Any value larger than
# the sum of all finite link costs in a desk-scale grid works; 1e9 leaves
# several orders of magnitude of headroom.
MAX_COST = 1e9

# A link counts as congested once its load exceeds this fraction of its
# bandwidth; above it the link advertises zero available bandwidth.
DEFAULT_CD_THRESHOLD = 0.8


@dataclass
class LinkMetrics:
    bandwidth_gbps: float
    load_gbps: float = 0.0
    packets_tx: int = 0
    packets_rx: int = 0
    latency_history: list[float] = field(default_factory=list)
    stability_flag: int = 0
    distance_km: float = 0.0
    initial_plr: float = 0.0

    def __post_init__(self) -> None:
        if self.bandwidth_gbps <= 0:
            raise ValueError("bandwidth must be positive")
        if self.packets_rx > self.packets_tx:
            raise ValueError("received packets cannot exceed transmitted packets")

    @property
    def latency_ms(self) -> float:
        return propagation_delay_ms(self.distance_km)


@dataclass(frozen=True)
class ScoreWeights:
    k1: float = 0.55  # available bandwidth (Gbps)
    k2: float = 0.30  # 1 / latency (ms)
    k3: float = 0.15  # 1 - packet loss ratio
    k4: float = 0.0  # 1 / jitter (ms)
    k5: float = 0.0  # stability flag

    def __post_init__(self) -> None:
        ks = (self.k1, self.k2, self.k3, self.k4, self.k5)
        if any(k < 0 for k in ks):
            raise ValueError("weights must be non-negative")
        if all(k == 0 for k in ks):
            raise ValueError("at least one weight must be positive")


@dataclass(frozen=True)
class LinkScore:
    score: float
    cost: float


def congestion_degree(m: LinkMetrics) -> float:
    """Load as a fraction of bandwidth: 0 idle, 1 full, >1 over-congested."""
    return m.load_gbps / m.bandwidth_gbps


def propagation_delay_ms(distance_km: float) -> float:
    if distance_km < 0:
        raise ValueError("distance must be non-negative")
    return distance_km / SPEED_OF_LIGHT_KM_S * 1000.0


def packet_loss_ratio(m: LinkMetrics) -> float:
    """Fraction of transmitted packets lost on the link.

    With no transmissions observed yet the counters are uninformative and
    the link's configured initial ratio is reported instead.
    """
    if m.packets_tx == 0:
        return m.initial_plr
    return (m.packets_tx - m.packets_rx) / m.packets_tx


def available_bandwidth(m: LinkMetrics, cd_threshold: float = DEFAULT_CD_THRESHOLD) -> float:
    """Bandwidth still usable by new flows, in Gbps.

    Zero once the congestion degree exceeds the threshold (strictly), and
    never negative even when the link is loaded past capacity.
    """
    if not 0 < cd_threshold <= 1:
        raise ValueError("cd_threshold must be in (0, 1]")
    if congestion_degree(m) > cd_threshold:
        return 0.0
    return max(m.bandwidth_gbps - m.load_gbps, 0.0)


def jitter_ms(history: Sequence[float], start_time: int, t: int) -> float:
    """Mean absolute latency variation over [start_time, t].

    Averages |sample(k) - sample(k+1)| across the window; with fewer than
    two samples there is no observed variation and the jitter is 0.
    """
    if t <= start_time:
        return 0.0
    window = list(history[start_time : t + 1])
    if len(window) < 2:
        return 0.0
    total = sum(abs(a - b) for a, b in zip(window, window[1:]))
    return total / (t - start_time)


def _weighted_inverse(weight: float, value: float) -> float:
    # Zero weights short-circuit so k/x never divides by zero when x == 0.
    if weight == 0.0:
        return 0.0
    return weight / value


def raw_score(
    m: LinkMetrics,
    w: ScoreWeights,
    cd_threshold: float = DEFAULT_CD_THRESHOLD,
    jitter: float | None = None,
) -> float:
    """The fitness score without any congestion/failure pricing applied."""
    ab = available_bandwidth(m, cd_threshold)
    latency = m.latency_ms
    if latency <= 0:
        raise ValueError("link latency must be positive to be scored")
    if jitter is None:
        jitter = jitter_ms(m.latency_history, 0, len(m.latency_history) - 1)
    plr = packet_loss_ratio(m)
    return (
        w.k1 * ab
        + _weighted_inverse(w.k2, latency)
        + w.k3 * (1.0 - plr)
        + _weighted_inverse(w.k4, jitter)
        + w.k5 * m.stability_flag
    )


def link_score(
    m: LinkMetrics,
    w: ScoreWeights,
    cd_threshold: float = DEFAULT_CD_THRESHOLD,
    failed: bool = False,
    jitter: float | None = None,
) -> LinkScore:
    """Score the link and derive its routing cost.

    cost = 1/score for a healthy link; congested (CD above threshold) or
    failed links, and links whose score degenerates to zero, get MAX_COST.
    """
    score = raw_score(m, w, cd_threshold, jitter=jitter)
    if failed or congestion_degree(m) > cd_threshold or score <= 0.0:
        return LinkScore(score=score, cost=MAX_COST)
    return LinkScore(score=score, cost=1.0 / score)
