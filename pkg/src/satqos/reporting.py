"""CSV emission for per-flow, per-tick and plot-ready series.

All numeric fields use fixed decimal notation and rows follow a
deterministic order (flow id, then tick), so reports from equal seeds are
byte-comparable apart from wall-clock routing times.
"""
from __future__ import annotations

import csv
import hashlib
from pathlib import Path
from typing import Iterable, Sequence

from .sim_engine import FlowRequest, MetricsReport

PER_FLOW_HEADER = [
    "flow_id",
    "arrival_s",
    "src",
    "dst",
    "qos_enabled",
    "satisfied",
    "hops",
    "routing_time_ms",
    "latency_ms",
    "plr",
]
PER_TICK_HEADER = ["t_s", "avg_cd", "flows_active"]
SUMMARY_HEADER = [
    "scheme",
    "mean_routing_time_ms",
    "mean_latency_ms",
    "mean_plr",
    "satisfaction_ratio",
]


def _bool(v: bool) -> str:
    return "true" if v else "false"


def write_per_flow_csv(report: MetricsReport, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PER_FLOW_HEADER)
        for r in sorted(report.per_flow, key=lambda r: r.flow_id):
            w.writerow(
                [
                    r.flow_id,
                    f"{r.arrival_s:.1f}",
                    r.src,
                    r.dst,
                    _bool(r.qos_enabled),
                    _bool(r.satisfied),
                    r.hops,
                    f"{r.routing_time_ms:.6f}",
                    f"{r.latency_ms:.6f}",
                    f"{r.plr:.8f}",
                ]
            )


def write_per_tick_csv(report: MetricsReport, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PER_TICK_HEADER)
        for r in report.per_tick:
            w.writerow([r.t_s, f"{r.avg_cd:.6f}", r.flows_active])


def write_events_csv(report: MetricsReport, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_s", "event", "detail"])
        for t, kind, detail in report.events:
            w.writerow([t, kind, detail])


def write_summary_csv(reports: Sequence[MetricsReport], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_HEADER)
        for r in reports:
            w.writerow(
                [
                    r.scheme,
                    f"{r.mean_routing_time_ms() or 0.0:.6f}",
                    f"{r.mean_latency_ms() or 0.0:.6f}",
                    f"{r.mean_plr() or 0.0:.8f}",
                    f"{r.satisfaction_ratio() or 0.0:.6f}",
                ]
            )


def moving_average(values: Sequence[float], window: int) -> list[float]:
    """Trailing moving average; the window shrinks over the prefix so the
    output has the same length as the input."""
    if window < 1:
        raise ValueError("window must be at least 1")
    out: list[float] = []
    acc = 0.0
    for i, v in enumerate(values):
        acc += v
        if i >= window:
            acc -= values[i - window]
        out.append(acc / min(i + 1, window))
    return out


def _group_by_hops(records, value) -> list[tuple[int, float, int]]:
    groups: dict[int, list[float]] = {}
    for r in records:
        groups.setdefault(r.hops, []).append(value(r))
    return [
        (h, sum(vs) / len(vs), len(vs)) for h, vs in sorted(groups.items())
    ]


def emit_plot_data(report: MetricsReport, out_dir: Path, window: int = 50) -> None:
    """Long-form CSV series for external plotting.

    Writes average congestion vs time, routing time / latency / loss vs
    hop count, and windowed moving averages of latency and loss over the
    flow arrival sequence.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scheme = report.scheme

    with open(out_dir / f"{scheme}_avg_cd_vs_time.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_s", "avg_cd"])
        for r in report.per_tick:
            w.writerow([r.t_s, f"{r.avg_cd:.6f}"])

    flows = sorted(report.per_flow, key=lambda r: r.flow_id)
    series = [
        ("routing_time_vs_hops.csv", "mean_routing_time_ms", lambda r: r.routing_time_ms),
        ("latency_vs_hops.csv", "mean_latency_ms", lambda r: r.latency_ms),
        ("plr_vs_hops.csv", "mean_plr", lambda r: r.plr),
    ]
    for fname, col, value in series:
        with open(out_dir / f"{scheme}_{fname}", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["hops", col, "flows"])
            for hops, mean, count in _group_by_hops(flows, value):
                w.writerow([hops, f"{mean:.6f}", count])

    for fname, col, value in [
        ("latency_moving_avg.csv", "latency_ms_avg", lambda r: r.latency_ms),
        ("plr_moving_avg.csv", "plr_avg", lambda r: r.plr),
    ]:
        values = [value(r) for r in flows]
        avg = moving_average(values, window) if values else []
        with open(out_dir / f"{scheme}_{fname}", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["arrival_s", col])
            for r, v in zip(flows, avg):
                w.writerow([f"{r.arrival_s:.1f}", f"{v:.6f}"])


def workload_digest(workload: Iterable[FlowRequest]) -> str:
    """Stable hash of a flow list, used to prove routers shared a workload."""
    h = hashlib.sha256()
    for f in workload:
        c = f.constraints
        h.update(
            (
                f"{f.flow_id},{f.arrival_time!r},{f.src},{f.dst},{f.demand_gbps!r},"
                f"{c.qos_enabled},{c.min_bandwidth_gbps!r},{c.max_delay_ms!r},"
                f"{c.max_jitter_ms!r},{c.max_plr!r};"
            ).encode()
        )
    return h.hexdigest()
