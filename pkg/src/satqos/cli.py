"""Command-line entry point: scenario ingestion and comparison runs.

A scenario is one YAML document with five sections (constellation, links,
routing, workload, output) plus the scalar duration and heartbeat keys;
it fully determines a run.  `run_comparison` pushes the identical
workload through every configured router on independent copies of the
initial link state and writes per-flow/per-tick CSVs, plot series, a
summary table and a MANIFEST with the workload hash.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

import yaml

from .constellation import ConstellationConfig, DistanceModel, build_constellation
from .link_state import ScoreWeights
from .reporting import (
    emit_plot_data,
    workload_digest,
    write_events_csv,
    write_per_flow_csv,
    write_per_tick_csv,
    write_summary_csv,
)
from .sim_engine import (
    LinkInitConfig,
    OutputConfig,
    RoutingConfig,
    Scenario,
    WorkloadConfig,
    generate_workload,
    initialize_network,
    make_router,
    run,
)

log = logging.getLogger("satqos")

KNOWN_ROUTERS = ("parallelogram", "dijkstra", "ksp", "dfs")
_SECTIONS = ("constellation", "links", "routing", "workload", "output")


class ScenarioError(ValueError):
    """A scenario document is malformed, incomplete or out of range."""


def _check_keys(section: str, data: dict, allowed: tuple[str, ...]) -> None:
    for key in data:
        if key not in allowed:
            raise ScenarioError(f"unknown key '{key}' in section '{section}'")


def _note_defaults(section: str, data: dict, allowed: tuple[str, ...]) -> None:
    omitted = [k for k in allowed if k not in data]
    if omitted:
        log.info("scenario section '%s': defaults applied for %s", section, omitted)


def _pair(section: str, key: str, value) -> tuple[float, float]:
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 2
        or not all(isinstance(v, (int, float)) for v in value)
    ):
        raise ScenarioError(f"'{section}.{key}' must be a [low, high] pair")
    lo, hi = float(value[0]), float(value[1])
    if lo > hi:
        raise ScenarioError(f"'{section}.{key}' range is inverted")
    return lo, hi


def _unit_range(section: str, key: str, value) -> tuple[float, float]:
    lo, hi = _pair(section, key, value)
    if not (0.0 <= lo and hi <= 1.0):
        raise ScenarioError(f"'{section}.{key}' must lie within [0, 1]")
    return lo, hi


def _parse_constellation(data: dict) -> ConstellationConfig:
    allowed = (
        "num_orbits",
        "sats_per_orbit",
        "altitude_km",
        "earth_radius_km",
        "atm_height_km",
        "distance_model",
        "state_duration_s",
    )
    _check_keys("constellation", data, allowed)
    _note_defaults("constellation", data, allowed)
    base = ConstellationConfig()
    model = data.get("distance_model", base.distance_model.value)
    try:
        model = DistanceModel(model)
    except ValueError:
        raise ScenarioError(
            f"'constellation.distance_model' must be one of "
            f"{[m.value for m in DistanceModel]}, got {model!r}"
        ) from None
    return ConstellationConfig(
        num_orbits=int(data.get("num_orbits", base.num_orbits)),
        sats_per_orbit=int(data.get("sats_per_orbit", base.sats_per_orbit)),
        altitude_km=float(data.get("altitude_km", base.altitude_km)),
        earth_radius_km=float(data.get("earth_radius_km", base.earth_radius_km)),
        atm_height_km=float(data.get("atm_height_km", base.atm_height_km)),
        distance_model=model,
        state_duration_s=(
            float(data["state_duration_s"])
            if data.get("state_duration_s") is not None
            else None
        ),
    )


def _parse_links(data: dict) -> LinkInitConfig:
    allowed = (
        "intra_orbit_bandwidth_gbps",
        "inter_orbit_bandwidth_gbps",
        "initial_cd",
        "initial_plr",
    )
    _check_keys("links", data, allowed)
    _note_defaults("links", data, allowed)
    base = LinkInitConfig()
    return LinkInitConfig(
        intra_orbit_bandwidth_gbps=float(
            data.get("intra_orbit_bandwidth_gbps", base.intra_orbit_bandwidth_gbps)
        ),
        inter_orbit_bandwidth_gbps=(
            _pair("links", "inter_orbit_bandwidth_gbps", data["inter_orbit_bandwidth_gbps"])
            if "inter_orbit_bandwidth_gbps" in data
            else base.inter_orbit_bandwidth_gbps
        ),
        initial_cd=(
            _unit_range("links", "initial_cd", data["initial_cd"])
            if "initial_cd" in data
            else base.initial_cd
        ),
        initial_plr=(
            _unit_range("links", "initial_plr", data["initial_plr"])
            if "initial_plr" in data
            else base.initial_plr
        ),
    )


def _parse_routing(data: dict) -> RoutingConfig:
    allowed = (
        "weights",
        "max_cd",
        "delta_cd",
        "cd_threshold",
        "routers",
        "ksp_k",
        "dfs_max_paths",
    )
    _check_keys("routing", data, allowed)
    _note_defaults("routing", data, allowed)
    base = RoutingConfig()
    weights = base.weights
    if "weights" in data:
        raw = data["weights"]
        if not isinstance(raw, (list, tuple)) or len(raw) != 5:
            raise ScenarioError("'routing.weights' must be a list of five numbers")
        weights = ScoreWeights(*[float(v) for v in raw])
    routers = tuple(data.get("routers", base.routers))
    for r in routers:
        if r not in KNOWN_ROUTERS:
            raise ScenarioError(
                f"'routing.routers' names unknown router '{r}' "
                f"(known: {list(KNOWN_ROUTERS)})"
            )
    max_cd = float(data.get("max_cd", base.max_cd))
    delta_cd = float(data.get("delta_cd", base.delta_cd))
    cd_threshold = float(data.get("cd_threshold", base.cd_threshold))
    if not 0.0 < max_cd < 1.0:
        raise ScenarioError("'routing.max_cd' must lie in (0, 1)")
    if delta_cd <= 0.0:
        raise ScenarioError("'routing.delta_cd' must be positive")
    if not 0.0 < cd_threshold <= 1.0:
        raise ScenarioError("'routing.cd_threshold' must lie in (0, 1]")
    return RoutingConfig(
        weights=weights,
        max_cd=max_cd,
        delta_cd=delta_cd,
        cd_threshold=cd_threshold,
        routers=routers,
        ksp_k=int(data.get("ksp_k", base.ksp_k)),
        dfs_max_paths=int(data.get("dfs_max_paths", base.dfs_max_paths)),
    )


def _parse_workload(data: dict) -> WorkloadConfig:
    allowed = (
        "seed",
        "n_flows",
        "qos_fraction",
        "qos_bandwidth_gbps",
        "nonqos_demand_gbps",
        "max_delay_ms",
        "max_plr",
        "max_jitter_ms",
    )
    _check_keys("workload", data, allowed)
    _note_defaults("workload", data, allowed)
    base = WorkloadConfig()
    qos_fraction = float(data.get("qos_fraction", base.qos_fraction))
    if not 0.0 <= qos_fraction <= 1.0:
        raise ScenarioError("'workload.qos_fraction' must lie in [0, 1]")
    n_flows = int(data.get("n_flows", base.n_flows))
    if n_flows < 1:
        raise ScenarioError("'workload.n_flows' must be at least 1")
    return WorkloadConfig(
        seed=int(data.get("seed", base.seed)),
        n_flows=n_flows,
        qos_fraction=qos_fraction,
        qos_bandwidth_gbps=(
            _pair("workload", "qos_bandwidth_gbps", data["qos_bandwidth_gbps"])
            if "qos_bandwidth_gbps" in data
            else base.qos_bandwidth_gbps
        ),
        nonqos_demand_gbps=(
            _pair("workload", "nonqos_demand_gbps", data["nonqos_demand_gbps"])
            if "nonqos_demand_gbps" in data
            else base.nonqos_demand_gbps
        ),
        max_delay_ms=(
            _pair("workload", "max_delay_ms", data["max_delay_ms"])
            if "max_delay_ms" in data
            else base.max_delay_ms
        ),
        max_plr=(
            _unit_range("workload", "max_plr", data["max_plr"])
            if "max_plr" in data
            else base.max_plr
        ),
        max_jitter_ms=float(data.get("max_jitter_ms", base.max_jitter_ms)),
    )


def _parse_output(data: dict) -> OutputConfig:
    allowed = ("directory", "formats", "moving_average_window_s")
    _check_keys("output", data, allowed)
    _note_defaults("output", data, allowed)
    base = OutputConfig()
    formats = tuple(data.get("formats", base.formats))
    for fmt in formats:
        if fmt != "csv":
            raise ScenarioError(f"'output.formats' supports only 'csv', got '{fmt}'")
    window = int(data.get("moving_average_window_s", base.moving_average_window_s))
    if window < 1:
        raise ScenarioError("'output.moving_average_window_s' must be at least 1")
    return OutputConfig(
        directory=str(data.get("directory", base.directory)),
        formats=formats,
        moving_average_window_s=window,
    )


def parse_scenario(path: str | Path) -> Scenario:
    """Load and validate a scenario document."""
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"malformed scenario document: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ScenarioError("scenario document must be a mapping of sections")

    missing = [s for s in _SECTIONS if s not in raw]
    if missing:
        raise ScenarioError(f"missing required sections: {missing}")
    _check_keys("<top level>", raw, _SECTIONS + ("duration_s", "heartbeat_period_s"))

    for section in _SECTIONS:
        if not isinstance(raw[section], dict):
            raise ScenarioError(f"section '{section}' must be a mapping")

    duration = int(raw.get("duration_s", 324))
    heartbeat = float(raw.get("heartbeat_period_s", 1.0))
    if duration < 1:
        raise ScenarioError("'duration_s' must be at least 1")
    if heartbeat <= 0:
        raise ScenarioError("'heartbeat_period_s' must be positive")

    try:
        return Scenario(
            constellation=_parse_constellation(raw["constellation"]),
            links=_parse_links(raw["links"]),
            routing=_parse_routing(raw["routing"]),
            workload=_parse_workload(raw["workload"]),
            output=_parse_output(raw["output"]),
            duration_s=duration,
            heartbeat_period_s=heartbeat,
        )
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(str(exc)) from exc


def scenario_to_dict(s: Scenario) -> dict:
    """Canonical plain-dict form; parse_scenario(dump) round-trips."""
    return {
        "constellation": {
            "num_orbits": s.constellation.num_orbits,
            "sats_per_orbit": s.constellation.sats_per_orbit,
            "altitude_km": s.constellation.altitude_km,
            "earth_radius_km": s.constellation.earth_radius_km,
            "atm_height_km": s.constellation.atm_height_km,
            "distance_model": s.constellation.distance_model.value,
            "state_duration_s": s.constellation.state_duration_s,
        },
        "links": {
            "intra_orbit_bandwidth_gbps": s.links.intra_orbit_bandwidth_gbps,
            "inter_orbit_bandwidth_gbps": list(s.links.inter_orbit_bandwidth_gbps),
            "initial_cd": list(s.links.initial_cd),
            "initial_plr": list(s.links.initial_plr),
        },
        "routing": {
            "weights": [
                s.routing.weights.k1,
                s.routing.weights.k2,
                s.routing.weights.k3,
                s.routing.weights.k4,
                s.routing.weights.k5,
            ],
            "max_cd": s.routing.max_cd,
            "delta_cd": s.routing.delta_cd,
            "cd_threshold": s.routing.cd_threshold,
            "routers": list(s.routing.routers),
            "ksp_k": s.routing.ksp_k,
            "dfs_max_paths": s.routing.dfs_max_paths,
        },
        "workload": {
            "seed": s.workload.seed,
            "n_flows": s.workload.n_flows,
            "qos_fraction": s.workload.qos_fraction,
            "qos_bandwidth_gbps": list(s.workload.qos_bandwidth_gbps),
            "nonqos_demand_gbps": list(s.workload.nonqos_demand_gbps),
            "max_delay_ms": list(s.workload.max_delay_ms),
            "max_plr": list(s.workload.max_plr),
            "max_jitter_ms": s.workload.max_jitter_ms,
        },
        "output": {
            "directory": s.output.directory,
            "formats": list(s.output.formats),
            "moving_average_window_s": s.output.moving_average_window_s,
        },
        "duration_s": s.duration_s,
        "heartbeat_period_s": s.heartbeat_period_s,
    }


def dump_scenario(s: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(s), sort_keys=False)


def run_comparison(
    scenario: Scenario,
    out_dir: str | Path | None = None,
    routers: list[str] | None = None,
    window: int | None = None,
) -> int:
    """Run every configured router over one shared workload.

    Writes per_flow_<scheme>.csv, per_tick_<scheme>.csv, plot series,
    summary.csv and a MANIFEST.  Returns 0 on success; on any per-router
    failure the partial outputs are kept, the MANIFEST records the
    failure, and the exit code is nonzero.
    """
    out = Path(out_dir) if out_dir is not None else Path(scenario.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    names = list(routers) if routers is not None else list(scenario.routing.routers)
    for name in names:
        if name not in KNOWN_ROUTERS:
            raise ScenarioError(f"unknown router '{name}' (known: {list(KNOWN_ROUTERS)})")
    window = window if window is not None else scenario.output.moving_average_window_s

    c = build_constellation(scenario.constellation)
    workload = generate_workload(
        scenario.workload.seed,
        scenario.workload.n_flows,
        scenario.workload.qos_fraction,
        scenario.workload,
        n_satellites=c.num_orbits * c.sats_per_orbit,
    )
    base_net = initialize_network(c, scenario)

    manifest: dict = {
        "scenario": scenario_to_dict(scenario),
        "workload_sha256": workload_digest(workload),
        "routers": names,
        "runs": {},
        "complete": False,
    }
    reports = []
    failed = False
    for name in names:
        try:
            router = make_router(scenario, name)
            report = run(
                scenario,
                router=router,
                workload=workload,
                initial_net=base_net,
                scheme_name=name,
            )
            write_per_flow_csv(report, out / f"per_flow_{name}.csv")
            write_per_tick_csv(report, out / f"per_tick_{name}.csv")
            if report.events:
                write_events_csv(report, out / f"events_{name}.csv")
            emit_plot_data(report, out / "plots", window=window)
            reports.append(report)
            manifest["runs"][name] = "ok"
            log.info(
                "%s: satisfied %d/%d, mean routing time %.3f ms",
                name,
                report.satisfied_count(),
                len(report.per_flow),
                report.mean_routing_time_ms() or 0.0,
            )
        except Exception as exc:  # keep partial outputs, note the failure
            failed = True
            manifest["runs"][name] = f"failed: {exc}"
            log.error("router '%s' failed: %s", name, exc)

    write_summary_csv(reports, out / "summary.csv")
    manifest["complete"] = not failed
    with open(out / "MANIFEST.json", "w") as fh:
        json.dump(manifest, fh, indent=2, default=_json_default)
        fh.write("\n")
    return 1 if failed else 0


def _json_default(value):
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    raise TypeError(f"not JSON serialisable: {value!r}")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="satqos",
        description="Compare QoS-aware routers on a grid LEO constellation.",
    )
    parser.add_argument("--scenario", type=Path, help="scenario YAML (defaults apply if omitted)")
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument("--routers", help="comma-separated router list")
    parser.add_argument("--seed", type=int, help="override the workload seed")
    parser.add_argument("--window", type=int, help="moving-average window in seconds")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")

    try:
        scenario = parse_scenario(args.scenario) if args.scenario else Scenario()
        if args.seed is not None:
            scenario = dataclasses.replace(
                scenario,
                workload=dataclasses.replace(scenario.workload, seed=args.seed),
            )
        routers = args.routers.split(",") if args.routers else None
        return run_comparison(scenario, out_dir=args.out, routers=routers, window=args.window)
    except (ScenarioError, OSError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
