"""SDN controller state: per-satellite flow tables, proactive rule
transfer across handovers, and heartbeat-based topology monitoring.

Routes are expressed in orbital *positions* (the stable grid), while flow
rules live on the physical satellites currently occupying those
positions.  At every slot-shift handover each satellite is about to take
the place of the one ahead of it in the orbit, so rules are rotated one
satellite backwards and the position -> rules mapping is preserved.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .constellation import Constellation, GridCoord, state_adjacency, topology_state
from .network import NetworkView


class ProtocolError(ValueError):
    """A heartbeat message is inconsistent with the known constellation."""


@dataclass(frozen=True)
class FlowRule:
    flow_id: int
    match: tuple[int, int]  # (source, destination) position ids
    next_hop: int  # position id of the successor hop


@dataclass
class FlowTable:
    owner: int  # physical satellite id (home position)
    rules: dict[int, FlowRule] = field(default_factory=dict)


@dataclass(frozen=True)
class PingMsg:
    heartbeat: str
    adjacency: tuple[int, ...]
    id: int
    timestamp: float


class VerdictKind(Enum):
    NOMINAL = "nominal"
    ISL_FAILURE = "isl_failure"
    SATELLITE_FAILURE = "satellite_failure"


@dataclass(frozen=True)
class TopologyVerdict:
    kind: VerdictKind
    missing_edges: tuple[tuple[int, int], ...] = ()
    satellite: int | None = None

    def __post_init__(self) -> None:
        if self.kind is VerdictKind.ISL_FAILURE and not self.missing_edges:
            raise ValueError("an ISL-failure verdict must name at least one edge")


NOMINAL = TopologyVerdict(kind=VerdictKind.NOMINAL)


@dataclass
class ControllerState:
    num_orbits: int
    sats_per_orbit: int
    tables: dict[int, FlowTable] = field(default_factory=dict)
    installed_paths: dict[int, list[int]] = field(default_factory=dict)
    # How many slot-shift handovers have occurred: position (j, k) is
    # currently occupied by the satellite with home slot (k - offset).
    slot_offset: int = 0

    def __post_init__(self) -> None:
        for sid in range(self.num_orbits * self.sats_per_orbit):
            self.tables.setdefault(sid, FlowTable(owner=sid))

    def satellite_at_position(self, position_id: int) -> int:
        orbit, slot = divmod(position_id, self.sats_per_orbit)
        home = (slot - self.slot_offset) % self.sats_per_orbit
        return orbit * self.sats_per_orbit + home

    def rules_at_position(self, position_id: int) -> dict[int, FlowRule]:
        return self.tables[self.satellite_at_position(position_id)].rules

    def install_path(self, flow_id: int, path: Sequence[int]) -> None:
        update_flow_table(flow_id, path, self)

    def remove_flow(self, flow_id: int) -> None:
        for table in self.tables.values():
            table.rules.pop(flow_id, None)
        self.installed_paths.pop(flow_id, None)


def update_flow_table(
    flow_id: int, path: Sequence[int], controller: ControllerState
) -> None:
    """Install per-hop forwarding rules for a flow along a position path.

    Every satellite on the path except the destination maps the flow to
    its successor; any rules the flow held before are removed first.
    """
    path = list(path)
    controller.remove_flow(flow_id)
    if len(path) < 2:
        controller.installed_paths[flow_id] = path
        return
    match = (path[0], path[-1])
    for here, nxt in zip(path, path[1:]):
        owner = controller.satellite_at_position(here)
        controller.tables[owner].rules[flow_id] = FlowRule(
            flow_id=flow_id, match=match, next_hop=nxt
        )
    controller.installed_paths[flow_id] = path


def follow_flow(controller: ControllerState, flow_id: int, source: int) -> list[int]:
    """Walk a flow's next_hop chain from a source position (for audits)."""
    path = [source]
    seen = {source}
    here = source
    while True:
        rule = controller.rules_at_position(here).get(flow_id)
        if rule is None:
            return path
        nxt = rule.next_hop
        if nxt in seen:
            raise ProtocolError(f"flow {flow_id} loops back to position {nxt}")
        path.append(nxt)
        seen.add(nxt)
        here = nxt


def transfer_flow_rules(c: Constellation, controller: ControllerState) -> None:
    """Rotate rule sets ahead of a slot-shift handover.

    Each satellite is about to take the place of the one at the next slot,
    so it adopts that satellite's rules; applied simultaneously around
    every orbit, the mapping position -> rule set is unchanged once the
    physical shift completes.
    """
    s = c.sats_per_orbit
    for orbit in range(c.num_orbits):
        base = orbit * s
        old = {k: controller.tables[base + k].rules for k in range(s)}
        for k in range(s):
            controller.tables[base + k].rules = dict(old[(k + 1) % s])


def send_ping(s: int, net: NetworkView, t: float) -> PingMsg | None:
    """Heartbeat carrying the satellite's current live adjacency.

    A failed satellite emits nothing; failed ISLs and dead neighbours are
    absent from the reported adjacency.
    """
    if s in net.failed_satellites:
        return None
    c = net.constellation
    coord = c.coord_of(s)
    adjacency = tuple(sorted(c.id_of(n) for n in net.live_neighbors(coord)))
    return PingMsg(heartbeat="alive", adjacency=adjacency, id=s, timestamp=t)


def process_ping(msg: PingMsg, c: Constellation, t: float) -> TopologyVerdict:
    """Compare a heartbeat's adjacency against the precomputed topology."""
    n_sats = c.num_orbits * c.sats_per_orbit
    if not 0 <= msg.id < n_sats:
        raise ProtocolError(f"ping from unknown satellite {msg.id}")
    expected = set(state_adjacency(topology_state(t, c), c)[msg.id])
    reported = set(msg.adjacency)
    gained = reported - expected
    if gained:
        raise ProtocolError(
            f"satellite {msg.id} reports links {sorted(gained)} that the "
            "topology cannot contain"
        )
    missing = expected - reported
    if missing:
        edges = tuple(
            (min(msg.id, other), max(msg.id, other)) for other in sorted(missing)
        )
        return TopologyVerdict(kind=VerdictKind.ISL_FAILURE, missing_edges=edges)
    return NOMINAL


def detect_silent_satellites(
    t: float, last_ping: dict[int, float], period: float
) -> list[int]:
    """Satellites that have not pinged for at least two heartbeat periods.

    One missed ping can race a handover; two is unambiguous.
    """
    if period <= 0:
        raise ValueError("heartbeat period must be positive")
    return [sid for sid in sorted(last_ping) if t - last_ping[sid] >= 2 * period]
