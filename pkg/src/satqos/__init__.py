"""QoS-aware routing simulator for grid-connected LEO constellations."""

from .constellation import (
    Constellation,
    ConstellationConfig,
    DistanceModel,
    GridCoord,
    IslKind,
    Satellite,
    build_constellation,
    inter_satellite_distance,
    is_visible,
    neighbors,
    topology_state,
)
from .link_state import (
    MAX_COST,
    LinkMetrics,
    LinkScore,
    ScoreWeights,
    available_bandwidth,
    congestion_degree,
    jitter_ms,
    link_score,
    packet_loss_ratio,
    propagation_delay_ms,
)
from .network import NetworkView, edge_key, grid_edges
from .router import (
    FlowConstraints,
    GridPath,
    LinkMark,
    ParallelogramRouter,
    RouteStatus,
    RoutingOutcome,
    SearchGraph,
    bresenham_path,
    dijkstra_in_subgraph,
    fail_satellite,
    handle_degenerate_line,
    ideal_parallelogram,
    is_satisfying_path,
    mark_link,
    route_flow,
)
from .baselines import (
    BoundedDfsRouter,
    GlobalDijkstraRouter,
    KShortestPathsRouter,
    global_dijkstra,
    yen_k_shortest,
)
from .control_plane import (
    ControllerState,
    FlowRule,
    FlowTable,
    PingMsg,
    TopologyVerdict,
    VerdictKind,
    detect_silent_satellites,
    process_ping,
    send_ping,
    transfer_flow_rules,
    update_flow_table,
)
from .sim_engine import (
    FlowRequest,
    MetricsReport,
    Scenario,
    WorkloadConfig,
    average_congestion,
    generate_workload,
    initialize_network,
    run,
    satisfaction_ratio,
)

__version__ = "0.1.0"
