import math
import random

import pytest

from satqos.constellation import (
    ConstellationConfig,
    GridCoord,
    build_constellation,
    neighbors,
)
from satqos.link_state import MAX_COST
from satqos.network import edge_key
from satqos.router import (
    DegenerateLineError,
    FlowConstraints,
    GridPath,
    LinkMark,
    ParallelogramRouter,
    RouteStatus,
    UnreachableError,
    assign_costs,
    bresenham_path,
    dijkstra_in_subgraph,
    edge_cost,
    fail_satellite,
    handle_degenerate_line,
    ideal_parallelogram,
    is_satisfying_path,
    mark_link,
    relaxation_iterations,
    route_flow,
)
from satqos.sim_engine import FlowRequest

from conftest import make_network
from oracles import (
    bfs_distances_from,
    cheapest_monotone_path,
    enumerate_monotone_paths,
)


def flow(src, dst, constraints=None, demand=0.1, fid=0):
    return FlowRequest(
        flow_id=fid,
        arrival_time=1.0,
        src=src,
        dst=dst,
        demand_gbps=demand,
        constraints=constraints if constraints is not None else FlowConstraints(),
    )


# ---------------------------------------------------------------------------
# Line walk
# ---------------------------------------------------------------------------


class TestBresenham:
    def test_same_orbit_is_pure_longitudinal(self, grid10):
        p = bresenham_path(GridCoord(0, 0), GridCoord(0, 5), grid10)
        assert (p.m, p.n) == (0, 5)
        assert all(h.orbit == 0 for h in p.hops)

    def test_equal_offsets_pure_diagonal(self, grid10):
        p = bresenham_path(GridCoord(0, 0), GridCoord(3, 3), grid10)
        assert (p.m, p.n) == (3, 0)

    def test_mixed_offsets(self, grid10):
        p = bresenham_path(GridCoord(0, 0), GridCoord(2, 5), grid10)
        assert (p.m, p.n) == (2, 3)
        assert p.hop_count == 5

    def test_orbit_only_offset_needs_parity_fix(self, grid10):
        p = bresenham_path(GridCoord(0, 0), GridCoord(3, 0), grid10)
        assert p.hop_count == 4

    def test_identity(self, grid10):
        p = bresenham_path(GridCoord(4, 2), GridCoord(4, 2), grid10)
        assert p.hops == (GridCoord(4, 2),)
        assert (p.m, p.n) == (0, 0)

    @pytest.mark.parametrize(
        "orbits,slots", [(3, 3), (3, 10), (10, 3), (9, 3), (5, 7), (10, 10)]
    )
    def test_hop_count_matches_bfs_everywhere(self, orbits, slots):
        c = build_constellation(ConstellationConfig(num_orbits=orbits, sats_per_orbit=slots))
        coords = [s.coord for s in c.satellites]
        for src in coords:
            dist = bfs_distances_from(c, src)
            for dst in coords:
                p = bresenham_path(src, dst, c)
                assert p.hop_count == dist[dst], (src, dst)

    def test_paths_are_valid_walks(self, grid10):
        adjacency = {
            s.coord: {n for n, _ in neighbors(s.coord, grid10)} for s in grid10.satellites
        }
        coords = [s.coord for s in grid10.satellites]
        for src in coords[::7]:
            for dst in coords:
                p = bresenham_path(src, dst, grid10)
                assert p.hops[0] == src and p.hops[-1] == dst
                assert len(set(p.hops)) == len(p.hops)
                assert p.hop_count == p.m + p.n
                for a, b in zip(p.hops, p.hops[1:]):
                    assert b in adjacency[a]


# ---------------------------------------------------------------------------
# Ideal parallelogram
# ---------------------------------------------------------------------------


class TestIdealParallelogram:
    def test_size_formulas(self):
        c = build_constellation(ConstellationConfig(num_orbits=20, sats_per_orbit=40))
        src = GridCoord(0, 0)
        for m in range(1, 10):
            for n in range(1, 10):
                dst = GridCoord(m, m + n)
                g = ideal_parallelogram(src, dst, m, n, c)
                assert len(g.vertices) == (m + 1) * (n + 1)
                assert len(g.edges) == (m + 1) * n + (n + 1) * m

    def test_smallest_parallelogram(self, grid10):
        g = ideal_parallelogram(GridCoord(0, 0), GridCoord(1, 2), 1, 1, grid10)
        assert len(g.vertices) == 4
        assert len(g.edges) == 4

    def test_all_monotone_paths_have_equal_length(self, grid10):
        m, n = 2, 3
        g = ideal_parallelogram(GridCoord(0, 0), GridCoord(m, m + n), m, n, grid10)
        for path in enumerate_monotone_paths(GridCoord(0, 0), 1, 1, m, n, grid10):
            assert len(path) - 1 == m + n
            assert set(path) <= g.vertices

    def test_degenerate_rejected(self, grid10):
        with pytest.raises(DegenerateLineError):
            ideal_parallelogram(GridCoord(0, 0), GridCoord(0, 4), 0, 4, grid10)
        with pytest.raises(DegenerateLineError):
            ideal_parallelogram(GridCoord(0, 0), GridCoord(3, 3), 3, 0, grid10)

    def test_inconsistent_shape_rejected(self, grid10):
        with pytest.raises(ValueError):
            ideal_parallelogram(GridCoord(0, 0), GridCoord(2, 5), 1, 1, grid10)


class TestDijkstraInSubgraph:
    def _random_costs(self, g, rng):
        for e in g.edges:
            g.edges[e] = rng.uniform(0.5, 5.0)

    def test_matches_exhaustive_enumeration(self, grid10):
        rng = random.Random(42)
        trials = 0
        while trials < 200:
            m = rng.randint(1, 4)
            n = rng.randint(1, 4)
            if m + n > 5:
                continue
            trials += 1
            src = GridCoord(rng.randint(0, 9), rng.randint(0, 9))
            dst = GridCoord((src.orbit + m) % 10, (src.slot + m + n) % 10)
            g = ideal_parallelogram(src, dst, m, n, grid10)
            self._random_costs(g, rng)
            best_cost, _ = cheapest_monotone_path(
                enumerate_monotone_paths(src, 1, 1, m, n, grid10), g.edges
            )
            got = dijkstra_in_subgraph(g)
            got_cost = sum(g.edges[(a, b)] for a, b in zip(got.hops, got.hops[1:]))
            assert got_cost == pytest.approx(best_cost, rel=1e-9)

    def test_uniform_costs_lexicographic_tie_break(self, grid10):
        src, dst = GridCoord(0, 0), GridCoord(2, 5)
        g = ideal_parallelogram(src, dst, 2, 3, grid10)
        for e in g.edges:
            g.edges[e] = 1.0
        got = dijkstra_in_subgraph(g)
        assert got.hop_count == 5
        paths = enumerate_monotone_paths(src, 1, 1, 2, 3, grid10)
        assert got.hops == min(paths)

    def test_blocked_edge_forces_next_cheapest(self, grid10):
        rng = random.Random(7)
        src, dst = GridCoord(0, 0), GridCoord(2, 4)
        g = ideal_parallelogram(src, dst, 2, 2, grid10)
        self._random_costs(g, rng)
        first = dijkstra_in_subgraph(g)
        cut = (first.hops[0], first.hops[1])
        g.edges[cut] = MAX_COST
        second = dijkstra_in_subgraph(g)
        assert second.hops[1] != first.hops[1]
        paths = [
            p
            for p in enumerate_monotone_paths(src, 1, 1, 2, 2, grid10)
            if (p[0], p[1]) != cut
        ]
        best_cost, _ = cheapest_monotone_path(paths, g.edges)
        got_cost = sum(g.edges[(a, b)] for a, b in zip(second.hops, second.hops[1:]))
        assert got_cost == pytest.approx(best_cost, rel=1e-9)

    def test_fully_blocked_graph_unreachable(self, grid10):
        g = ideal_parallelogram(GridCoord(0, 0), GridCoord(1, 2), 1, 1, grid10)
        for e in g.edges:
            g.edges[e] = MAX_COST
        with pytest.raises(UnreachableError):
            dijkstra_in_subgraph(g)


# ---------------------------------------------------------------------------
# Constraint checking
# ---------------------------------------------------------------------------


class TestIsSatisfyingPath:
    def test_all_constraints_slack(self, grid10):
        net = make_network(grid10, bandwidth=4.0, cd=0.5, plr=0.001)
        p = bresenham_path(GridCoord(0, 0), GridCoord(0, 3), grid10)
        fc = FlowConstraints(min_bandwidth_gbps=1.5, max_delay_ms=60.0, max_plr=0.005)
        assert is_satisfying_path(p, fc, net)

    def test_delay_violation(self, grid10):
        net = make_network(grid10)
        p = bresenham_path(GridCoord(0, 0), GridCoord(0, 4), grid10)
        fc = FlowConstraints(max_delay_ms=60.0)  # 4 hops x 17.56 ms > 60
        assert not is_satisfying_path(p, fc, net)

    def test_bandwidth_violation(self, grid10):
        net = make_network(grid10, bandwidth=4.0, cd=0.5)
        p = bresenham_path(GridCoord(0, 0), GridCoord(0, 2), grid10)
        assert not is_satisfying_path(p, FlowConstraints(min_bandwidth_gbps=2.5), net)

    def test_plr_violation(self, grid10):
        net = make_network(grid10, plr=0.002)
        p = bresenham_path(GridCoord(0, 0), GridCoord(0, 4), grid10)
        # composite 1 - (1 - 0.002)^4 ~ 0.00798
        assert not is_satisfying_path(p, FlowConstraints(max_plr=0.005), net)
        assert is_satisfying_path(p, FlowConstraints(max_plr=0.01), net)

    def test_non_qos_accepts_anything(self, grid10):
        net = make_network(grid10, cd=0.99)
        p = bresenham_path(GridCoord(0, 0), GridCoord(5, 5), grid10)
        assert is_satisfying_path(p, FlowConstraints.non_qos(), net)


# ---------------------------------------------------------------------------
# Degenerate-line handling
# ---------------------------------------------------------------------------


class TestDegenerateLine:
    def test_clear_line_returned_unchanged(self, grid10):
        net = make_network(grid10, cd=0.3)
        line = bresenham_path(GridCoord(0, 0), GridCoord(0, 4), grid10)
        got = handle_degenerate_line(GridCoord(0, 0), GridCoord(0, 4), net)
        assert got.hops == line.hops

    def test_midline_congestion_detours(self, grid10):
        net = make_network(grid10, cd=0.3)
        blocked = edge_key(GridCoord(0, 2), GridCoord(0, 3))
        m = net.metrics[blocked]
        m.load_gbps = 0.9 * m.bandwidth_gbps
        got = handle_degenerate_line(GridCoord(0, 0), GridCoord(0, 5), net)
        assert blocked not in {edge_key(a, b) for a, b in zip(got.hops, got.hops[1:])}
        # Slot moves every hop, so detours cost an even number of extra
        # hops; here a forward diagonal swerve costs nothing at all.
        assert got.hop_count == 5

    def test_end_of_line_congestion_costs_two_hops(self, grid10):
        net = make_network(grid10, cd=0.3)
        blocked = edge_key(GridCoord(0, 4), GridCoord(0, 5))
        net.metrics[blocked].load_gbps = 0.9 * net.metrics[blocked].bandwidth_gbps
        got = handle_degenerate_line(GridCoord(0, 0), GridCoord(0, 5), net)
        assert got.hop_count == 7

    def test_isolated_endpoints_unreachable(self, grid3):
        net = make_network(grid3, cd=0.95)
        with pytest.raises(UnreachableError):
            handle_degenerate_line(GridCoord(0, 0), GridCoord(0, 1), net)


# ---------------------------------------------------------------------------
# route_flow
# ---------------------------------------------------------------------------


class TestRouteFlow:
    def test_iteration_budget(self):
        assert relaxation_iterations(0.82, 0.05) == 3
        assert relaxation_iterations(0.9, 0.2) == 1  # floor gives 0, min is 1
        with pytest.raises(ValueError):
            relaxation_iterations(1.2, 0.05)
        with pytest.raises(ValueError):
            relaxation_iterations(0.8, 0.0)

    def test_non_qos_takes_line_directly(self, grid10):
        net = make_network(grid10, cd=0.95)  # congested but unmarked
        f = flow(GridCoord(0, 0), GridCoord(2, 5), FlowConstraints.non_qos())
        out = route_flow(f, net)
        assert out.status is RouteStatus.NON_QOS
        assert out.iterations_used == 0
        assert out.path.hops == bresenham_path(GridCoord(0, 0), GridCoord(2, 5), grid10).hops

    def test_satisfying_line_installed_without_dijkstra(self, grid10):
        net = make_network(grid10, cd=0.3)
        f = flow(GridCoord(0, 0), GridCoord(1, 3), FlowConstraints(max_delay_ms=200.0))
        out = route_flow(f, net)
        assert out.status is RouteStatus.SATISFIED
        assert out.iterations_used == 0

    def test_all_iterations_fail_reports_best_path(self, grid10):
        net = make_network(grid10, cd=0.95)  # beyond every relaxation step
        f = flow(GridCoord(0, 0), GridCoord(2, 5), FlowConstraints(min_bandwidth_gbps=0.5))
        out = route_flow(f, net, max_cd=0.82, delta_cd=0.05)
        assert out.status is RouteStatus.UNSATISFIABLE
        assert out.iterations_used == 3
        assert out.path is not None

    def test_relaxation_admits_moderately_congested_links(self, grid10):
        # Every link sits at CD 0.85: priced out at max_cd 0.82, admitted
        # once the threshold relaxes to 0.87.  The line walk is blocked by
        # an explicit congestion mark so the search graph is actually used.
        net = make_network(grid10, cd=0.85)
        src, dst = GridCoord(0, 0), GridCoord(2, 5)
        line = bresenham_path(src, dst, grid10)
        net.congested_edges.add(edge_key(*line.hops[1:3]))
        f = flow(src, dst, FlowConstraints(min_bandwidth_gbps=0.0, max_delay_ms=1000.0, max_plr=1.0))
        out = route_flow(f, net, max_cd=0.82, delta_cd=0.05)
        assert out.status is RouteStatus.SATISFIED
        assert out.iterations_used == 2

    def test_flow_installed_in_tables_and_load(self, grid10):
        from satqos.control_plane import ControllerState

        net = make_network(grid10, cd=0.3)
        net.controller = ControllerState(num_orbits=10, sats_per_orbit=10)
        f = flow(GridCoord(0, 0), GridCoord(1, 3), demand=0.25)
        out = route_flow(f, net)
        assert out.status is RouteStatus.SATISFIED
        for a, b in zip(out.path.hops, out.path.hops[1:]):
            assert net.edge_metrics(a, b).load_gbps == pytest.approx(0.3 * 4.0 + 0.25)
        assert net.controller.installed_paths[0] == [
            grid10.id_of(h) for h in out.path.hops
        ]

    def test_determinism(self, grid10):
        f = flow(GridCoord(1, 1), GridCoord(4, 7), FlowConstraints(min_bandwidth_gbps=0.2))
        outs = []
        for _ in range(2):
            net = make_network(grid10, cd=0.7)
            outs.append(route_flow(f, net))
        assert outs[0].path.hops == outs[1].path.hops
        assert outs[0].status == outs[1].status
        assert outs[0].iterations_used == outs[1].iterations_used

    def test_relaxation_monotonically_admits_edges(self, grid10):
        rng = random.Random(3)
        net = make_network(grid10)
        for m in net.metrics.values():
            m.load_gbps = rng.uniform(0.0, 1.1) * m.bandwidth_gbps
        for a, b in list(net.metrics.keys()):
            c0 = edge_cost(net, a, b, 0.82)
            c1 = edge_cost(net, a, b, 0.87)
            if c0 < MAX_COST:
                assert c1 < MAX_COST


# ---------------------------------------------------------------------------
# Marking and failure handling
# ---------------------------------------------------------------------------


class TestMarkLink:
    def test_congesting_an_edge_reroutes_its_flows(self, grid10):
        net = make_network(grid10, cd=0.3)
        f = flow(GridCoord(0, 0), GridCoord(0, 3), FlowConstraints.non_qos(), demand=0.2)
        out = route_flow(f, net)
        used = edge_key(*out.path.hops[1:3])
        rerouted = mark_link(net, used, LinkMark.CONGESTED)
        assert rerouted == [0]
        new_hops = net.flows[0].hops
        assert used not in {edge_key(a, b) for a, b in zip(new_hops, new_hops[1:])}

    def test_load_moves_with_the_reroute(self, grid10):
        net = make_network(grid10, cd=0.0)
        f = flow(GridCoord(0, 0), GridCoord(0, 3), FlowConstraints.non_qos(), demand=0.2)
        out = route_flow(f, net)
        used = edge_key(*out.path.hops[0:2])
        mark_link(net, used, LinkMark.CONGESTED)
        assert net.metrics[used].load_gbps == pytest.approx(0.0)
        total = sum(m.load_gbps for m in net.metrics.values())
        assert total == pytest.approx(0.2 * len(net.flows[0].hops) - 0.2)

    def test_unrelated_edge_reroutes_nothing(self, grid10):
        net = make_network(grid10, cd=0.3)
        route_flow(flow(GridCoord(0, 0), GridCoord(0, 2), FlowConstraints.non_qos()), net)
        rerouted = mark_link(net, edge_key(GridCoord(5, 5), GridCoord(5, 6)), LinkMark.CONGESTED)
        assert rerouted == []

    def test_unknown_edge_rejected(self, grid10):
        net = make_network(grid10)
        with pytest.raises(ValueError):
            mark_link(net, (GridCoord(0, 0), GridCoord(0, 5)), LinkMark.CONGESTED)

    def test_satellite_failure_kills_six_edges(self, grid10):
        net = make_network(grid10, cd=0.3)
        fail_satellite(net, grid10.id_of(GridCoord(4, 4)))
        incident = {
            edge_key(GridCoord(4, 4), n) for n, _ in neighbors(GridCoord(4, 4), grid10)
        }
        assert incident <= net.failed_edges
        assert len(incident) == 6

    def test_failed_edges_excluded_from_new_routes(self, grid10):
        net = make_network(grid10, cd=0.3)
        key = edge_key(GridCoord(0, 1), GridCoord(0, 2))
        mark_link(net, key, LinkMark.FAILED)
        out = route_flow(flow(GridCoord(0, 0), GridCoord(0, 3), FlowConstraints.non_qos()), net)
        assert key not in {edge_key(a, b) for a, b in zip(out.path.hops, out.path.hops[1:])}

    def test_marked_edge_avoided_even_during_relaxation(self, grid10):
        net = make_network(grid10, cd=0.5)
        key = edge_key(GridCoord(0, 1), GridCoord(1, 2))
        mark_link(net, key, LinkMark.CONGESTED)
        f = flow(GridCoord(0, 0), GridCoord(2, 5), FlowConstraints(min_bandwidth_gbps=0.1))
        out = route_flow(f, net)
        assert key not in {edge_key(a, b) for a, b in zip(out.path.hops, out.path.hops[1:])}
