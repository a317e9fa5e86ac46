import math

import pytest

from satqos.constellation import (
    ConstellationConfig,
    DistanceModel,
    GridCoord,
    IslKind,
    build_constellation,
    inter_satellite_distance,
    is_visible,
    max_visible_range_km,
    neighbors,
    satellite_position_km,
    state_adjacency,
    topology_state,
)


def test_default_build_has_100_satellites(grid10):
    assert len(grid10.satellites) == 100
    assert grid10.satellites[37].id == 37
    assert grid10.coord_of(37) == GridCoord(3, 7)
    assert grid10.id_of(GridCoord(3, 7)) == 37


def test_minimum_grid_is_three_by_three(grid3):
    assert len(grid3.satellites) == 9
    for sat in grid3.satellites:
        nbrs = neighbors(sat.coord, grid3)
        assert len(nbrs) == 6
        assert len({n for n, _ in nbrs}) == 6


@pytest.mark.parametrize("orbits,slots", [(2, 10), (10, 2), (1, 1), (0, 5)])
def test_undersized_grid_rejected(orbits, slots):
    with pytest.raises(ValueError):
        build_constellation(ConstellationConfig(num_orbits=orbits, sats_per_orbit=slots))


def test_neighbor_example_on_default_grid(grid10):
    got = neighbors(GridCoord(0, 0), grid10)
    intra = {n for n, k in got if k is IslKind.INTRA_ORBIT}
    inter = {n for n, k in got if k is IslKind.INTER_ORBIT}
    assert intra == {GridCoord(0, 1), GridCoord(0, 9)}
    assert inter == {GridCoord(1, 1), GridCoord(1, 9), GridCoord(9, 1), GridCoord(9, 9)}


def test_slot_neighbors_are_intra_orbit(grid10):
    got = dict(neighbors(GridCoord(5, 3), grid10))
    assert got[GridCoord(5, 2)] is IslKind.INTRA_ORBIT
    assert got[GridCoord(5, 4)] is IslKind.INTRA_ORBIT


@pytest.mark.parametrize("orbits,slots", [(3, 3), (3, 10), (10, 3), (5, 7), (10, 10)])
def test_adjacency_symmetric_and_degree_six(orbits, slots):
    c = build_constellation(ConstellationConfig(num_orbits=orbits, sats_per_orbit=slots))
    adjacency = {
        sat.coord: {n for n, _ in neighbors(sat.coord, c)} for sat in c.satellites
    }
    for coord, nbrs in adjacency.items():
        assert len(nbrs) == 6
        for n in nbrs:
            assert coord in adjacency[n]


def test_intra_orbit_arc_distance(grid10):
    # (6378.137 + 2000) * 2*pi / 10
    d = inter_satellite_distance(GridCoord(0, 0), GridCoord(0, 1), grid10)
    assert d == pytest.approx(5264.1, abs=0.1)


def test_intra_orbit_chord_distance():
    c = build_constellation(ConstellationConfig(distance_model=DistanceModel.CHORD))
    d = inter_satellite_distance(GridCoord(0, 0), GridCoord(0, 1), c)
    # 2 R sin(pi/10)
    assert d == pytest.approx(2 * 8378.137 * math.sin(math.pi / 10), rel=1e-12)


def test_distance_identity_and_symmetry(grid10):
    assert inter_satellite_distance(GridCoord(4, 4), GridCoord(4, 4), grid10) == 0.0
    for a, b in [
        (GridCoord(0, 0), GridCoord(3, 7)),
        (GridCoord(2, 9), GridCoord(5, 1)),
        (GridCoord(9, 9), GridCoord(0, 0)),
    ]:
        for t in (0.0, 123.4):
            assert inter_satellite_distance(a, b, grid10, t) == pytest.approx(
                inter_satellite_distance(b, a, grid10, t)
            )


def test_arc_model_scales_with_slot_separation(grid10):
    one = inter_satellite_distance(GridCoord(0, 0), GridCoord(0, 1), grid10)
    three = inter_satellite_distance(GridCoord(0, 0), GridCoord(0, 3), grid10)
    assert three == pytest.approx(3 * one, rel=1e-12)


def test_visible_range_formula(grid10):
    # sqrt(8378.137^2 - 6458.137^2) by direct evaluation
    assert max_visible_range_km(grid10) == pytest.approx(5337.19, abs=0.05)


def test_adjacent_pair_visible(grid10):
    assert is_visible(0, 1, grid10)
    assert is_visible(3, 3, grid10)  # zero distance


def test_distant_pair_not_visible(grid10):
    # Orthogonal planes, same slot angle: separation R*sqrt(2) ~ 11848 km,
    # beyond twice the per-satellite sight range.
    a, b = grid10.id_of(GridCoord(0, 0)), grid10.id_of(GridCoord(5, 0))
    d = inter_satellite_distance(GridCoord(0, 0), GridCoord(5, 0), grid10)
    assert d > 2 * max_visible_range_km(grid10)
    assert not is_visible(a, b, grid10)


def test_visibility_monotone_in_distance(grid10):
    threshold = 2 * max_visible_range_km(grid10)
    pairs = [(GridCoord(0, 0), GridCoord(o, s)) for o in range(10) for s in range(10)]
    flagged = [
        (inter_satellite_distance(a, b, grid10), is_visible(grid10.id_of(a), grid10.id_of(b), grid10))
        for a, b in pairs
    ]
    for d, visible in flagged:
        assert visible == (d < threshold)


def test_satellite_below_atmosphere_ceiling_is_geometry_error():
    c = build_constellation(ConstellationConfig(altitude_km=50.0, atm_height_km=80.0))
    with pytest.raises(ValueError):
        is_visible(0, 1, c)


def test_topology_state_schedule(grid10):
    dur = grid10.state_duration_s
    assert topology_state(0.0, grid10) == 0
    assert topology_state(1.5 * dur, grid10) == 1
    assert topology_state(grid10.period_states * dur, grid10) == 0
    with pytest.raises(ValueError):
        topology_state(-1.0, grid10)


def test_state_adjacency_periodic_and_consistent(grid10):
    base = state_adjacency(0, grid10)
    assert state_adjacency(grid10.period_states, grid10) == base
    for sat in grid10.satellites:
        expected = sorted(grid10.id_of(n) for n, _ in neighbors(sat.coord, grid10))
        assert sorted(base[sat.id]) == expected


def test_positions_sit_on_orbit_sphere(grid10):
    for coord in (GridCoord(0, 0), GridCoord(7, 4)):
        for t in (0.0, 500.0):
            p = satellite_position_km(coord, grid10, t)
            assert math.hypot(*p) == pytest.approx(grid10.orbit_radius_km, rel=1e-12)
