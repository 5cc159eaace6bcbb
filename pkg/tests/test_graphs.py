import math

import numpy as np
import pytest

from polyfract import graphs
from polyfract.errors import ConfigError, DomainError


@pytest.mark.parametrize("level", [1, 2, 3, 4])
def test_gasket_counts(level):
    # closed forms: V = (3**(L+1) + 3) / 2, E = 3**(L+1)
    g = graphs.build_gasket(level)
    assert g.V == (3 ** (level + 1) + 3) // 2
    assert g.indices.size // 2 == 3 ** (level + 1)
    assert g.E == 3 ** (level + 1)


def test_gasket_level3_has_42_vertices():
    assert graphs.build_gasket(3).V == 42


@pytest.mark.parametrize("radius", [1, 5, 64])
def test_line_counts(radius):
    g = graphs.build_line(radius)
    assert g.V == 2 * radius + 1
    assert g.E == 2 * radius
    assert g.origin == radius  # centered


def test_degrees_and_stochastic_rows(gasket2):
    deg = gasket2.deg
    assert set(np.unique(deg)) <= {2, 4}
    # the three outer corners keep degree 2, everything else is 4
    assert int((deg == 2).sum()) == 3
    sums = np.zeros(gasket2.V)
    np.add.at(sums, gasket2.indices, gasket2.p_in)
    assert np.abs(sums - 1.0).max() < 1e-15


def test_distances_and_boundary(gasket2):
    d = gasket2.dist_from(gasket2.origin)
    assert d[gasket2.origin] == 0
    assert int(d.max()) == 2 ** 2  # far corners sit at 2**level
    bd = gasket2.boundary_dist()
    assert int(bd[gasket2.origin]) == 2 ** 2
    assert all(int(bd[b]) == 0 for b in gasket2.boundary)


def test_safe_horizon_keeps_ball_off_boundary(line8):
    # largest n with B(x, n) free of boundary vertices
    assert line8.safe_horizon(line8.origin) == 7
    assert line8.safe_horizon(line8.origin + 3) == 4


def test_geodesic_ray_unit_speed(line120, gasket5):
    for g, length in ((line120, 40), (gasket5, 2 ** 5)):
        ray = graphs.geodesic_ray(g, length)
        assert len(ray) == length  # counts edges
        d = g.dist_from(g.origin)
        for k in range(length + 1):
            assert int(d[ray[k]]) == k


def test_geodesic_ray_too_long_rejected(line8):
    with pytest.raises(DomainError):
        graphs.geodesic_ray(line8, 9)


def test_vitali_cover_separation_and_coverage(line120):
    n_w = 4
    region = np.flatnonzero(line120.dist_from(line120.origin) <= 60)
    cover = graphs.vitali_cover(line120, region, n_w)
    assert cover.n_w == n_w and cover.cover_radius == 5 * n_w
    centers = cover.centers
    assert np.all(np.isin(centers, region))
    for i, c in enumerate(centers):
        d = line120.dist_from(int(c))
        others = np.delete(centers, i)
        assert int(d[others].min()) >= 2 * n_w + 1
        # region vertices assigned here live within the doubled radius,
        # dilate vertices within the full cover radius
        mine = np.flatnonzero(cover.assignment == i)
        assert int(d[np.intersect1d(mine, region)].max()) <= 2 * n_w
        assert int(d[mine].max()) <= 5 * n_w
    # the whole region is assigned to someone
    assert np.all(cover.assignment[region] >= 0)


def test_vitali_cover_gasket_disjoint_balls(gasket5):
    region = np.flatnonzero(gasket5.boundary_dist() > 10)
    cover = graphs.vitali_cover(gasket5, region, 2)
    balls = [set(np.flatnonzero(gasket5.dist_from(int(c)) <= 2))
             for c in cover.centers]
    for i in range(len(balls)):
        for j in range(i + 1, len(balls)):
            assert not balls[i] & balls[j]


def test_multi_source_distances(line8):
    d = graphs.multi_source_distances(line8, [0, line8.V - 1])
    assert int(d[line8.origin]) == 8
    assert int(d[0]) == 0 and int(d[line8.V - 1]) == 0


def test_nominal_dimensions():
    nom = graphs.nominal_dimensions("gasket")
    assert nom["d_f"] == math.log(3) / math.log(2)
    assert nom["d_w"] == math.log(5) / math.log(2)
    assert abs(nom["d_s"] - math.log(9) / math.log(5)) < 1e-15
    assert graphs.nominal_dimensions("line") == {"d_f": 1.0, "d_w": 2.0,
                                                 "d_s": 1.0}
    assert graphs.nominal_dimensions("tree") is None


def test_volume_growth_line(line8):
    rows = graphs.volume_growth(line8, line8.origin, 4)
    assert [r[2] for r in rows] == [1, 3, 5, 7, 9]


def test_save_load_round_trip(tmp_path, gasket2):
    path = tmp_path / "g.txt"
    graphs.save_graph(gasket2, path)
    h = graphs.load_graph(path)
    assert h.family == gasket2.family and h.V == gasket2.V
    assert h.origin == gasket2.origin
    assert np.array_equal(h.indptr, gasket2.indptr)
    assert np.array_equal(h.indices, gasket2.indices)
    assert np.array_equal(h.weights, gasket2.weights)
    assert tuple(h.boundary) == tuple(gasket2.boundary)


def test_build_graph_dispatch_and_validation():
    assert graphs.build_graph("line", radius=3).V == 7
    assert graphs.build_graph("gasket", level=1).V == 6
    with pytest.raises(ConfigError):
        graphs.build_graph("gasket")  # level missing
    with pytest.raises(ConfigError):
        graphs.build_graph("torus")
    assert graphs.build_gasket(0).V == 3  # level 0 is a bare triangle
    with pytest.raises(ConfigError):
        graphs.build_gasket(-1)
    with pytest.raises(ConfigError):
        graphs.build_line(0)


def test_build_custom_rejects_bad_input():
    with pytest.raises(ConfigError):
        graphs.build_custom(3, [(0, 1), (0, 1)])  # duplicate edge
    with pytest.raises(ConfigError):
        graphs.build_custom(3, [(0, 0)])  # self loop
    with pytest.raises(ConfigError):
        graphs.build_custom(3, [(0, 1), (1, 2)], origin=5)
    g = graphs.build_custom(3, [(0, 1), (1, 2)], origin=1, boundary=(0, 2))
    assert g.V == 3 and tuple(g.boundary) == (0, 2)
