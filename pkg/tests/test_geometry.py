import numpy as np
import pytest

from pq_lab.errors import GridTooLarge, InputRejected, InvalidPolygon
from pq_lab.geometry import Domain, boundary_strip_mask, build_grid, polygon_area, signed_distance, \
    validate_star_shaped

L_VERTICES = [[0, 0], [2, 0], [2, 1], [1, 1], [1, 2], [0, 2]]


def _brute_force_distance(vertices, point, n=20001):
    v = np.asarray(vertices, dtype=float)
    best = np.inf
    for a, b in zip(v, np.roll(v, -1, axis=0)):
        t = np.linspace(0, 1, n)[:, None]
        best = min(best, np.min(np.linalg.norm(a + t * (b - a) - point, axis=1)))
    return best


def test_signed_distance_unit_square(unit_square):
    assert signed_distance(unit_square, [0.5, 0.5]) == pytest.approx(0.5)
    assert signed_distance(unit_square, [0.0, 0.3]) == 0.0
    assert signed_distance(unit_square, [1.5, 0.5]) == pytest.approx(-0.5)


def test_signed_distance_l_shape_matches_edge_sampling(l_shape):
    for point in ([1.5, 1.5], [0.5, 0.5], [1.2, 0.9], [0.25, 1.75]):
        exact = abs(signed_distance(l_shape, point))
        assert exact == pytest.approx(_brute_force_distance(L_VERTICES, np.array(point)), abs=1e-6)
    assert signed_distance(l_shape, [1.5, 1.5]) < 0
    assert signed_distance(l_shape, [1.5, 1.5]) == pytest.approx(-0.5)


def test_signed_distance_keeps_leading_shape(unit_square, rng):
    pts = rng.uniform(-0.5, 1.5, size=(3, 4, 2))
    sd = signed_distance(unit_square, pts)
    assert sd.shape == (3, 4)
    inside = np.all((pts > 0) & (pts < 1), axis=-1)
    assert np.array_equal(sd > 0, inside)


def test_invalid_polygon_reports_loop_index():
    with pytest.raises(InvalidPolygon) as info:
        Domain(vertices=[[0, 0], [1, 1], [1, 0], [0, 1]])  # bow tie
    assert info.value.loop_index == 0
    with pytest.raises(InvalidPolygon) as info:
        Domain(vertices=[[0, 0], [4, 0], [4, 4], [0, 4]], holes=[[[3, 3], [5, 3], [5, 5], [3, 5]]])
    assert info.value.loop_index == 1


def test_domain_with_hole_area():
    d = Domain(vertices=[[0, 0], [4, 0], [4, 4], [0, 4]], holes=[[[1, 1], [2, 1], [2, 2], [1, 2]]])
    assert d.area == pytest.approx(15.0)
    assert signed_distance(d, [1.5, 1.5]) == pytest.approx(-0.5)


def test_clockwise_loop_is_reoriented():
    d = Domain(vertices=[[0, 0], [0, 1], [1, 1], [1, 0]])
    assert polygon_area(d.vertices) == pytest.approx(1.0)


def test_build_grid_node_counts(unit_square):
    grid = build_grid(unit_square, 0.25)
    assert grid.shape == (5, 5)
    assert int(grid.inside_mask.sum()) == 25
    assert int(grid.interior_mask.sum()) == 9


def test_build_grid_margin(unit_square):
    grid = build_grid(unit_square, 0.5, margin=0.5)
    assert grid.bbox == pytest.approx((-0.5, -0.5, 1.5, 1.5))
    assert grid.shape == (5, 5)


def test_build_grid_l_shape_inside_count(l_shape):
    grid = build_grid(l_shape, 0.01)
    assert int(grid.inside_mask.sum()) == pytest.approx(3 / 0.01 ** 2, rel=0.02)


def test_build_grid_rejects_large_grids(unit_square):
    with pytest.raises(GridTooLarge) as info:
        build_grid(unit_square, 1e-3, max_nodes=1000)
    assert info.value.required_bytes == 8 * info.value.n_nodes
    with pytest.raises(InputRejected):
        build_grid(unit_square, 0.0)


def test_inside_area_converges(l_shape):
    errors = []
    for h in (0.1, 0.05, 0.025):
        grid = build_grid(l_shape, h)
        errors.append(abs(grid.active_cells.sum() * h * h - l_shape.area))
    assert errors[-1] <= errors[0]


def test_boundary_strip_mask(unit_square):
    grid = build_grid(unit_square, 0.05)
    assert np.array_equal(boundary_strip_mask(grid, unit_square, 10.0), grid.inside_mask)
    strip = boundary_strip_mask(grid, unit_square, 0.26)
    # 21 x 21 nodes minus the 9 x 9 core at distance >= 0.3
    assert int(strip.sum()) == 441 - 81
    thin = boundary_strip_mask(grid, unit_square, 0.01)
    assert int(thin.sum()) == 80
    with pytest.raises(InputRejected):
        boundary_strip_mask(grid, unit_square, 0.0)


def test_star_shaped_validation():
    square = [[0, 0], [1, 0], [1, 1], [0, 1]]
    assert validate_star_shaped(square, [0.5, 0.5]).is_star
    assert validate_star_shaped([[0, 0], [3, 0], [0, 2]], [0.5, 0.5]).is_star
    report = validate_star_shaped(L_VERTICES, [1.75, 0.5])
    assert not report.is_star
    assert report.worst_crossings >= 2
    with pytest.raises(InputRejected):
        validate_star_shaped(square, [2.0, 2.0])
    with pytest.raises(InputRejected):
        validate_star_shaped(square, [0.5, 0.5], n_rays=16)


def test_star_decomposition_reports(l_shape, disk64):
    assert all(l_shape.star_reports())
    assert all(disk64.star_reports())
    assert min(r.kernel_margin for r in l_shape.star_reports()) == pytest.approx(0.5)


def test_domain_json_roundtrip(l_shape):
    again = Domain.from_dict(l_shape.to_dict())
    assert np.allclose(again.vertices, l_shape.vertices)
    assert len(again.star_centers) == 2
