import numpy as np
import pytest

from pq_lab.errors import InputRejected
from pq_lab.geometry import signed_distance
from pq_lab.wb_cover import Covering, audit_covering, build_wb_covering, circle_intersections, lens_area, \
    max_depth, min_overlap_ratio, neighbors


@pytest.fixture(scope='module')
def square_cover(unit_square):
    return build_wb_covering(unit_square, 0.05)


def test_lens_area():
    assert lens_area(0.0, 1.0, 1.0) == pytest.approx(np.pi)
    assert lens_area(0.2, 1.0, 0.5) == pytest.approx(np.pi * 0.25)
    assert lens_area(2.5, 1.0, 1.0) == 0.0
    assert lens_area(1.0, 1.0, 1.0) == pytest.approx(2 * np.pi / 3 - np.sqrt(3) / 2)


def test_circle_intersections():
    pts = circle_intersections(np.array([[0.0, 0.0]]), np.array([1.0]), np.array([[1.0, 0.0]]), np.array([1.0]))
    assert pts.shape == (2, 2)
    assert np.allclose(sorted(pts[:, 1]), [-np.sqrt(3) / 2, np.sqrt(3) / 2])
    assert np.allclose(pts[:, 0], 0.5)
    far = circle_intersections(np.array([[0.0, 0.0]]), np.array([1.0]), np.array([[5.0, 0.0]]), np.array([1.0]))
    assert far.shape == (0, 2)


def test_max_depth():
    chain = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    assert max_depth(chain, np.full(3, 0.6)) == 2
    assert max_depth(chain, np.full(3, 0.4)) == 1
    triangle = np.array([[0.0, 0.0], [0.1, 0.0], [0.05, 0.08]])
    assert max_depth(triangle, np.ones(3)) == 3


def test_min_overlap_ratio():
    centers = np.array([[0.0, 0.0], [1.0, 0.0]])
    assert min_overlap_ratio(centers, np.array([1.0, 1.0])) == pytest.approx((2 * np.pi / 3 - np.sqrt(3) / 2) / np.pi)
    assert min_overlap_ratio(centers, np.array([0.3, 0.3])) == 1.0


def test_single_ball_constants(unit_square):
    cov = Covering.from_balls(unit_square, [[0.5, 0.5]], [0.2])
    assert cov.delta == pytest.approx(0.25)
    assert cov.M == 1
    assert cov.eps_ov == 1.0
    with pytest.raises(InputRejected):
        Covering.from_balls(unit_square, [[0.1, 0.5]], [0.1])


def test_wb_covering_properties(square_cover, unit_square):
    cov = square_cover
    assert len(cov) > 10
    assert 0 < cov.delta <= 0.25
    assert cov.M >= 2
    assert 0 <= cov.eps_ov <= 1
    assert np.all((cov.radii >= 0.05) & (cov.radii <= 1))
    sd = signed_distance(unit_square, cov.centers)
    assert np.all(sd >= (1 + cov.delta) * cov.radii * (1 - 1e-12))
    assert np.all(cov.radii <= 0.25 * sd + 1e-12)


def test_wb_covering_audit_passes(square_cover, unit_square):
    audit = audit_covering(square_cover, unit_square, 0.0125)
    assert audit.passed, audit.violations
    assert audit.coverage_defect == 0.0
    assert audit.max_multiplicity <= square_cover.M
    assert np.isfinite(audit.c_boundary)
    with pytest.raises(InputRejected):
        audit_covering(square_cover, unit_square, 0.05)


def test_neighbors_are_symmetric(square_cover):
    factor = 1 + square_cover.delta / 2
    for i in range(0, len(square_cover), 7):
        for j in neighbors(square_cover, i, factor):
            assert i in neighbors(square_cover, int(j), factor)
            assert i != j
    with pytest.raises(InputRejected):
        neighbors(square_cover, 0, 3.0)
    with pytest.raises(InputRejected):
        neighbors(square_cover, len(square_cover), 1.0)


def test_wb_covering_rejects_bad_parameters(unit_square):
    with pytest.raises(InputRejected):
        build_wb_covering(unit_square, 0.0)
    with pytest.raises(InputRejected):
        build_wb_covering(unit_square, 0.05, lam=0.9)


def test_wb_covering_l_shape(l_shape):
    cov = build_wb_covering(l_shape, 0.05)
    sd = signed_distance(l_shape, cov.centers)
    assert np.all(sd > cov.radii)
    assert cov.M >= 1


def test_covering_file_keeps_balls(square_cover, tmp_path):
    file_name = square_cover.save(str(tmp_path / 'cov.json'))
    again = Covering.load(file_name)
    assert len(again) == len(square_cover)
    assert np.allclose(again.centers, square_cover.centers)
    assert (again.delta, again.M, again.eps_ov) == (square_cover.delta, square_cover.M, square_cover.eps_ov)


@pytest.mark.parametrize('name', ['unit_square', 'l_shape', 'disk64'])
def test_wb_covering_certified_on_catalog_domains(name, request):
    domain = request.getfixturevalue(name)
    cov = build_wb_covering(domain, 0.05)
    audit = audit_covering(cov, domain, 0.005)
    assert audit.passed, audit.violations
    assert audit.coverage_defect < 1e-3


def test_wide_lambda_coverings(wide_cover, two_scale_cover):
    assert len(wide_cover) == 4
    assert np.allclose(wide_cover.radii, 0.28125)
    assert wide_cover.delta == pytest.approx(0.25)
    assert len(two_scale_cover) == 24
    assert sorted(set(np.round(two_scale_cover.radii, 10))) == [0.140625, 0.28125]
    assert np.allclose(two_scale_cover.centers[:4], wide_cover.centers)
