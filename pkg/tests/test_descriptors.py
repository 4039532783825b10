import numpy as np
import pytest
from omegaconf import OmegaConf

from pq_lab.descriptors import Affine, Bump, Cone, Constant, FileField, LogLog, RadialPower, Sine, Sum, \
    build_descriptor, snap_singular_centers
from pq_lab.errors import InputRejected
from pq_lab.fields import Field


def _fd_gradient(desc, x, y, step=1e-6):
    dx = (desc.value(np.array(x + step), np.array(y)) - desc.value(np.array(x - step), np.array(y))) / (2 * step)
    dy = (desc.value(np.array(x), np.array(y + step)) - desc.value(np.array(x), np.array(y - step))) / (2 * step)
    return np.array([dx[0], dy[0]])


@pytest.mark.parametrize('desc', [
    Bump(center=(0.4, 0.5), radius=0.3),
    RadialPower(center=(0.5, 0.5), beta=0.3, radius=0.4),
    LogLog(center=(0.5, 0.5), radius=0.4),
    Sine(freq=(1.0, 2.0), amplitude=0.5),
    Cone(center=(0.2, 0.1), slope=2.0),
    Affine(slope=[2.0, -1.0], offset=0.3),
])
def test_gradient_matches_finite_differences(desc):
    for x, y in ((0.55, 0.45), (0.3, 0.6), (0.62, 0.71)):
        exact = desc.gradient(np.array(x), np.array(y))
        assert np.allclose(exact, _fd_gradient(desc, x, y), atol=1e-5)


def test_affine_shapes(square_grid):
    a = Affine(slope=[[1.0, 2.0], [0.0, -1.0]], offset=[0.5, 0.0])
    assert a.m == 2
    f = a.field(square_grid)
    assert f.values.shape == (2,) + square_grid.shape
    grad = a.gradient_field(square_grid).values
    assert np.allclose(grad[:, 3, 5], [1.0, 2.0, 0.0, -1.0])


def test_compact_support():
    bump = Bump(center=(0.5, 0.5), radius=0.2)
    assert bump.at_points([0.9, 0.9])[0] == 0.0
    assert bump.at_points([0.5, 0.5])[0] == pytest.approx(1.0)
    rp = RadialPower(center=(0.5, 0.5), beta=0.1, radius=0.4)
    assert rp.at_points([0.95, 0.5])[0] == 0.0
    assert rp.at_points([0.5, 0.5])[0] == pytest.approx(-0.4 ** 0.1)
    ll = LogLog(center=(0.5, 0.5), radius=0.4, cap=5.0)
    assert ll.at_points([0.5, 0.5])[0] == 5.0
    assert ll.at_points([0.5, 0.9 - 1e-12])[0] == pytest.approx(0.0, abs=1e-9)


def test_sum_and_constant(square_grid):
    s = Sum([{'type': 'constant', 'value': 2.0}, Affine(slope=[1.0, 0.0])])
    X, Y = square_grid.mesh()
    assert np.allclose(s.field(square_grid).values[0], X + 2.0)
    assert (Constant(1.0) + Constant(2.0)).at_points([0.3, 0.3])[0] == 3.0
    with pytest.raises(InputRejected):
        Sum([Constant([1.0, 2.0]), Constant(1.0)])


def test_build_descriptor_forms():
    assert isinstance(build_descriptor({'type': 'cone', 'params': {'slope': 3.0}}), Cone)
    assert isinstance(build_descriptor({'type': 'zero'}), Constant)
    cfg = OmegaConf.create({'_target_': 'pq_lab.descriptors.Affine', 'slope': [0.0, 1.0]})
    aff = build_descriptor(cfg)
    assert isinstance(aff, Affine)
    assert aff.at_points([0.2, 0.7])[0] == pytest.approx(0.7)
    with pytest.raises(InputRejected):
        build_descriptor({'type': 'spline'})
    with pytest.raises(InputRejected):
        build_descriptor(3.0)


def test_file_field_interpolates_affine(square_grid, tmp_path):
    file_name = Field.from_function(square_grid, lambda X, Y: 2 * X - Y + 1).write(str(tmp_path / 'aff.pqf'))
    desc = build_descriptor({'type': 'file', 'file': file_name})
    assert isinstance(desc, FileField)
    pts = np.array([[0.123, 0.456], [0.9, 0.01], [0.5, 0.5]])
    assert np.allclose(desc.at_points(pts)[0], 2 * pts[:, 0] - pts[:, 1] + 1)
    grad = desc.gradient(pts[:, 0], pts[:, 1])
    assert np.allclose(grad[0], 2.0) and np.allclose(grad[1], -1.0)


def test_snap_singular_centers(square_grid):
    desc = Sum([Affine(slope=[1.0, 0.0]), RadialPower(center=(0.5, 0.5), beta=0.3, radius=0.4),
                LogLog(center=(0.2, 0.7), radius=0.1)])
    snapped = snap_singular_centers(desc, square_grid)
    h = square_grid.h
    assert np.allclose(snapped.terms[1].center, [0.5 + h / 2, 0.5 + h / 2])
    assert np.allclose(snapped.terms[2].center, [np.floor(0.2 / h) * h + h / 2, np.floor(0.7 / h) * h + h / 2])
    assert np.allclose(desc.terms[1].center, [0.5, 0.5])
    assert np.isfinite(snapped.field(square_grid).values).all()
    assert snap_singular_centers(Bump(center=(0.5, 0.5), radius=0.3), square_grid).center.tolist() == [0.5, 0.5]
