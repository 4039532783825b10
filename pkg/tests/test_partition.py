import numpy as np
import pytest

from pq_lab.errors import InputRejected, PartitionDefect
from pq_lab.fields import Field, Patch
from pq_lab.geometry import build_grid
from pq_lab.partition import adapted_partition, bump, build_partition, covered_mask, shell_profile, \
    standard_partition
from pq_lab.wb_cover import Ball, Covering, build_wb_covering


@pytest.fixture(scope='module')
def cover(unit_square):
    return build_wb_covering(unit_square, 0.1)


@pytest.mark.parametrize('profile', ['polynomial', 'smooth_exp'])
def test_bump_support(square_grid, profile):
    ball = Ball(0.5, 0.5, 0.2)
    b = bump(ball, 0.25, square_grid, profile)
    rho = np.hypot(square_grid.x[b.cols][None, :] - 0.5, square_grid.y[b.rows][:, None] - 0.5)
    assert np.all(b.values[rho <= 0.2] == 1.0)
    assert np.all(b.values[rho >= 0.225] == 0.0)
    assert np.all((b.values >= 0) & (b.values <= 1))
    assert np.all(b.grad[:, rho <= 0.2] == 0.0)


def test_bump_shell_and_profile_checks(square_grid):
    ball = Ball(0.5, 0.5, 0.2)
    b = bump(ball, 0.25, square_grid, shell=0.21)
    rho = np.hypot(square_grid.x[b.cols][None, :] - 0.5, square_grid.y[b.rows][:, None] - 0.5)
    assert np.all(b.values[rho <= 0.21] == 1.0)
    with pytest.raises(InputRejected):
        bump(ball, 0.25, square_grid, shell=0.3)
    with pytest.raises(InputRejected):
        bump(ball, 0.25, square_grid, profile='gaussian')


@pytest.mark.parametrize('profile', ['polynomial', 'smooth_exp'])
def test_partition_sums_to_one(cover, square_grid, profile):
    pou = standard_partition(cover, square_grid, profile)
    assert len(pou) == len(cover)
    assert np.allclose(pou.total(), 1.0, atol=1e-12)
    assert np.allclose(pou.derivative_sum(), 0.0, atol=1e-8)
    assert np.all(pou.psi0 >= 0)
    assert np.all(pou.psi0[pou.covered] == 0.0)
    for pt in pou.psi:
        assert np.all(pt.values >= 0)
    assert pou.deriv_bound_c > 0
    assert np.isfinite(pou.chain_constant)


def test_psi_vanishes_outside_half_dilation(cover, square_grid):
    pou = standard_partition(cover, square_grid)
    i = 0
    ball = cover.balls[i]
    psi = pou.psi_field(i).values[0]
    X, Y = square_grid.mesh()
    outside = np.hypot(X - ball.cx, Y - ball.cy) >= (1 + cover.delta / 2) * ball.r
    assert np.all(psi[outside] == 0.0)


def test_partition_defect_is_reported(unit_square, cover, square_grid):
    single = Covering.from_balls(unit_square, [[0.5, 0.5]], [0.2])
    b = bump(single.balls[0], single.delta, square_grid)
    with pytest.raises(PartitionDefect) as info:
        build_partition(single, [Patch(b.rows, b.cols, 0.5 * b.values, 0.5 * b.grad)], square_grid)
    assert covered_mask(single, square_grid)[info.value.node]
    with pytest.raises(InputRejected):
        build_partition(cover, [b], square_grid)


def test_shell_profile_prefers_small_weight(square_grid):
    ball = Ball(0.5, 0.5, 0.2)
    # Bilinear interpolation reproduces affine weights, so circle integrals grow with the radius
    weight = Field.from_function(square_grid, lambda X, Y: X + 1.0)
    prof = shell_profile(ball, weight, 0.25)
    assert prof.chosen == pytest.approx(prof.radii[0])
    assert np.all(np.diff(prof.integrals) > 0)
    assert prof.integrals[0] == pytest.approx(2 * np.pi * prof.radii[0] * 1.5, rel=1e-9)
    assert np.all((prof.radii > 0.2) & (prof.radii < 0.225))
    assert prof.j_bound > 0
    with pytest.raises(InputRejected):
        shell_profile(ball, weight, 0.25, t1=1.0, t2=1.0)
    with pytest.raises(InputRejected):
        shell_profile(ball, Field(square_grid, -np.ones(square_grid.shape)), 0.25)


def test_adapted_partition_sums_to_one(cover, square_grid):
    weight = Field.from_function(square_grid, lambda X, Y: 1.0 + X * X)
    pou = adapted_partition(cover, square_grid, weight)
    assert np.allclose(pou.total(), 1.0, atol=1e-12)


def test_partition_bounds_stable_across_r_min(unit_square):
    grid = build_grid(unit_square, 1 / 1024)
    X, Y = grid.mesh()
    bounds = []
    for r_min in (0.05, 0.025):
        cov = build_wb_covering(unit_square, r_min)
        pou = standard_partition(cov, grid)
        assert np.max(np.abs(pou.total() - 1.0)[pou.covered]) <= 1e-12
        for ball, pt in zip(cov.balls, pou.psi):
            rho = np.hypot(X[pt.rows, pt.cols] - ball.cx, Y[pt.rows, pt.cols] - ball.cy)
            assert np.all(pt.values[rho <= ball.r] >= 1 / cov.M - 1e-12)
        bounds.append(pou.deriv_bound_c)
    assert 1 / 1.5 <= bounds[1] / bounds[0] <= 1.5
