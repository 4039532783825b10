"""Cutoff functions, the partition of unity subordinate to a covering and the
weight-adapted choice of cutoff shells."""
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from utils.basics import first_index, logger, smoothstep, smoothstep_deriv, time_logger
from .errors import InputRejected, PartitionDefect
from .fields import Field, Patch

PROFILES = ('polynomial', 'smooth_exp')
N_CANDIDATES = 32
SUM_TOL = 1e-12


def _exp_step(t):
    # C-infinity step 0 -> 1 on [0, 1] built from f(s) = exp(-1/s)
    t = np.clip(t, 0.0, 1.0)
    with np.errstate(divide='ignore', over='ignore'):
        f0 = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        f1 = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return f0 / (f0 + f1)


def _exp_step_deriv(t):
    inside = (t > 0) & (t < 1)
    s = np.where(inside, t, 0.5)
    f0, f1 = np.exp(-1.0 / s), np.exp(-1.0 / (1.0 - s))
    d = (f0 / s ** 2 * f1 + f0 * f1 / (1.0 - s) ** 2) / (f0 + f1) ** 2
    return np.where(inside, d, 0.0)


_STEPS = {'polynomial': (smoothstep, smoothstep_deriv), 'smooth_exp': (_exp_step, _exp_step_deriv)}


def bump(ball, delta, grid, profile='polynomial', shell=None):
    """Cutoff equal to 1 on the ball (or up to `shell`) and 0 outside (1+delta/2)*ball."""
    if profile not in PROFILES:
        raise InputRejected(f'Unknown bump profile {profile!r}, choose from {PROFILES}.')
    outer = (1 + delta / 2) * ball.r
    inner = ball.r if shell is None else float(shell)
    if shell is not None and not ball.r < inner < outer:
        raise InputRejected(f'Shell radius {inner:.6g} outside the annulus ({ball.r:.6g}, {outer:.6g}).')
    step, step_d = _STEPS[profile]
    rows, cols = grid.window(ball.cx, ball.cy, outer)
    dx = grid.x[cols][None, :] - ball.cx
    dy = grid.y[rows][:, None] - ball.cy
    rho = np.hypot(dx, dy)
    t = (rho - inner) / (outer - inner)
    values = 1.0 - step(t)
    slope = -step_d(t) / (outer - inner)
    safe = np.where(rho > 0, rho, 1.0)
    grad = np.stack([slope * dx / safe, slope * dy / safe])
    return Patch(rows, cols, values, grad)


@dataclass(eq=False)
class PartitionOfUnity:
    covering: object
    grid: object
    psi: list  # Patch per ball
    psi0: np.ndarray = field(repr=False)  # weight of the uncovered boundary strip
    dpsi0: np.ndarray = field(repr=False)
    phi: list = field(repr=False)
    sum_phi: np.ndarray = field(repr=False)
    covered: np.ndarray = field(repr=False)
    deriv_bound_c: float = 0.0
    chain_constant: float = 0.0

    def __len__(self):
        return len(self.psi)

    def total(self):
        out = self.psi0.copy()
        for pt in self.psi:
            out[pt.rows, pt.cols] += pt.values
        return out

    def psi_field(self, i):
        return Field(self.grid, self.psi[i].embed(self.grid))

    def derivative_sum(self):
        out = self.dpsi0.copy()
        for pt in self.psi:
            out[:, pt.rows, pt.cols] += pt.grad
        return out


def covered_mask(covering, grid, factor=1.0):
    mask = np.zeros(grid.shape, dtype=bool)
    for c, r in zip(covering.centers, covering.radii):
        rows, cols = grid.window(c[0], c[1], factor * r)
        d2 = (grid.x[cols][None, :] - c[0]) ** 2 + (grid.y[rows][:, None] - c[1]) ** 2
        mask[rows, cols] |= d2 <= (factor * r) ** 2
    return mask


@time_logger('partition of unity', log_func=logger.debug)
def build_partition(covering, bumps, grid):
    if len(bumps) != len(covering):
        raise InputRejected(f'{len(bumps)} bumps given for a covering of {len(covering)} balls.')
    S = np.zeros(grid.shape)
    dS = np.zeros((2,) + grid.shape)
    P = np.ones(grid.shape)
    G = np.zeros((2,) + grid.shape)
    for b in bumps:
        w = (b.rows, b.cols)
        S[w] += b.values
        dS[(slice(None),) + w] += b.grad
        one_minus = 1.0 - b.values
        P[w] *= one_minus
        ratio = np.where(one_minus > 0, 1.0 / np.where(one_minus > 0, one_minus, 1.0), 0.0)
        G[(slice(None),) + w] += b.grad * ratio
    P = np.where(P > 0, P, 0.0)
    dP = np.where(P > 0, -P * G, 0.0)

    covered = covered_mask(covering, grid)
    low = covered & (S < 1 - SUM_TOL)
    if np.any(low):
        node = first_index(low)
        raise PartitionDefect(node, float(S[node]))

    D = P + S
    dD = dP + dS
    psi = []
    for b in bumps:
        w = (b.rows, b.cols)
        d, dd = D[w], dD[(slice(None),) + w]
        psi.append(Patch(b.rows, b.cols, b.values / d, b.grad / d - b.values * dd / d ** 2))
    psi0 = P / D
    dpsi0 = dP / D - P * dD / D ** 2

    sup_psi = np.array([np.sqrt((pt.grad ** 2).sum(axis=0)).max(initial=0.0) for pt in psi])
    sup_phi = np.array([np.sqrt((b.grad ** 2).sum(axis=0)).max(initial=0.0) for b in bumps])
    deriv_bound_c = float(np.max(covering.radii * sup_psi))
    chain = 0.0
    for i, nb in enumerate(covering.neighbor_index):
        denom = sup_phi[i] + sup_phi[np.asarray(nb, dtype=int)].sum()
        if denom > 0:
            chain = max(chain, sup_psi[i] / denom)
    pou = PartitionOfUnity(covering, grid, psi, psi0, dpsi0, list(bumps), S, covered,
                           deriv_bound_c=deriv_bound_c, chain_constant=float(chain))
    logger.info(f'Partition of unity: {len(psi)} weights, deriv_bound_c={deriv_bound_c:.4g}, '
                f'chain_constant={chain:.4g}.')
    return pou


def standard_partition(covering, grid, profile='polynomial', shells=None):
    shells = shells if shells is not None else [None] * len(covering)
    bumps = [bump(b, covering.delta, grid, profile, s) for b, s in zip(covering.balls, shells)]
    return build_partition(covering, bumps, grid)


# ! Adapted cutoff shells

@dataclass
class ShellProfile:
    radii: np.ndarray
    integrals: np.ndarray  # integral of |w| over each candidate circle
    chosen: float
    annulus_mean: float
    j_bound: float  # right-hand side of the shell averaging bound


def _check_exponents(t1, t2, delta_exp):
    if not t1 > t2 >= 1:
        raise InputRejected(f'Need t1 > t2 >= 1, got t1={t1}, t2={t2}.')
    if not 0 < delta_exp < 1:
        raise InputRejected(f'delta_exp must lie in (0, 1), got {delta_exp}.')


def shell_profile(ball, weight, delta, t1=2.0, t2=1.0, delta_exp=0.5, n_candidates=N_CANDIDATES):
    _check_exponents(t1, t2, delta_exp)
    grid = weight.grid
    w = weight.values[0] if isinstance(weight, Field) else np.asarray(weight)
    outer = (1 + delta / 2) * ball.r
    rows, cols = grid.window(ball.cx, ball.cy, outer + grid.h)
    local = w[rows, cols]
    if np.any(np.isnan(local)) or np.any(local < 0):
        raise InputRejected(f'Shell weight around ball ({ball.cx:.4g}, {ball.cy:.4g}) is negative or NaN.')
    interp = RegularGridInterpolator((grid.y[rows], grid.x[cols]), local, bounds_error=False, fill_value=None)
    k = np.arange(n_candidates)
    radii = ball.r * (1 + (delta / 2) * (k + 1) / (n_candidates + 1))
    n_theta = max(64, 2 * int(np.ceil(2 * np.pi * outer / grid.h)))
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    ring = np.stack([np.sin(theta), np.cos(theta)], axis=-1)
    pts = np.array([ball.cy, ball.cx]) + radii[:, None, None] * ring[None]
    integrals = 2 * np.pi * radii * np.abs(interp(pts)).mean(axis=1)
    chosen = float(radii[int(np.argmin(integrals))])
    width = outer - ball.r
    j_bound = width ** (-t1 - 1 / delta_exp) * (width * np.mean(integrals ** delta_exp)) ** (1 / delta_exp)
    return ShellProfile(radii, integrals, chosen, float(integrals.mean()), float(j_bound))


def adapted_shell_radius(ball, weight, delta, t1=2.0, t2=1.0, delta_exp=0.5, n_candidates=N_CANDIDATES):
    """Candidate shell radius in (r, (1+delta/2) r) with the least weight on its circle."""
    return shell_profile(ball, weight, delta, t1, t2, delta_exp, n_candidates).chosen


def adapted_partition(covering, grid, weight, t1=2.0, t2=1.0, delta_exp=0.5, profile='polynomial'):
    shells = [adapted_shell_radius(b, weight, covering.delta, t1, t2, delta_exp) for b in covering.balls]
    return standard_partition(covering, grid, profile, shells)
