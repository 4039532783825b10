"""Conforming bilinear (Q1) minimization of the quadrature energy with fixed boundary data."""
from dataclasses import dataclass, field

import numpy as np
from easydict import EasyDict
from scipy import sparse
from scipy.sparse.linalg import splu

from utils.basics import logger, pairwise_sum, time_logger, to_plain
from .errors import InputRejected, NonConvexIntegrand
from .fields import Field
from .integrands import convexity_audit, d_density, density

DEFAULT_SOLVER = EasyDict(max_iters=500, tol_grad=1e-8, tol_resid=1e-8, step0=0.5, armijo=1e-4,
                          max_backtracks=60, convexity_samples=2000, seed=0)

_G = 0.5 / np.sqrt(3.0)
GAUSS_POINTS = [(0.5 + a, 0.5 + b) for a in (-_G, _G) for b in (-_G, _G)]
# Q1 stiffness of the unit square, node order (0,0), (1,0), (0,1), (1,1)
_KE = np.array([[4, -1, -1, -2], [-1, 4, -2, -1], [-1, -2, 4, -1], [-2, -1, -1, 4]]) / 6.0


@dataclass(eq=False)
class MinimizeResult:
    v: Field
    trace: list
    residual: float
    el_sign: float  # quadrature of dF(x, Dv) . (Dv - Dg)
    dual_norm: float  # L^{q'} norm of dF(x, Dv)
    iterations: int
    status: str  # converged | max_iters | line_search_failed
    free: np.ndarray = field(default=None, repr=False)

    @property
    def energy(self):
        return self.trace[-1]

    @property
    def converged(self):
        return self.status == 'converged'

    def to_dict(self):
        return {'energy': self.energy, 'residual': self.residual, 'el_sign': self.el_sign,
                'dual_norm': self.dual_norm, 'iterations': self.iterations, 'status': self.status}


def free_nodes(grid, cells=None):
    """Nodes whose four surrounding cells are all active; every other node keeps its boundary value."""
    cells = grid.active_cells if cells is None else cells
    free = np.zeros(grid.shape, dtype=bool)
    free[1:-1, 1:-1] = cells[:-1, :-1] & cells[:-1, 1:] & cells[1:, :-1] & cells[1:, 1:]
    return free


def _corners(V):
    return V[..., :-1, :-1], V[..., :-1, 1:], V[..., 1:, :-1], V[..., 1:, 1:]


def _gauss_gradient(V, h, xi, eta):
    v00, v10, v01, v11 = _corners(V)
    dx = ((v10 - v00) * (1 - eta) + (v11 - v01) * eta) / h
    dy = ((v01 - v00) * (1 - xi) + (v11 - v10) * xi) / h
    return np.stack([dx, dy], axis=1).reshape((-1,) + dx.shape[1:])  # (2m, ny, nx)


def _gauss_points(grid, xi, eta):
    Xc, Yc = grid.cell_centers()
    return np.stack([Xc + (xi - 0.5) * grid.h, Yc + (eta - 0.5) * grid.h], axis=-1)


def q1_energy(F, V, grid, cells=None):
    """2x2 Gauss quadrature of F(x, Dv) for the bilinear interpolant of node values V."""
    cells = grid.active_cells if cells is None else cells
    parts = []
    for xi, eta in GAUSS_POINTS:
        dz = _gauss_gradient(V, grid.h, xi, eta)
        parts.append(density(F, _gauss_points(grid, xi, eta)[cells], np.moveaxis(dz, 0, -1)[cells]))
    return grid.h ** 2 / 4 * pairwise_sum(np.concatenate(parts))


def q1_energy_gradient(F, V, grid, cells=None, q_dual=None):
    """Derivative of q1_energy with respect to the node values, plus the L^{q'} norm of dF when q_dual is set."""
    cells = grid.active_cells if cells is None else cells
    h, w = grid.h, grid.h ** 2 / 4
    m = V.shape[0]
    G = np.zeros_like(V)
    dual = 0.0
    for xi, eta in GAUSS_POINTS:
        dz = _gauss_gradient(V, h, xi, eta)
        dF = np.moveaxis(d_density(F, _gauss_points(grid, xi, eta), np.moveaxis(dz, 0, -1)), -1, 0)
        dF = np.where(cells[None], dF, 0.0) * w
        if q_dual is not None:
            dual += np.sum(np.sqrt(np.sum(dF ** 2, axis=0)) ** q_dual) / w ** (q_dual - 1)
        for c in range(m):
            fx, fy = dF[2 * c] / h, dF[2 * c + 1] / h
            G[c, :-1, :-1] += -fx * (1 - eta) - fy * (1 - xi)
            G[c, :-1, 1:] += fx * (1 - eta) - fy * xi
            G[c, 1:, :-1] += -fx * eta + fy * (1 - xi)
            G[c, 1:, 1:] += fx * eta + fy * xi
    return (G, dual ** (1 / q_dual)) if q_dual is not None else G


def stiffness(grid, cells=None):
    """Q1 Laplacian stiffness matrix on all nodes, assembled over active cells."""
    cells = grid.active_cells if cells is None else cells
    idx = np.arange(grid.n_nodes).reshape(grid.shape)
    local = np.stack([c[cells] for c in _corners(idx)], axis=-1)  # (n_cells, 4)
    rows = np.repeat(local, 4, axis=1).ravel()
    cols = np.tile(local, (1, 4)).ravel()
    vals = np.tile(_KE.ravel(), len(local))
    return sparse.coo_matrix((vals, (rows, cols)), shape=(grid.n_nodes,) * 2).tocsc()


def _check_convex(F, params, m):
    audit = convexity_audit(F, {'n_samples': params.convexity_samples, 'seed': params.seed, 'm': m})
    if not audit.passed:
        raise NonConvexIntegrand(f'{F.name} fails the sampled convexity audit '
                                 f'(midpoint excess {audit.measured_constant:.3g}).')


@time_logger('minimize', log_func=logger.debug)
def minimize(F, g, grid=None, params=None, u0=None):
    """Preconditioned descent with Barzilai-Borwein steps and Armijo backtracking.

    Nodes outside `free_nodes(grid)` keep the values of g. The search direction is the
    gradient in the metric of the Q1 Laplacian on free nodes.
    """
    grid = grid or g.grid
    params = EasyDict({**DEFAULT_SOLVER, **(to_plain(params) or {})})
    if g.grid is not grid:
        raise InputRejected('Boundary data must live on the solver grid.')
    if not np.all(np.isfinite(g.values)):
        raise InputRejected('Boundary data has non-finite values.')
    m = g.m
    _check_convex(F, params, m)
    cells = grid.active_cells
    free = free_nodes(grid, cells)
    n_free = int(free.sum())
    V = (u0.values if u0 is not None else g.values).copy()
    V[:, ~free] = g.values[:, ~free]

    def energy_of(values):
        with np.errstate(all='ignore'):
            e = q1_energy(F, values, grid, cells)
        return e if np.isfinite(e) else np.inf

    def grad_of(values):
        return q1_energy_gradient(F, values, grid, cells)[:, free]

    def residual_of(gf):
        return float(np.sqrt(np.sum(gf ** 2)) / grid.h)

    trace = [energy_of(V)]
    if n_free == 0:
        logger.warning('No free nodes: the boundary data is the only admissible field.')
        return _finish(F, V, g, grid, cells, free, trace, 0.0, 0, 'converged')

    K = stiffness(grid, cells)
    flat_free = np.flatnonzero(free.ravel())
    Kff = K[flat_free][:, flat_free].tocsc()
    lu = splu(Kff)

    def precondition(gf):
        return np.stack([lu.solve(c) for c in gf])

    gf = grad_of(V)
    res = residual_of(gf)
    step, status, it = params.step0, 'max_iters', 0
    prev = None
    for it in range(1, params.max_iters + 1):
        if res <= params.tol_grad:
            status, it = 'converged', it - 1
            break
        d = -precondition(gf)
        slope = float(np.sum(gf * d))
        if prev is not None:
            s, y = prev
            sy = float(np.sum(s * y))
            sKs = float(sum(s_c @ (Kff @ s_c) for s_c in s))
            step = sKs / sy if sy > 0 else 2 * step
        e0, accepted = trace[-1], False
        for _ in range(params.max_backtracks):
            trial = V.copy()
            trial[:, free] += step * d
            e1 = energy_of(trial)
            if e1 <= e0 + params.armijo * step * slope:
                accepted = True
                break
            step /= 2
        if not accepted:
            status = 'line_search_failed'
            logger.warning(f'Line search failed at iteration {it}; returning the last iterate.')
            break
        g_new = grad_of(trial)
        prev = (step * d, g_new - gf)
        V, gf = trial, g_new
        trace.append(e1)
        res = residual_of(gf)
        if it % 50 == 0:
            logger.debug(f'iter {it}: energy={e1:.12g}, residual={res:.3e}, step={step:.3e}')
    else:
        if res <= params.tol_grad:
            status = 'converged'
    return _finish(F, V, g, grid, cells, free, trace, res, it, status)


def _finish(F, V, g, grid, cells, free, trace, res, it, status):
    q_dual = F.q / (F.q - 1)
    G, dual = q1_energy_gradient(F, V, grid, cells, q_dual=q_dual)
    el_sign = float(np.sum(G * (V - g.values)))
    result = MinimizeResult(Field(grid, V), [float(e) for e in trace], float(res), el_sign, float(dual), it, status,
                            free)
    logger.info(f'minimize[{F.name}]: {status} after {it} iterations, energy={result.energy:.12g}, '
                f'residual={res:.3e}, el_sign={el_sign:.3e}, |dF|_q\'={dual:.4g}')
    return result
