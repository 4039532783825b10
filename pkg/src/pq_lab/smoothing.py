"""Mollification, boundary-adapted smoothing, truncation and star-shaped rescaling."""
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import signal
from scipy.interpolate import RegularGridInterpolator
from scipy.spatial import cKDTree

from utils.basics import logger, smoothstep, time_logger
from .errors import InputRejected, UnderResolvedKernel
from .fields import Field, gradient_values
from .geometry import Domain, signed_distance
from .integrands import density
from .metrics import fit_slope, lp_norm

MOLLIFIERS = ('polynomial', 'smooth_exp')
MAX_UNRESOLVED_FRACTION = 0.2
SLOPE_TOL = 0.15


# ! Kernels

def mollifier_kernel(eps, h, mollifier='polynomial'):
    """Discrete radial kernel of support radius eps on spacing h, weights summing to 1."""
    if mollifier not in MOLLIFIERS:
        raise InputRejected(f'Unknown mollifier {mollifier!r}, choose from {MOLLIFIERS}.')
    k = int(np.floor(eps / h + 1e-12))
    offs = h * np.arange(-k, k + 1)
    X, Y = np.meshgrid(offs, offs)
    s2 = (X ** 2 + Y ** 2) / eps ** 2
    if mollifier == 'polynomial':
        w = np.where(s2 < 1, (1 - s2) ** 3, 0.0)
    else:
        w = np.where(s2 < 1, np.exp(-1.0 / np.where(s2 < 1, 1 - s2, 1.0)), 0.0)
    return w / w.sum()


def _convolve_valid(src, kernel, method='auto'):
    return signal.convolve(src, kernel, mode='valid', method=method)


def mollify_values(values, kernel, method='auto'):
    """Convolve every component of (m, ny, nx) values; edge padding outside the grid."""
    k = kernel.shape[0] // 2
    return np.stack([_convolve_valid(np.pad(v, k, mode='edge'), kernel, method) for v in values])


def mollify(field_, eps, mollifier='polynomial', method='auto'):
    h = field_.grid.h
    if eps < 2 * h:
        raise UnderResolvedKernel(f'Mollification radius {eps:.4g} < 2h = {2 * h:.4g}: refine the grid.')
    kernel = mollifier_kernel(eps, h, mollifier)
    return Field(field_.grid, mollify_values(field_.values, kernel, method))


def _local_mollify(values, rows, cols, kernel, extra=1):
    """Mollify a (ny+1, nx+1) array on a node window grown by `extra` nodes.

    Returns the mollified window and the slices locating the original window inside it.
    """
    ny1, nx1 = values.shape
    k = kernel.shape[0] // 2
    r0, r1 = max(rows.start - extra, 0), min(rows.stop + extra, ny1)
    c0, c1 = max(cols.start - extra, 0), min(cols.stop + extra, nx1)
    s0, s1 = r0 - k, r1 + k
    t0, t1 = c0 - k, c1 + k
    src = values[max(s0, 0):min(s1, ny1), max(t0, 0):min(t1, nx1)]
    pad = ((max(-s0, 0), max(s1 - ny1, 0)), (max(-t0, 0), max(t1 - nx1, 0)))
    out = _convolve_valid(np.pad(src, pad, mode='edge'), kernel)
    inner = (slice(rows.start - r0, rows.stop - r0), slice(cols.start - c0, cols.stop - c0))
    return out, inner


# ! Parameters

@dataclass
class SmoothingParams:
    eps: float
    C0: object = None  # float, 'auto' or None for delta/4
    N: int = 1
    mollifier: str = 'polynomial'
    max_unresolved_fraction: float = MAX_UNRESOLVED_FRACTION

    def resolve(self, covering, eps_max=None):
        """Concrete C0 for the covering; 'auto' takes the largest admissible value at eps_max."""
        if self.C0 is None:
            self.C0 = covering.delta / 4
        elif self.C0 == 'auto':
            self.C0 = admissible_C0(covering, eps_max or self.eps, self.N)
        self.C0 = float(self.C0)
        return self

    def validate(self, covering):
        if not 0 < self.eps < 1:
            raise InputRejected(f'eps must lie in (0, 1), got {self.eps}.')
        if self.N < 1:
            raise InputRejected(f'The radius exponent N must be >= 1, got {self.N}.')
        if self.mollifier not in MOLLIFIERS:
            raise InputRejected(f'Unknown mollifier {self.mollifier!r}.')
        self.resolve(covering)
        if self.C0 <= 0:
            raise InputRejected(f'C0 must be positive, got {self.C0}.')
        r = covering.radii
        reach = (1 + covering.delta / 2) * r + self.kernel_radii(covering)
        bad = reach > (1 + covering.delta) * r * (1 + 1e-12)
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise InputRejected(f'Ball {i}: (1+delta/2)r + C0 r^N eps exceeds (1+delta)r; '
                                f'lower C0 below {admissible_C0(covering, self.eps, self.N):.4g}.')
        return self

    def kernel_radii(self, covering):
        return self.C0 * covering.radii ** self.N * self.eps


def admissible_C0(covering, eps, N=1):
    return float((covering.delta / 2) / (eps * np.max(covering.radii ** (N - 1))))


# ! Boundary data

def blend_source(u, g, domain, eps):
    """g on the strip d(x, boundary) < eps and outside the domain, u elsewhere."""
    grid = u.grid
    sd = grid.sdist if domain is grid.domain else signed_distance(domain, grid.points)
    return Field(grid, np.where((sd < eps)[None], g.values, u.values))


def extend_boundary_data(g, grid, domain=None):
    """Boundary data on the whole grid: nearest boundary value outside the domain, then one 2h mollification there."""
    domain = domain or grid.domain
    outside = grid.sdist < 0
    if isinstance(g, Field):
        values = g.values.copy()
        inside = ~outside
        tree = cKDTree(grid.points[inside])
        _, idx = tree.query(grid.points[outside])
        values[:, outside] = values[:, inside][:, idx]
    else:
        X, Y = grid.mesh()
        values = np.asarray(g.value(X, Y), dtype=np.float64).copy()
        if np.any(outside):
            _, closest = signed_distance(domain, grid.points[outside], return_closest=True)
            values[:, outside] = g.at_points(closest)
    if np.any(outside):
        smooth = mollify_values(values, mollifier_kernel(2 * grid.h, grid.h))
        values[:, outside] = smooth[:, outside]
    return Field(grid, values)


# ! Boundary-adapted smoothing

@dataclass(eq=False)
class SmoothedResult:
    u_eps: Field
    A1: Field
    A2: Field
    per_ball_radii: np.ndarray
    v_source: Field
    n_unresolved: int = 0
    unresolved: np.ndarray = field(default=None, repr=False)

    @property
    def split_defect(self):
        """Du_eps - A1 - A2 on the nodes."""
        return self.u_eps.gradient().values - self.A1.values - self.A2.values


@time_logger('boundary-adapted smoothing', log_func=logger.debug)
def boundary_adapted_smooth(u, g, covering, pou, params):
    grid = u.grid
    if pou.covering is not covering or len(pou) != len(covering):
        raise InputRejected('Partition of unity was built for a different covering.')
    if pou.grid is not grid or g.grid is not grid:
        raise InputRejected('u, g and the partition of unity must share one grid.')
    params.validate(covering)
    radii = params.kernel_radii(covering)
    unresolved = radii < 2 * grid.h
    frac = float(unresolved.mean())
    if frac > params.max_unresolved_fraction:
        raise UnderResolvedKernel(f'{unresolved.sum()} of {len(radii)} balls ({frac:.1%}) have kernel radius < 2h '
                                  f'at eps={params.eps:g}: use a finer grid.')
    if unresolved.any():
        logger.debug(f'eps={params.eps:g}: {int(unresolved.sum())} balls below grid resolution, merged into the g-strip.')

    v = blend_source(u, g, grid.domain, params.eps)
    m = u.m
    dg = gradient_values(g.values, grid.h)
    psi0 = pou.psi0[None]
    u_eps = psi0 * g.values
    A1 = np.concatenate([pou.psi0[None] * dg[2 * c:2 * c + 2] for c in range(m)])
    A2 = np.concatenate([(g.values[c] - v.values[c])[None] * pou.dpsi0 for c in range(m)])

    for i, pt in enumerate(pou.psi):
        win = (pt.rows, pt.cols)
        if unresolved[i]:
            # Sub-grid kernel: the ball is merged into the g-strip
            for c in range(m):
                u_eps[(c,) + win] += pt.values * g.values[(c,) + win]
                A1[(slice(2 * c, 2 * c + 2),) + win] += pt.values[None] * dg[(slice(2 * c, 2 * c + 2),) + win]
                A2[(slice(2 * c, 2 * c + 2),) + win] += (g.values[(c,) + win] - v.values[(c,) + win])[None] * pt.grad
            continue
        kernel = mollifier_kernel(radii[i], grid.h, params.mollifier)
        for c in range(m):
            w_big, inner = _local_mollify(v.values[c], pt.rows, pt.cols, kernel)
            w = w_big[inner]
            dw = gradient_values(w_big[None], grid.h)[(slice(None),) + inner]
            u_eps[(c,) + win] += pt.values * w
            A1[(slice(2 * c, 2 * c + 2),) + win] += pt.values[None] * dw
            A2[(slice(2 * c, 2 * c + 2),) + win] += (w - v.values[(c,) + win])[None] * pt.grad

    boundary = grid.sdist <= 0
    u_eps[:, boundary] = g.values[:, boundary]
    return SmoothedResult(Field(grid, u_eps), Field(grid, A1, check=False), Field(grid, A2, check=False),
                          radii, v, int(unresolved.sum()), unresolved)


# ! Mollification rates

@dataclass
class RateReport:
    table: pd.DataFrame
    slopes: dict
    predicted: dict
    flags: dict


def rate_table(u, p, q, eps_list, mollifier='polynomial', n=2):
    eps_list = [float(e) for e in eps_list]
    grid = u.grid
    if len(eps_list) < 3:
        raise InputRejected(f'rate_table needs at least 3 eps values for a slope fit, got {len(eps_list)}.')
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise InputRejected('eps_list must be strictly decreasing.')
    if min(eps_list) < 2 * grid.h:
        raise UnderResolvedKernel(f'Smallest eps {min(eps_list):g} < 2h = {2 * grid.h:g}.')
    if not 1 < p <= q:
        raise InputRejected(f'Need 1 < p <= q, got p={p}, q={q}.')
    core = grid.sdist >= max(eps_list)
    inside = grid.inside_mask
    h = grid.h
    u_lp, u_inf = lp_norm(u.values, h, p, inside), lp_norm(u.values, h, np.inf, inside)
    rows = []
    for eps in eps_list:
        ue = mollify(u, eps, mollifier).values
        diff = ue - u.values
        err_lq = lp_norm(diff, h, q, core)
        rows.append({
            'eps': eps,
            'item_1': lp_norm(ue, h, p, core) / max(u_lp, 1e-300),
            'item_2': lp_norm(ue, h, np.inf, core) / max(u_inf, 1e-300),
            'item_3': lp_norm(ue, h, np.inf, core) * eps ** (n / p) / max(u_lp, 1e-300),
            'item_4': lp_norm(diff, h, p, core),
            'item_5': err_lq,
            'item_6': err_lq,
        })
    table = pd.DataFrame(rows)
    predicted = {'item_1': 0.0, 'item_2': 0.0, 'item_3': 0.0, 'item_4': 1.0,
                 'item_5': 1.0 + n * (1.0 / q - 1.0 / p), 'item_6': p / q}
    scale = max(u_inf, 1.0)
    slopes, flags = {}, {}
    for item, target in predicted.items():
        col = table[item].to_numpy()
        if item in ('item_4', 'item_5', 'item_6') and np.all(col <= 1e-12 * scale):
            slopes[item], flags[item] = float('nan'), 'exact'
            continue
        slopes[item] = fit_slope(table.eps, np.maximum(col, 1e-300))
        flags[item] = 'low_slope' if slopes[item] < target - SLOPE_TOL else 'ok'
    logger.info(f'Mollification rates: slopes={ {k: round(v, 4) for k, v in slopes.items()} }, flags={flags}')
    return RateReport(table, slopes, predicted, flags)


# ! Truncation

def truncate(u, g, k):
    """Radial clamp of u - g at level k."""
    if k <= 0:
        raise InputRejected(f'Truncation level must be positive, got {k}.')
    diff = u.values - g.values
    norm = np.sqrt(np.sum(diff ** 2, axis=0))
    scale = np.where(norm > k, k / np.where(norm > 0, norm, 1.0), 1.0)
    return Field(u.grid, g.values + diff * scale[None])


# ! Star-shaped rescaling

def default_blend(s):
    return float(np.clip(1.0 - np.sqrt(s - 1.0), 0.5, 1.0))


def _validated_pieces(domain):
    if not domain.star_centers:
        raise InputRejected(f'{domain.name} has no star-shaped decomposition.')
    reports = domain.star_reports()
    for k, rep in enumerate(reports):
        if not rep:
            raise InputRejected(f'Piece {k} of {domain.name} is not star-shaped from its center '
                                f'(ray at {rep.worst_ray:.4f} rad crosses {rep.worst_crossings} times).')
    pieces = [Domain(vertices=loop, name=f'{domain.name}_piece{k}') for k, (loop, _) in enumerate(domain.star_centers)]
    return pieces, reports


def star_collar_width(domain, s):
    """Width of the boundary neighborhood where the rescaled field equals the boundary data."""
    _, reports = _validated_pieces(domain)
    return float(min(rep.kernel_margin for rep in reports) * (1.0 - 1.0 / s))


def star_scale(u, g, domain, s, t=None, eps=None, collar=None, mollifier='polynomial'):
    """g + sum_i eta_i t s^-1 (u - g)(c_i + s (x - c_i)) with (u - g) extended by zero outside the domain."""
    if not 1 < s <= 1.2 + 1e-12:
        raise InputRejected(f'Scale s must lie in (1, 1.2], got {s}.')
    t = default_blend(s) if t is None else float(t)
    if not 0 < t <= 1:
        raise InputRejected(f'Blend t must lie in (0, 1], got {t}.')
    pieces, reports = _validated_pieces(domain)
    grid = u.grid
    if eps is not None:
        for k, rep in enumerate(reports):
            if eps > rep.kernel_margin * (s - 1):
                raise InputRejected(f'eps={eps:g} exceeds c_{k}(s-1)={rep.kernel_margin * (s - 1):.4g} for piece {k}.')
    collar = collar or 2 * grid.h
    X, Y = grid.mesh()
    diff = np.where(grid.inside_mask[None], u.values - g.values, 0.0)
    weights = []
    for piece in pieces:
        sd = signed_distance(piece, grid.points)
        weights.append(smoothstep((sd + collar) / (2 * collar)))
    total = np.sum(weights, axis=0)
    out = g.values.copy()
    for (loop, center), wgt in zip(domain.star_centers, weights):
        eta = np.where(total > 0, wgt / np.where(total > 0, total, 1.0), 0.0)
        Ys, Xs = center[1] + s * (Y - center[1]), center[0] + s * (X - center[0])
        pts = np.stack([Ys, Xs], axis=-1)
        scaled = np.stack([RegularGridInterpolator((grid.y, grid.x), dc, bounds_error=False, fill_value=0.0)(pts)
                           for dc in diff]) * (t / s)
        if eps is not None:
            scaled = mollify(Field(grid, scaled), eps, mollifier).values
        out += eta[None] * scaled
    out[:, grid.sdist < 0] = g.values[:, grid.sdist < 0]
    return Field(grid, out)


# ! Jensen check

def jensen_check(F, v, eps, mollifier='polynomial'):
    """max over fully supported nodes of F(Dv * rho) - (F(Dv)) * rho; nonpositive up to quadrature for convex F."""
    grid = v.grid
    if eps < 2 * grid.h:
        raise UnderResolvedKernel(f'Jensen check radius {eps:g} < 2h.')
    kernel = mollifier_kernel(eps, grid.h, mollifier)
    dv = gradient_values(v.values, grid.h)
    X, Y = grid.mesh()
    x = np.stack([X, Y], axis=-1)
    f_dv = density(F, x, np.moveaxis(dv, 0, -1))
    k = kernel.shape[0] // 2
    mean_grad = np.stack([_convolve_valid(c, kernel) for c in dv])
    mean_f = _convolve_valid(f_dv, kernel)
    inner = x[k:grid.ny + 1 - k, k:grid.nx + 1 - k]
    lhs = density(F, inner, np.moveaxis(mean_grad, 0, -1))
    return float(np.max(lhs - mean_f))
