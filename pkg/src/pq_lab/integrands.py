"""Energy densities with (p,q)-growth, quadrature energies, sampled hypothesis
audits and the exponent-range classifier."""
import math
from dataclasses import dataclass, field

import hydra.utils
import numpy as np

from utils.basics import first_index, json_load, logger, pairwise_sum, to_plain
from .errors import InputRejected, NonFiniteField
from .fields import cell_average
from .geometry import signed_distance

KINDS = ('power', 'double_phase', 'pq_blend', 'custom_tabulated')
SLACK = 0.05
_ZERO_GUARD = 1e-14


# ! Coefficients a(x)

class Coefficient:
    exponent = 1.0

    def __call__(self, x):
        raise NotImplementedError


class ConstantCoeff(Coefficient):
    def __init__(self, value=1.0):
        self.value = float(value)

    def __call__(self, x):
        return np.full(np.shape(x)[:-1], self.value)


class X1Power(Coefficient):
    """scale * max(x1, 0)^alpha"""

    def __init__(self, alpha=1.0, scale=1.0):
        self.exponent, self.scale = float(alpha), float(scale)

    def __call__(self, x):
        return self.scale * np.maximum(np.asarray(x)[..., 0], 0.0) ** self.exponent


class DistancePower(Coefficient):
    """scale * dist(x, [a, b])^alpha"""

    def __init__(self, a=(0.0, 0.0), b=(0.0, 1.0), alpha=1.0, scale=1.0):
        self.a, self.b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
        self.exponent, self.scale = float(alpha), float(scale)

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        ab = self.b - self.a
        t = np.clip(((x - self.a) @ ab) / (ab @ ab), 0.0, 1.0)
        d = np.linalg.norm(x - (self.a + t[..., None] * ab), axis=-1)
        return self.scale * d ** self.exponent


class Oscillation(Coefficient):
    """amplitude * sin(2 pi freq x1); changes sign."""

    def __init__(self, freq=2.0, amplitude=1.0):
        self.freq, self.amplitude = float(freq), float(amplitude)

    def __call__(self, x):
        return self.amplitude * np.sin(2 * np.pi * self.freq * np.asarray(x)[..., 0])


COEFFICIENTS = {'constant': ConstantCoeff, 'x1_power': X1Power, 'distance_power': DistancePower,
                'oscillation': Oscillation}


def build_coefficient(node):
    if node is None or isinstance(node, Coefficient):
        return node
    node = to_plain(node)
    if '_target_' in node:
        return hydra.utils.instantiate(node, _convert_='all')
    node = dict(node)
    kind = node.pop('type', None)
    if kind not in COEFFICIENTS:
        raise InputRejected(f'Unknown coefficient type {kind!r}, choose from {sorted(COEFFICIENTS)}.')
    return COEFFICIENTS[kind](**(node.pop('params', None) or node))


# ! Integrand

@dataclass(eq=False)
class Integrand:
    kind: str = 'power'
    p: float = 2.0
    q: float = 2.0
    alpha: float = 1.0
    nu: float = 1.0
    mu: float = 0.0
    Lambda: float = 10.0
    a: object = None
    s0: float = 2.0
    eps0: float = 0.1
    autonomous: bool = None
    table: dict = None  # radial profile {'r': [...], 'f': [...]} for custom_tabulated
    doubling_constant: float = None
    diff_constant: float = None
    name: str = 'integrand'
    a_cfg: dict = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputRejected(f'Unknown integrand kind {self.kind!r}, choose from {KINDS}.')
        if not 1 < self.p <= self.q:
            raise InputRejected(f'Integrand needs 1 < p <= q, got p={self.p}, q={self.q}.')
        if self.nu <= 0 or self.Lambda < self.nu:
            raise InputRejected(f'Integrand needs nu > 0 and Lambda >= nu, got nu={self.nu}, Lambda={self.Lambda}.')
        if not 0 <= self.mu <= 1:
            raise InputRejected(f'mu must lie in [0, 1], got {self.mu}.')
        if not 0 < self.alpha <= 1:
            raise InputRejected(f'alpha must lie in (0, 1], got {self.alpha}.')
        self.a_cfg = None if isinstance(self.a, Coefficient) else to_plain(self.a)
        self.a = build_coefficient(self.a)
        if self.kind == 'double_phase' and self.a is None:
            raise InputRejected('double_phase integrands need a coefficient a(x).')
        if self.autonomous is None:
            self.autonomous = self.kind != 'double_phase'
        if self.kind == 'custom_tabulated':
            self._init_table()
        self.doubling_constant = self.doubling_constant or self.s0 ** self.q
        self.diff_constant = self.diff_constant or 2 * self.q * max(self.Lambda, 1.0)

    def _init_table(self):
        if not self.table or 'r' not in self.table or 'f' not in self.table:
            raise InputRejected('custom_tabulated integrands need a table {r, f}.')
        r = np.asarray(self.table['r'], dtype=np.float64)
        f = np.asarray(self.table['f'], dtype=np.float64)
        if len(r) < 2 or r[0] != 0 or np.any(np.diff(r) <= 0) or len(f) != len(r):
            raise InputRejected('Tabulated profile needs strictly increasing radii starting at 0.')
        self._r, self._f = r, f

    @classmethod
    def from_dict(cls, d):
        d = dict(to_plain(d))
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__ and k != 'a_cfg'})

    @classmethod
    def from_json(cls, file_name):
        return cls.from_dict(json_load(file_name))

    def to_dict(self):
        keys = ['kind', 'p', 'q', 'alpha', 'nu', 'mu', 'Lambda', 's0', 'eps0', 'autonomous', 'name']
        d = {k: getattr(self, k) for k in keys}
        d['a'] = self.a_cfg
        if self.table:
            d['table'] = self.table
        return d

    def coefficient(self, x):
        return self.a(x) if self.a is not None else np.zeros(np.shape(x)[:-1])

    def tabulated(self, r):
        r_max, f_max = self._r[-1], self._f[-1]
        return np.where(r <= r_max, np.interp(r, self._r, self._f), f_max * (np.maximum(r, r_max) / r_max) ** self.q)


# ! Density and derivative

def _norm2(z):
    return np.sum(np.asarray(z, dtype=np.float64) ** 2, axis=-1)


def density(F, x, z):
    """F(x, z) for z of shape (..., 2m); x of shape (..., 2) or None for autonomous kinds."""
    n2 = _norm2(z)
    if F.kind == 'power':
        return (F.mu ** 2 + n2) ** (F.p / 2)
    if F.kind == 'pq_blend':
        s = F.mu ** 2 + n2
        return s ** (F.p / 2) + s ** (F.q / 2)
    if F.kind == 'custom_tabulated':
        return F.tabulated(np.sqrt(n2))
    if x is None:
        raise InputRejected('double_phase density needs the point x.')
    r = np.sqrt(n2)
    return r ** F.p + F.coefficient(x) * r ** F.q


def d_density(F, x, z):
    """Derivative of F(x, .) at z, same shape as z."""
    z = np.asarray(z, dtype=np.float64)
    n2 = _norm2(z)
    if F.kind == 'custom_tabulated':
        return _fd_derivative(F, x, z)
    if F.kind == 'double_phase':
        if x is None:
            raise InputRejected('double_phase derivative needs the point x.')
        r = np.sqrt(n2)
        safe = np.where(r > _ZERO_GUARD, r, 1.0)
        coef = F.p * safe ** (F.p - 2) + F.q * F.coefficient(x) * safe ** (F.q - 2)
        return np.where((r > _ZERO_GUARD)[..., None], coef[..., None] * z, 0.0)
    s = F.mu ** 2 + n2
    safe = np.where(s > _ZERO_GUARD ** 2, s, 1.0)
    coef = F.p * safe ** ((F.p - 2) / 2)
    if F.kind == 'pq_blend':
        coef = coef + F.q * safe ** ((F.q - 2) / 2)
    return np.where((s > _ZERO_GUARD ** 2)[..., None], coef[..., None] * z, 0.0)


def _fd_derivative(F, x, z):
    step = np.asarray(1e-6 * (1 + np.sqrt(_norm2(z))))
    out = np.empty_like(z)
    for k in range(z.shape[-1]):
        e = np.zeros(z.shape[-1])
        e[k] = 1.0
        dz = step[..., None] * e
        out[..., k] = (density(F, x, z + dz) - density(F, x, z - dz)) / (2 * step)
    return out


# ! Quadrature energies

def energy(F, Du, grid=None, cells=None):
    """Midpoint rule over cells: h^2 * sum F(x_c, cell-averaged Du)."""
    grid = grid or Du.grid
    cells = grid.active_cells if cells is None else cells
    avg = cell_average(Du.values)
    bad = cells & ~np.all(np.isfinite(avg), axis=0)
    if np.any(bad):
        raise NonFiniteField(first_index(bad), 'gradient (cell row, col)')
    Xc, Yc = grid.cell_centers()
    x = np.stack([Xc[cells], Yc[cells]], axis=-1)
    dens = density(F, x, avg[:, cells].T)
    return grid.h ** 2 * pairwise_sum(dens)


_GAUSS = 0.5 / np.sqrt(3.0)


def energy_analytic(F, descriptor, grid, cells=None):
    """2x2 Gauss rule over cells with the descriptor's exact gradient."""
    cells = grid.active_cells if cells is None else cells
    Xc, Yc = grid.cell_centers()
    xc, yc = Xc[cells], Yc[cells]
    total = []
    for sx in (-1, 1):
        for sy in (-1, 1):
            X, Y = xc + sx * _GAUSS * grid.h, yc + sy * _GAUSS * grid.h
            dz = descriptor.gradient(X, Y)
            total.append(density(F, np.stack([X, Y], axis=-1), np.moveaxis(dz, 0, -1)))
    return grid.h ** 2 / 4 * pairwise_sum(np.stack(total))


def richardson(e_h, e_h2, order=2):
    return e_h2 + (e_h2 - e_h) / (2 ** order - 1)


# ! Hypothesis audits

@dataclass
class HypothesisResult:
    measured_constant: float
    declared: float
    passed: bool
    note: str = ''


def _plan_value(plan, key, default):
    return plan.get(key, default) if plan.get(key) is not None else default


def _sample_points(rng, plan, n, domain=None):
    box = plan.get('box') or (domain.bbox if domain is not None else (0.0, 0.0, 1.0, 1.0))
    x0, y0, x1, y1 = box
    pts = np.empty((0, 2))
    while len(pts) < n:
        cand = rng.uniform([x0, y0], [x1, y1], size=(2 * n, 2))
        if domain is not None:
            cand = cand[signed_distance(domain, cand) > 0]
        pts = np.concatenate([pts, cand])
    return pts[:n]


def _sample_gradients(rng, n, dim, z_scale):
    direction = rng.normal(size=(n, dim))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    mag = np.exp(rng.uniform(np.log(1e-3), np.log(z_scale), size=n))
    return direction * mag[:, None]


def _quotient(F, x, z, w):
    diff = z - w
    num = density(F, x, z) - density(F, x, w) - np.sum(d_density(F, x, w) * diff, axis=-1)
    return num / np.sum(diff ** 2, axis=-1)


def hypothesis_audit(F, plan, domain=None):
    plan = dict(to_plain(plan) or {})
    n = int(_plan_value(plan, 'n_samples', 0))
    if n <= 0:
        raise InputRejected('Hypothesis audit plan is empty: set n_samples > 0.')
    seed = int(_plan_value(plan, 'seed', 0))
    z_scale = float(_plan_value(plan, 'z_scale', 10.0))
    dim = 2 * int(_plan_value(plan, 'm', 1))
    n_balls = int(_plan_value(plan, 'n_balls', 8))
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(6)]
    logger.info(f'Auditing {F.name} ({F.kind}) with {n} samples, seed={seed}.')

    x = _sample_points(streams[0], plan, n, domain)
    y = _sample_points(streams[0], plan, n, domain)
    z = _sample_gradients(streams[1], n, dim, z_scale)
    w = _sample_gradients(streams[1], n, dim, z_scale)
    Q = _quotient(F, x, z, w)
    nz2, nw2 = np.sum(z ** 2, axis=1), np.sum(w ** 2, axis=1)
    lo, hi = 1 - SLACK, 1 + SLACK
    report = {}

    ell = Q / (F.mu ** 2 + nz2 + nw2) ** ((F.p - 2) / 2)
    report['ellipticity'] = HypothesisResult(float(ell.min()), F.nu, bool(ell.min() >= lo * F.nu))
    nat = np.abs(density(F, x, z)) / (1 + nz2) ** (F.q / 2)
    report['natural'] = HypothesisResult(float(nat.max()), F.Lambda, bool(nat.max() <= hi * F.Lambda))
    ctr = Q / (1 + nz2 + nw2) ** ((F.q - 2) / 2)
    report['controlled'] = HypothesisResult(float(ctr.max()), F.Lambda, bool(ctr.max() <= hi * F.Lambda))
    dz, dw = d_density(F, x, z), d_density(F, x, w)
    dual = Q / (1 + np.sum(dz ** 2, axis=1) + np.sum(dw ** 2, axis=1)) ** ((F.q - 2) / (2 * (F.q - 1)))
    report['controlled_duality'] = HypothesisResult(float(dual.max()), F.Lambda, bool(dual.max() <= hi * F.Lambda),
                                                    'derivative evaluated at the quotient point x')

    if F.autonomous:
        report['holder_x'] = HypothesisResult(0.0, F.Lambda, True, 'autonomous')
    else:
        dist = np.linalg.norm(x - y, axis=1)
        hol = np.abs(density(F, x, z) - density(F, y, z)) / (dist ** F.alpha * (1 + nz2) ** (F.q / 2))
        report['holder_x'] = HypothesisResult(float(hol.max()), F.Lambda, bool(hol.max() <= hi * F.Lambda))

    s = streams[2].uniform(1.0, F.s0, size=n)
    dbl = density(F, x, s[:, None] * z) / (1 + density(F, x, z))
    report['doubling'] = HypothesisResult(float(dbl.max()), F.doubling_constant,
                                          bool(dbl.max() <= hi * F.doubling_constant))

    diff = np.abs(density(F, x, z) - density(F, x, w)) / (
        np.linalg.norm(z - w, axis=1) * (1 + np.sqrt(nz2) + np.sqrt(nw2)) ** (F.q - 1))
    report['diff_bound'] = HypothesisResult(float(diff.max()), F.diff_constant, bool(diff.max() <= hi * F.diff_constant))

    if F.kind == 'double_phase':
        a_min = float(np.min(F.coefficient(x)))
        report['nonneg_a'] = HypothesisResult(a_min, 0.0, bool(a_min >= -1e-12))
    report['x_condition'] = _x_condition(F, streams[3], plan, n_balls, dim, z_scale, domain)
    return report


def _x_condition(F, rng, plan, n_balls, dim, z_scale, domain):
    if F.autonomous:
        return HypothesisResult(0.0, 0.0, True, 'autonomous')
    n_r, n_t = 8, 32
    centers = _sample_points(rng, plan, n_balls, domain)
    zs = _sample_gradients(rng, 64, dim, z_scale)
    worst = 0.0
    for c in centers:
        rad = F.eps0 * np.sqrt(np.arange(n_r + 1) / n_r)
        ang = 2 * np.pi * np.arange(n_t) / n_t
        pts = c + np.stack([np.outer(rad, np.cos(ang)).ravel(), np.outer(rad, np.sin(ang)).ravel()], axis=-1)
        if domain is not None:
            pts = pts[signed_distance(domain, pts) >= 0]
        vals = density(F, pts[:, None, :], zs[None, :, :])  # (points, z)
        col_min = vals.min(axis=0)
        excess = np.max((vals - col_min[None]) / (1 + col_min[None]), axis=1)
        worst = max(worst, float(excess.min()))
    return HypothesisResult(worst, 0.0, bool(worst <= SLACK), 'relative excess of the best sampled point')


def convexity_audit(F, plan, domain=None):
    """Largest sampled midpoint-convexity violation, relative to 1 + F."""
    plan = dict(to_plain(plan) or {})
    n = int(_plan_value(plan, 'n_samples', 0))
    if n <= 0:
        raise InputRejected('Convexity audit plan is empty: set n_samples > 0.')
    rng = np.random.default_rng(np.random.SeedSequence(int(_plan_value(plan, 'seed', 0))).spawn(1)[0])
    dim = 2 * int(_plan_value(plan, 'm', 1))
    z_scale = float(_plan_value(plan, 'z_scale', 10.0))
    x = _sample_points(rng, plan, n, domain)
    z, w = _sample_gradients(rng, n, dim, z_scale), _sample_gradients(rng, n, dim, z_scale)
    mid = density(F, x, (z + w) / 2)
    avg = (density(F, x, z) + density(F, x, w)) / 2
    violation = float(np.max((mid - avg) / (1 + avg)))
    return HypothesisResult(violation, 0.0, bool(violation <= 1e-9))


def change_of_x_check(F, x, eps, n=2, C=1.0, n_z=64, seed=0):
    """Oscillation sup - inf of F(., z) over B_eps(x) for |z| <= C eps^(-n/p)."""
    rng = np.random.default_rng(seed)
    z_max = C * eps ** (-n / F.p)
    zs = _sample_gradients(rng, n_z, 2, z_max)
    ang = 2 * np.pi * np.arange(32) / 32
    rad = eps * np.sqrt(np.arange(9) / 8)
    pts = np.asarray(x) + np.stack([np.outer(rad, np.cos(ang)).ravel(), np.outer(rad, np.sin(ang)).ravel()], axis=-1)
    vals = density(F, pts[:, None, :], zs[None, :, :])
    osc = float(np.max(vals.max(axis=0) - vals.min(axis=0)))
    return {'max_oscillation': osc, 'z_max': z_max, 'passed': osc <= 1.0}


# ! Exponent-range classifier

RELAXATION_CASES, MINIMIZER_CASES = {1, 2, 3, 4}, {5, 6, 7, 8}
GROWTH_LEVELS = {None: 0, 'none': 0, 'natural': 1, 'controlled': 2, 'controlled_duality': 3}


@dataclass
class TheoremCase:
    applicable_cases: list
    conclusion: str
    active_constraints: list
    required_N: int
    thresholds: dict = field(default_factory=dict)


def thresholds(p, q, n, alpha=1.0):
    return {
        'nonautonomous': (n + alpha) * p / n,
        'p_plus_1': p + 1.0,
        'np_over_n_minus_1': n * p / (n - 1),
        'p_plus_max_1_p_over_n': p + max(1.0, p / n),
        'p_plus_2': p + 2.0,
        'p_times_1_plus_2_over_n_minus_1': p * (1 + 2.0 / (n - 1)),
        'np_over_n_minus_p': n * p / (n - p) if p < n else math.inf,
        'p_plus_max_2_2p_over_n': p + max(2.0, 2 * p / n),
    }


def _normalize_flags(flags, m):
    f = dict(to_plain(flags) or {})
    level = GROWTH_LEVELS.get(f.get('growth'), 0)
    for name in ('natural', 'controlled', 'controlled_duality'):
        if f.get(name):
            level = max(level, GROWTH_LEVELS[name])
    out = {k: bool(f.get(k, False)) for k in ('autonomous', 'bounded_u', 'scalar', 'doubling', 'holder_x',
                                              'x_condition', 'is_minimizer')}
    out['scalar'] = out['scalar'] or m == 1
    if out['autonomous']:
        out['holder_x'] = out['x_condition'] = True
    out['natural'], out['controlled'], out['controlled_duality'] = level >= 1, level >= 2, level >= 3
    return out


def _smallest_int_at_least(x):
    return int(math.ceil(x - 1e-9))


def _smallest_int_above(x):
    # Ties within rounding count as equality, so the strict bound moves up
    return int(math.floor(x + 1e-9)) + 1


def required_N(p, q, n, cases):
    """Smallest integer radius exponent meeting the decay constraints of the applicable cases."""
    N = 1
    if 1 in cases:
        decay = 1 - n * (1 / p - 1 / q)
        if decay > 0:
            N = max(N, _smallest_int_at_least(1 / decay))
        cross = n + 1 - n * q / p
        if cross > 0:
            N = max(N, _smallest_int_above(1 / cross))
    if 2 in cases:
        theta = 1 + (n - 1) * (p - q) / p
        N = max(N, _smallest_int_above((p + 1) / ((p + 1 - q) * theta)))
    if 5 in cases:
        theta = 1 + (n - 1) * (p - q) / (2 * p)
        N = max(N, _smallest_int_above((p + 2) / ((p + 2 - q) * theta)))
    return N


def classify_case(p, q, n=2, m=1, alpha=1.0, flags=None):
    if not 1 < p <= q or n < 2 or m < 1:
        raise InputRejected(f'classify_case needs 1 < p <= q, n >= 2, m >= 1; got p={p}, q={q}, n={n}, m={m}.')
    f = _normalize_flags(flags, m)
    t = thresholds(p, q, n, alpha)
    auto, nat, ctr, dual = f['autonomous'], f['natural'], f['controlled'], f['controlled_duality']
    mini = f['is_minimizer']
    conditions = {
        1: (q < t['nonautonomous'] and nat and f['holder_x'] and f['x_condition'], 'nonautonomous'),
        2: (q < min(t['p_plus_1'], t['np_over_n_minus_1']) and auto and nat,
            'p_plus_1' if t['p_plus_1'] <= t['np_over_n_minus_1'] else 'np_over_n_minus_1'),
        3: (q < t['p_plus_max_1_p_over_n'] and f['bounded_u'] and auto and nat, 'p_plus_max_1_p_over_n'),
        4: (q < t['p_plus_max_1_p_over_n'] and f['scalar'] and auto and nat, 'p_plus_max_1_p_over_n'),
        5: (mini and p >= 2 and q < min(t['p_plus_2'], t['p_times_1_plus_2_over_n_minus_1']) and auto and ctr
            and f['doubling'], 'p_plus_2' if t['p_plus_2'] <= t['p_times_1_plus_2_over_n_minus_1']
            else 'p_times_1_plus_2_over_n_minus_1'),
        6: (mini and p >= 2 and q < t['np_over_n_minus_p'] and auto and dual, 'np_over_n_minus_p'),
        7: (mini and p > 2 and q < t['p_plus_max_2_2p_over_n'] and f['bounded_u'] and auto and ctr,
            'p_plus_max_2_2p_over_n'),
        8: (mini and p >= 2 and q < t['p_plus_max_2_2p_over_n'] and f['scalar'] and auto and ctr and f['doubling'],
            'p_plus_max_2_2p_over_n'),
    }
    cases = sorted(k for k, (ok, _) in conditions.items() if ok)
    relax, mins = bool(RELAXATION_CASES & set(cases)), bool(MINIMIZER_CASES & set(cases))
    conclusion = ('relaxation_and_min_equality' if relax and mins else 'relaxation_equality' if relax
                  else 'min_equality' if mins else 'none')
    active = [(f'case_{k}:{conditions[k][1]}', t[conditions[k][1]]) for k in cases]
    return TheoremCase(cases, conclusion, active, required_N(p, q, n, cases), t)
