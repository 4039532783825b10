"""Whitney-Besicovitch coverings of polygonal domains by balls.

Balls come from a dyadic Whitney decomposition, the triple (delta, M, eps_ov) is
measured a posteriori and stored with the covering.
"""
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from utils.basics import json_load, json_save, lambda_cut, logger, time_logger
from .errors import InputRejected
from .geometry import build_grid, signed_distance

DELTA_CAP = 0.25
COVERAGE_TOL = 1e-3
_DEPTH_RTOL = 1e-9


@dataclass(frozen=True)
class Ball:
    cx: float
    cy: float
    r: float

    @property
    def center(self):
        return np.array([self.cx, self.cy])


@dataclass(eq=False)
class Covering:
    centers: np.ndarray  # (k, 2)
    radii: np.ndarray  # (k,)
    delta: float
    M: int
    eps_ov: float
    r_min: float
    lam: float
    neighbor_index: list = field(default=None, repr=False)

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=np.float64).reshape(-1, 2)
        self.radii = np.asarray(self.radii, dtype=np.float64).ravel()
        if self.neighbor_index is None:
            self.neighbor_index = [neighbors(self, i, 1 + self.delta / 2) for i in range(len(self))]

    def __len__(self):
        return len(self.radii)

    @property
    def balls(self):
        return [Ball(float(c[0]), float(c[1]), float(r)) for c, r in zip(self.centers, self.radii)]

    @cached_property
    def tree(self):
        return cKDTree(self.centers)

    @property
    def covered_width(self):
        # Width of the boundary strip left uncovered
        return lambda_cut(self.lam) * self.r_min

    # ! Construction
    @classmethod
    def from_balls(cls, domain, centers, radii, r_min=None, lam=None, delta_cap=DELTA_CAP):
        """Certify (delta, M, eps_ov) for an arbitrary family of balls inside the domain."""
        centers = np.asarray(centers, dtype=np.float64).reshape(-1, 2)
        radii = np.asarray(radii, dtype=np.float64).ravel()
        if len(radii) == 0:
            raise InputRejected('A covering needs at least one ball.')
        sd = signed_distance(domain, centers).reshape(-1)
        delta, M, eps_ov = certify_constants(sd, centers, radii, delta_cap)
        lam = float(np.max(radii / sd)) if lam is None else float(lam)
        r_min = float(radii.min()) if r_min is None else float(r_min)
        return cls(centers, radii, delta, M, eps_ov, r_min, lam)

    # ! IO
    def to_dict(self):
        return {'delta': self.delta, 'M': int(self.M), 'eps_ov': self.eps_ov, 'r_min': self.r_min, 'lam': self.lam,
                'balls': [{'cx': c[0], 'cy': c[1], 'r': r} for c, r in zip(self.centers.tolist(), self.radii.tolist())]}

    @classmethod
    def from_dict(cls, d):
        balls = d['balls']
        centers = [[b['cx'], b['cy']] for b in balls]
        radii = [b['r'] for b in balls]
        return cls(centers, radii, float(d['delta']), int(d['M']), float(d['eps_ov']), float(d['r_min']),
                   float(d.get('lam', 0.25)))

    def save(self, file_name):
        json_save(self.to_dict(), file_name, log_func=logger.info)
        return file_name

    @classmethod
    def load(cls, file_name):
        return cls.from_dict(json_load(file_name))


# ! Exact circle geometry

def lens_area(d, r1, r2):
    """Area of the intersection of two discs with center distance d."""
    d, r1, r2 = np.broadcast_arrays(*(np.asarray(_, dtype=np.float64) for _ in (d, r1, r2)))
    out = np.zeros(d.shape)
    small = np.minimum(r1, r2)
    nested = d <= np.abs(r1 - r2)
    out[nested] = np.pi * small[nested] ** 2
    part = (~nested) & (d < r1 + r2)
    if np.any(part):
        dd, a, b = d[part], r1[part], r2[part]
        c1 = np.clip((dd ** 2 + a ** 2 - b ** 2) / (2 * dd * a), -1.0, 1.0)
        c2 = np.clip((dd ** 2 + b ** 2 - a ** 2) / (2 * dd * b), -1.0, 1.0)
        k = (-dd + a + b) * (dd + a - b) * (dd - a + b) * (dd + a + b)
        out[part] = np.clip(a ** 2 * np.arccos(c1) + b ** 2 * np.arccos(c2) - 0.5 * np.sqrt(np.clip(k, 0.0, None)),
                            0.0, None)
    return out if out.ndim else float(out)


def circle_intersections(c1, r1, c2, r2):
    """Intersection points of the circles of the pairs that cross, shape (2k, 2)."""
    diff = c2 - c1
    d = np.linalg.norm(diff, axis=1)
    cross = (d > np.abs(r1 - r2)) & (d < r1 + r2) & (d > 0)
    if not np.any(cross):
        return np.empty((0, 2))
    c1, diff, d, r1, r2 = c1[cross], diff[cross], d[cross], r1[cross], r2[cross]
    a = (d ** 2 + r1 ** 2 - r2 ** 2) / (2 * d)
    hh = np.sqrt(np.clip(r1 ** 2 - a ** 2, 0.0, None))
    unit = diff / d[:, None]
    perp = np.stack([-unit[:, 1], unit[:, 0]], axis=1)
    base = c1 + a[:, None] * unit
    return np.concatenate([base + hh[:, None] * perp, base - hh[:, None] * perp])


def _intersecting_pairs(centers, radii, factor=1.0, closed=False):
    if len(radii) < 2:
        return np.empty((0, 2), dtype=int)
    tree = cKDTree(centers)
    pairs = tree.query_pairs(2 * factor * radii.max() * (1 + _DEPTH_RTOL), output_type='ndarray')
    if len(pairs) == 0:
        return pairs.reshape(0, 2)
    d = np.linalg.norm(centers[pairs[:, 0]] - centers[pairs[:, 1]], axis=1)
    reach = factor * (radii[pairs[:, 0]] + radii[pairs[:, 1]])
    keep = d <= reach if closed else d < reach
    return pairs[keep]


def max_depth(centers, radii):
    """Exact maximum number of closed discs covering a point.

    The maximum is attained at a center or at a crossing point of two circles.
    """
    pairs = _intersecting_pairs(centers, radii, closed=True)
    cand = [centers]
    if len(pairs):
        cand.append(circle_intersections(centers[pairs[:, 0]], radii[pairs[:, 0]],
                                         centers[pairs[:, 1]], radii[pairs[:, 1]]))
    cand = np.concatenate(cand)
    tree = cKDTree(centers)
    hits = tree.query_ball_point(cand, radii.max() * (1 + _DEPTH_RTOL))
    best = 0
    for y, idx in zip(cand, hits):
        idx = np.asarray(idx, dtype=int)
        d = np.linalg.norm(centers[idx] - y, axis=1)
        best = max(best, int(np.count_nonzero(d <= radii[idx] * (1 + _DEPTH_RTOL))))
    return best


def min_overlap_ratio(centers, radii):
    pairs = _intersecting_pairs(centers, radii)
    if len(pairs) == 0:
        return 1.0
    i, j = pairs[:, 0], pairs[:, 1]
    d = np.linalg.norm(centers[i] - centers[j], axis=1)
    area = lens_area(d, radii[i], radii[j])
    return float(np.min(area / (np.pi * np.maximum(radii[i], radii[j]) ** 2)))


def certify_constants(sd, centers, radii, delta_cap=DELTA_CAP):
    if np.any(sd <= radii):
        bad = int(np.flatnonzero(sd <= radii)[0])
        raise InputRejected(f'Ball {bad} (r={radii[bad]:.4g}) is not strictly inside the domain.')
    delta = float(min(delta_cap, np.min(sd / radii) - 1.0))
    M = max_depth(centers, (1 + delta) * radii)
    eps_ov = min_overlap_ratio(centers, radii)
    return delta, M, eps_ov


# ! Whitney construction

@time_logger('Whitney-Besicovitch covering', log_func=logger.debug)
def build_wb_covering(domain, r_min, lam=0.25, delta_cap=DELTA_CAP):
    if not 0 < r_min <= 1:
        raise InputRejected(f'r_min must lie in (0, 1], got {r_min}.')
    if not 0 < lam < 1:
        raise InputRejected(f'lambda must lie in (0, 1), got {lam}.')
    if (1 + delta_cap) * lam >= 1:
        raise InputRejected(f'(1+delta)*lambda = {(1 + delta_cap) * lam:.4g} >= 1: dilated balls would reach the boundary.')
    xmin, ymin, xmax, ymax = domain.bbox
    side = max(xmax - xmin, ymax - ymin)
    corners = np.array([[xmin, ymin]])
    kept_c, kept_r = [], []
    level = 0
    while len(corners):
        s = side / 2 ** level
        diam = np.sqrt(2.0) * s
        centers = corners + s / 2
        sd = signed_distance(domain, centers).reshape(-1)
        # A ball of radius lam*d(center) contains the square once d >= diam/(2 lam)
        accept = (sd >= diam / (2 * lam)) & (diam <= 2.0)
        radius = np.minimum(lam * sd, 1.0)
        take = accept & (radius >= r_min)
        kept_c.append(centers[take])
        kept_r.append(radius[take])
        # Descendants would only produce radii below r_min, or lie outside
        refine = ~accept & (sd >= -diam / 2) & (sd + diam / 2 >= r_min / lam)
        parents = corners[refine]
        offsets = np.array([[0, 0], [s / 2, 0], [0, s / 2], [s / 2, s / 2]])
        corners = (parents[:, None, :] + offsets[None]).reshape(-1, 2)
        logger.debug(f'Level {level}: kept {int(take.sum())} squares, refining {len(parents)}.')
        level += 1
    centers, radii = np.concatenate(kept_c), np.concatenate(kept_r)
    if len(radii) == 0:
        raise InputRejected(f'No Whitney square of {domain.name} admits a ball of radius >= r_min={r_min}.')
    order = np.lexsort((centers[:, 1], centers[:, 0], -radii))
    centers, radii = centers[order], radii[order]
    cov = Covering.from_balls(domain, centers, radii, r_min=r_min, lam=lam, delta_cap=delta_cap)
    logger.info(f'Covering of {domain.name}: {len(cov)} balls, delta={cov.delta:.4g}, M={cov.M}, '
                f'eps_ov={cov.eps_ov:.4g}, levels={level}.')
    return cov


# ! Queries

def neighbors(covering, i, factor):
    if not 0 <= i < len(covering):
        raise InputRejected(f'Ball index {i} out of range [0, {len(covering)}).')
    allowed = (1.0, 1.0 + covering.delta / 2, 1.0 + covering.delta)
    if not any(np.isclose(factor, a) for a in allowed):
        raise InputRejected(f'Neighbor factor must be one of {allowed}, got {factor}.')
    c, r = covering.centers, covering.radii
    cand = np.asarray(covering.tree.query_ball_point(c[i], factor * (r[i] + r.max()) * (1 + _DEPTH_RTOL)), dtype=int)
    d = np.linalg.norm(c[cand] - c[i], axis=1)
    hit = (d <= factor * (r[i] + r[cand])) & (cand != i)
    return np.sort(cand[hit])


# ! Audit

@dataclass
class CoveringAudit:
    coverage_defect: float
    max_multiplicity: int
    min_overlap_ratio: float
    c_boundary: float
    radius_ratio_bound: float
    passed: bool = True
    violations: list = field(default_factory=list)

    def to_dict(self):
        return dict(self.__dict__)


def multiplicity_counts(covering, grid, factor):
    counts = np.zeros(grid.shape, dtype=np.int64)
    x, y = grid.x, grid.y
    for c, r in zip(covering.centers, covering.radii):
        R = factor * r
        rows, cols = grid.window(c[0], c[1], R)
        d2 = (x[cols][None, :] - c[0]) ** 2 + (y[rows][:, None] - c[1]) ** 2
        counts[rows, cols] += d2 <= R * R
    return counts


@time_logger('covering audit', log_func=logger.debug)
def audit_covering(covering, domain, probe_h):
    if probe_h > covering.r_min / 4:
        raise InputRejected(f'Probe grid h={probe_h} must be finer than r_min/4={covering.r_min / 4}.')
    grid = build_grid(domain, probe_h)
    inside = grid.inside_mask
    core = grid.sdist >= covering.covered_width
    covered = multiplicity_counts(covering, grid, 1.0) > 0
    coverage_defect = float(np.count_nonzero(core & ~covered)) / max(int(np.count_nonzero(inside)), 1)
    max_mult = int(multiplicity_counts(covering, grid, 1 + covering.delta).max())
    overlap = min_overlap_ratio(covering.centers, covering.radii)

    sd = signed_distance(domain, covering.centers).reshape(-1)
    gap = sd - covering.radii
    diam = 2 * covering.radii
    c_boundary = float(np.max(np.maximum(diam / gap, gap / diam))) if np.all(gap > 0) else float('inf')
    ratios = [covering.radii[j] / covering.radii[i] for i, nb in enumerate(covering.neighbor_index) for j in nb]
    radius_ratio = float(max(ratios)) if ratios else 1.0

    violations = []
    if coverage_defect > COVERAGE_TOL:
        violations.append(f'coverage_defect {coverage_defect:.3e} > {COVERAGE_TOL:g}')
    if max_mult > covering.M:
        violations.append(f'multiplicity {max_mult} > M={covering.M}')
    if overlap < covering.eps_ov * (1 - 1e-9):
        violations.append(f'overlap ratio {overlap:.4g} < eps_ov={covering.eps_ov:.4g}')
    if np.any(sd < (1 + covering.delta) * covering.radii * (1 - 1e-12)):
        violations.append('a (1+delta)-dilated ball leaves the domain')
    if np.any(covering.radii > 1) or np.any(covering.radii < covering.r_min):
        violations.append('radius outside [r_min, 1]')
    if not np.isfinite(c_boundary):
        violations.append('a ball touches the boundary')
    audit = CoveringAudit(coverage_defect, max_mult, overlap, c_boundary, radius_ratio,
                          passed=not violations, violations=violations)
    (logger.info if audit.passed else logger.warning)(f'Covering audit: {audit}')
    return audit
