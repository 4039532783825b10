"""Polygonal Lipschitz domains, Cartesian grids and distance queries.

All lengths are dimensionless model units. The grid backend is two dimensional.
"""
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from utils.basics import chunk_ranges, json_load, logger
from .errors import GridTooLarge, InputRejected, InvalidPolygon

MAX_NODES = 20_000_000
STAR_AREA_TOL = 1e-9
_CHUNK = 8192


def polygon_area(loop):
    """Signed shoelace area, positive for counter-clockwise loops."""
    x, y = loop[:, 0], loop[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _cross(u, v):
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def _loop_edges(loop):
    return loop, np.roll(loop, -1, axis=0)


def _pairwise_intersections(a1, b1, a2, b2, tol):
    """Boolean matrix: closed segment i of the first set meets closed segment j of the second."""
    A1, B1 = a1[:, None, :], b1[:, None, :]
    A2, B2 = a2[None, :, :], b2[None, :, :]
    o1 = _cross(B1 - A1, A2 - A1)
    o2 = _cross(B1 - A1, B2 - A1)
    o3 = _cross(B2 - A2, A1 - A2)
    o4 = _cross(B2 - A2, B1 - A2)

    def on_seg(p, a, b):
        return ((np.minimum(a[..., 0], b[..., 0]) - tol <= p[..., 0]) & (p[..., 0] <= np.maximum(a[..., 0], b[..., 0]) + tol) &
                (np.minimum(a[..., 1], b[..., 1]) - tol <= p[..., 1]) & (p[..., 1] <= np.maximum(a[..., 1], b[..., 1]) + tol))

    zero = lambda o: np.abs(o) <= tol * tol
    proper = ((o1 > 0) & (o2 < 0) | (o1 < 0) & (o2 > 0)) & ((o3 > 0) & (o4 < 0) | (o3 < 0) & (o4 > 0))
    touch = (zero(o1) & on_seg(A2, A1, B1)) | (zero(o2) & on_seg(B2, A1, B1)) | \
            (zero(o3) & on_seg(A1, A2, B2)) | (zero(o4) & on_seg(B1, A2, B2))
    return proper | touch


def _check_simple(loop, idx, tol):
    k = len(loop)
    if k < 3:
        raise InvalidPolygon(idx, f'needs at least 3 vertices, got {k}')
    a, b = _loop_edges(loop)
    if np.any(np.linalg.norm(b - a, axis=1) <= tol):
        raise InvalidPolygon(idx, 'repeated consecutive vertex')
    if abs(polygon_area(loop)) <= tol * tol:
        raise InvalidPolygon(idx, 'zero area')
    hits = _pairwise_intersections(a, b, a, b, tol)
    i, j = np.triu_indices(k, 1)
    adjacent = (j == i + 1) | ((i == 0) & (j == k - 1))
    bad = hits[i, j] & ~adjacent
    if np.any(bad):
        e = int(np.flatnonzero(bad)[0])
        raise InvalidPolygon(idx, f'edges {i[e]} and {j[e]} intersect (loop is not simple)')


@dataclass
class StarShapedReport:
    is_star: bool
    worst_ray: float  # angle of the ray with the most boundary crossings
    worst_crossings: int
    crossings: np.ndarray = field(repr=False)
    kernel_margin: float  # min signed distance from the center to the edge lines

    def __bool__(self):
        return bool(self.is_star)


@dataclass(eq=False)
class Domain:
    vertices: np.ndarray
    holes: list = field(default_factory=list)
    star_centers: list = field(default_factory=list)  # [(loop, center)]
    name: str = 'domain'

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 2)
        self.holes = [np.asarray(hl, dtype=np.float64).reshape(-1, 2) for hl in self.holes]
        self.star_centers = [(np.asarray(lp, dtype=np.float64).reshape(-1, 2), np.asarray(c, dtype=np.float64))
                             for lp, c in self.star_centers]
        self._validate()

    # ! Construction
    @classmethod
    def from_dict(cls, d, name=None):
        # A piece given as "outer" is the outer loop itself
        stars = [(d['vertices'] if s['loop'] == 'outer' else s['loop'], s['center'])
                 for s in d.get('star_decomposition', []) or []]
        return cls(vertices=d['vertices'], holes=d.get('holes', []) or [], star_centers=stars,
                   name=name or d.get('name', 'domain'))

    @classmethod
    def from_json(cls, file_name):
        d = json_load(file_name)
        return cls.from_dict(d, name=d.get('name'))

    def to_dict(self):
        d = {'name': self.name, 'vertices': self.vertices.tolist(), 'holes': [hl.tolist() for hl in self.holes]}
        if self.star_centers:
            d['star_decomposition'] = [{'loop': lp.tolist(), 'center': c.tolist()} for lp, c in self.star_centers]
        return d

    def _validate(self):
        tol = 1e-12 * max(1.0, float(np.ptp(self.vertices, axis=0).max()))
        _check_simple(self.vertices, 0, tol)
        if polygon_area(self.vertices) < 0:
            logger.debug(f'{self.name}: outer loop reoriented counter-clockwise.')
            self.vertices = self.vertices[::-1].copy()
        outer = Domain.__new__(Domain)
        outer.vertices, outer.holes = self.vertices, []
        for k, hole in enumerate(self.holes, start=1):
            _check_simple(hole, k, tol)
            if polygon_area(hole) > 0:
                self.holes[k - 1] = hole = hole[::-1].copy()
            if np.any(signed_distance(outer, hole) <= 0):
                raise InvalidPolygon(k, 'hole is not strictly inside the outer loop')
        loops = self.loops
        for k in range(len(loops)):
            for l in range(k + 1, len(loops)):
                if _pairwise_intersections(*_loop_edges(loops[k]), *_loop_edges(loops[l]), tol).any():
                    raise InvalidPolygon(l, f'loop intersects loop {k}')
        if self.star_centers:
            self._validate_star_union(tol)

    def _validate_star_union(self, tol):
        area = self.area
        pieces = 0.0
        for k, (loop, _) in enumerate(self.star_centers):
            _check_simple(loop, k, tol)
            pieces += abs(polygon_area(loop))
            if np.any(signed_distance(self, loop) < -tol):
                raise InputRejected(f'Star-shaped piece {k} leaves the domain.')
        if abs(pieces - area) > STAR_AREA_TOL * area:
            raise InputRejected(f'Star-shaped pieces cover area {pieces:.12g}, domain area is {area:.12g}.')

    # ! Geometry
    @property
    def loops(self):
        return [self.vertices] + self.holes

    @cached_property
    def segments(self):
        a = np.concatenate([lp for lp in self.loops])
        b = np.concatenate([np.roll(lp, -1, axis=0) for lp in self.loops])
        return a, b

    @property
    def area(self):
        return polygon_area(self.vertices) - sum(abs(polygon_area(hl)) for hl in self.holes)

    @property
    def bbox(self):
        lo, hi = self.vertices.min(axis=0), self.vertices.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    @property
    def diameter(self):
        x0, y0, x1, y1 = self.bbox
        return float(np.hypot(x1 - x0, y1 - y0))

    def star_reports(self, n_rays=64):
        return [validate_star_shaped(loop, center, n_rays) for loop, center in self.star_centers]


def signed_distance(domain, points, return_closest=False):
    """Exact distance to the polygon boundary, positive strictly inside.

    Accepts one point of shape (2,) or an array (..., 2); the output keeps the leading shape.
    """
    pts = np.asarray(points, dtype=np.float64)
    lead = pts.shape[:-1]
    pts = pts.reshape(-1, 2)
    a, b = domain.segments if isinstance(domain, Domain) else _loop_edges(domain.vertices)
    ab = b - a
    ab2 = np.einsum('ij,ij->i', ab, ab)
    out = np.empty(len(pts))
    closest = np.empty_like(pts) if return_closest else None
    for i0, i1 in chunk_ranges(len(pts), _CHUNK):
        p = pts[i0:i1, None, :]
        t = np.clip(np.einsum('cej,ej->ce', p - a[None], ab) / ab2, 0.0, 1.0)
        proj = a[None] + t[..., None] * ab[None]
        d2 = np.einsum('cej,cej->ce', p - proj, p - proj)
        k = np.argmin(d2, axis=1)
        rows = np.arange(len(k))
        dist = np.sqrt(d2[rows, k])
        # Even-odd ray casting towards +x
        px, py = p[:, :, 0], p[:, :, 1]
        ay, by = a[None, :, 1], b[None, :, 1]
        straddle = (ay > py) != (by > py)
        denom = np.where(straddle, by - ay, 1.0)
        x_int = a[None, :, 0] + (py - ay) * (b[None, :, 0] - a[None, :, 0]) / denom
        inside = (np.count_nonzero(straddle & (px < x_int), axis=1) % 2) == 1
        sd = np.where(inside, dist, -dist)
        sd[dist == 0.0] = 0.0
        out[i0:i1] = sd
        if return_closest:
            closest[i0:i1] = proj[rows, k]
    out = out.reshape(lead) if lead else float(out[0])
    if return_closest:
        return out, closest.reshape(lead + (2,)) if lead else closest[0]
    return out


@dataclass(eq=False)
class Grid:
    x0: float
    y0: float
    h: float
    nx: int
    ny: int
    sdist: np.ndarray = field(repr=False)
    domain: Domain = field(default=None, repr=False)

    @property
    def shape(self):
        return self.ny + 1, self.nx + 1

    @property
    def n_nodes(self):
        return (self.nx + 1) * (self.ny + 1)

    @property
    def x(self):
        return self.x0 + self.h * np.arange(self.nx + 1)

    @property
    def y(self):
        return self.y0 + self.h * np.arange(self.ny + 1)

    @property
    def bbox(self):
        return self.x0, self.y0, self.x0 + self.nx * self.h, self.y0 + self.ny * self.h

    def mesh(self):
        return np.meshgrid(self.x, self.y)

    @property
    def points(self):
        X, Y = self.mesh()
        return np.stack([X, Y], axis=-1)

    @property
    def inside_mask(self):
        # Nodes on the boundary count as inside
        return self.sdist >= 0

    @property
    def interior_mask(self):
        return self.sdist > 0

    def cell_centers(self):
        xc = self.x0 + self.h * (np.arange(self.nx) + 0.5)
        yc = self.y0 + self.h * (np.arange(self.ny) + 0.5)
        return np.meshgrid(xc, yc)

    @cached_property
    def cell_sdist(self):
        Xc, Yc = self.cell_centers()
        return signed_distance(self.domain, np.stack([Xc, Yc], axis=-1))

    @property
    def active_cells(self):
        return self.cell_sdist > 0

    def window(self, cx, cy, radius):
        """Node index slices (rows, cols) of the square [c - radius, c + radius], clipped to the grid."""
        c0 = max(int(np.floor((cx - radius - self.x0) / self.h)), 0)
        c1 = min(int(np.ceil((cx + radius - self.x0) / self.h)), self.nx)
        r0 = max(int(np.floor((cy - radius - self.y0) / self.h)), 0)
        r1 = min(int(np.ceil((cy + radius - self.y0) / self.h)), self.ny)
        return slice(r0, max(r1 + 1, r0)), slice(c0, max(c1 + 1, c0))

    def snap_to_cell_center(self, point):
        i = np.floor((point[0] - self.x0) / self.h)
        j = np.floor((point[1] - self.y0) / self.h)
        return np.array([self.x0 + (i + 0.5) * self.h, self.y0 + (j + 0.5) * self.h])

    def refined(self, factor=2):
        return make_grid(self.domain, self.x0, self.y0, self.h / factor, self.nx * factor, self.ny * factor)


def make_grid(domain, x0, y0, h, nx, ny, max_nodes=MAX_NODES):
    n_nodes = (nx + 1) * (ny + 1)
    if n_nodes > max_nodes:
        raise GridTooLarge(n_nodes, max_nodes, 8 * n_nodes)
    grid = Grid(x0=float(x0), y0=float(y0), h=float(h), nx=int(nx), ny=int(ny), sdist=None, domain=domain)
    grid.sdist = signed_distance(domain, grid.points)
    return grid


def build_grid(domain, h, margin=0.0, max_nodes=MAX_NODES):
    if h <= 0 or margin < 0:
        raise InputRejected(f'build_grid needs h > 0 and margin >= 0, got h={h}, margin={margin}.')
    xmin, ymin, xmax, ymax = domain.bbox
    x0, y0 = xmin - margin, ymin - margin
    nx = int(np.ceil((xmax + margin - x0) / h - 1e-9))
    ny = int(np.ceil((ymax + margin - y0) / h - 1e-9))
    grid = make_grid(domain, x0, y0, h, nx, ny, max_nodes)
    logger.debug(f'Built {grid.shape} grid on {domain.name}, h={h:g}, {int(grid.inside_mask.sum())} inside nodes.')
    return grid


def boundary_strip_mask(grid, domain, width):
    if width <= 0:
        raise InputRejected(f'Strip width must be positive, got {width}.')
    sd = grid.sdist if domain is grid.domain else signed_distance(domain, grid.points)
    return (sd >= 0) & (sd < width)


def validate_star_shaped(domain_loop, center, n_rays=64):
    if n_rays < 64:
        raise InputRejected(f'validate_star_shaped needs at least 64 rays, got {n_rays}.')
    loop = np.asarray(domain_loop, dtype=np.float64).reshape(-1, 2)
    if polygon_area(loop) < 0:
        loop = loop[::-1]
    c = np.asarray(center, dtype=np.float64)
    piece = Domain.__new__(Domain)
    piece.vertices, piece.holes = loop, []
    if signed_distance(piece, c) <= 0:
        raise InputRejected(f'Star center {c.tolist()} is not inside its loop.')

    a, b = _loop_edges(loop)
    e = b - a
    theta = 2 * np.pi * (np.arange(n_rays) + 0.5) / n_rays
    d = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    w = (a - c)[None]
    denom = _cross(d[:, None, :], e[None])
    safe = np.where(denom == 0, 1.0, denom)
    t = _cross(w, e[None]) / safe
    s = _cross(w, d[:, None, :]) / safe
    # Half-open edge parameter so a ray through a vertex counts once
    hits = (denom != 0) & (t > 0) & (s >= 0) & (s < 1)
    crossings = hits.sum(axis=1)
    worst = int(np.argmax(crossings))
    margin = float(np.min(_cross(e, c[None] - a) / np.linalg.norm(e, axis=1)))
    return StarShapedReport(is_star=bool(np.all(crossings == 1)), worst_ray=float(theta[worst]),
                            worst_crossings=int(crossings[worst]), crossings=crossings, kernel_margin=margin)
