"""Analytic test functions and boundary data.

Every descriptor maps node coordinates (X, Y) to values of shape (m, *X.shape) and
gradients of shape (2m, *X.shape) ordered [du0/dx, du0/dy, du1/dx, ...].
"""
import copy

import hydra.utils
import numpy as np
from omegaconf import DictConfig
from scipy.interpolate import RegularGridInterpolator

from utils.basics import get_abs_path, to_plain
from .errors import InputRejected
from .fields import Field, gradient_values, load_pqf1


class Descriptor:
    m = 1
    singular = False  # Radial singularity at self.center

    def value(self, X, Y):
        raise NotImplementedError

    def gradient(self, X, Y):
        raise NotImplementedError

    def __call__(self, X, Y):
        return self.value(X, Y)

    def field(self, grid):
        return Field(grid, self.value(*grid.mesh()))

    def gradient_field(self, grid):
        return Field(grid, self.gradient(*grid.mesh()), check=False)

    def at_points(self, points):
        pts = np.asarray(points, dtype=np.float64)
        return self.value(pts[..., 0], pts[..., 1])

    def __add__(self, other):
        return Sum([self, other])


def _radius(X, Y, center):
    dx, dy = X - center[0], Y - center[1]
    return dx, dy, np.hypot(dx, dy)


class Constant(Descriptor):
    def __init__(self, value=0.0):
        self.c = np.atleast_1d(np.asarray(value, dtype=np.float64))
        self.m = len(self.c)

    def value(self, X, Y):
        return np.multiply.outer(self.c, np.ones(np.shape(X)))

    def gradient(self, X, Y):
        return np.zeros((2 * self.m,) + np.shape(X))


class Zero(Constant):
    def __init__(self, m=1):
        super().__init__([0.0] * int(m))


class Affine(Descriptor):
    """u(x) = A x + b; A has shape (m, 2)."""

    def __init__(self, slope=(1.0, 0.0), offset=0.0):
        self.A = np.atleast_2d(np.asarray(slope, dtype=np.float64))
        self.m = self.A.shape[0]
        self.b = np.broadcast_to(np.asarray(offset, dtype=np.float64), (self.m,)).copy()

    def value(self, X, Y):
        return np.stack([a[0] * X + a[1] * Y + b for a, b in zip(self.A, self.b)])

    def gradient(self, X, Y):
        one = np.ones(np.shape(X))
        return np.stack([c * one for c in self.A.ravel()])


class Bilinear(Descriptor):
    def __init__(self, coeff=1.0):
        self.coeff = float(coeff)

    def value(self, X, Y):
        return (self.coeff * X * Y)[None]

    def gradient(self, X, Y):
        return np.stack([self.coeff * Y, self.coeff * X])


class Bump(Descriptor):
    """amplitude * (1 - |x-c|^2/R^2)^power inside B_R(c), zero outside."""

    def __init__(self, center=(0.5, 0.5), radius=0.5, amplitude=1.0, power=2):
        self.center, self.R = np.asarray(center, dtype=np.float64), float(radius)
        self.amplitude, self.power = float(amplitude), float(power)

    def value(self, X, Y):
        _, _, rho = _radius(X, Y, self.center)
        base = np.clip(1.0 - (rho / self.R) ** 2, 0.0, None)
        return (self.amplitude * base ** self.power)[None]

    def gradient(self, X, Y):
        dx, dy, rho = _radius(X, Y, self.center)
        base = np.clip(1.0 - (rho / self.R) ** 2, 0.0, None)
        coef = -2.0 * self.power * self.amplitude * base ** (self.power - 1.0) / self.R ** 2
        coef = np.where(base > 0, coef, 0.0)
        return np.stack([coef * dx, coef * dy])


class RadialPower(Descriptor):
    """amplitude * (|x-c|^beta - radius^beta) inside B_radius(c), zero outside.

    With beta in (0, 1 - 2/q] the function lies in W^{1,p} but not in W^{1,q} (n = 2).
    Negative beta gives an unbounded function; values are clipped to +-cap.
    """

    singular = True

    def __init__(self, center=(0.5, 0.5), beta=0.1, radius=0.4, amplitude=1.0, cap=1e6):
        self.center, self.beta, self.R = np.asarray(center, dtype=np.float64), float(beta), float(radius)
        self.amplitude, self.cap = float(amplitude), float(cap)

    def value(self, X, Y):
        _, _, rho = _radius(X, Y, self.center)
        with np.errstate(divide='ignore'):
            core = rho ** self.beta - self.R ** self.beta
        out = np.where(rho < self.R, self.amplitude * core, 0.0)
        return np.clip(out, -self.cap, self.cap)[None]

    def gradient(self, X, Y):
        dx, dy, rho = _radius(X, Y, self.center)
        safe = np.where(rho > 0, rho, 1.0)
        coef = self.amplitude * self.beta * safe ** (self.beta - 2.0)
        coef = np.where((rho > 0) & (rho < self.R), coef, 0.0)
        return np.stack([coef * dx, coef * dy])


class LogLog(Descriptor):
    """log(log(e R / |x-c|)) inside B_R(c), zero outside; capped at the center."""

    singular = True

    def __init__(self, center=(0.5, 0.5), radius=0.4, cap=50.0):
        self.center, self.R, self.cap = np.asarray(center, dtype=np.float64), float(radius), float(cap)

    def value(self, X, Y):
        _, _, rho = _radius(X, Y, self.center)
        safe = np.clip(rho, 1e-300, self.R)
        out = np.log(np.log(np.e * self.R / safe))
        return np.minimum(np.where(rho < self.R, out, 0.0), self.cap)[None]

    def gradient(self, X, Y):
        dx, dy, rho = _radius(X, Y, self.center)
        safe = np.where(rho > 0, rho, 1.0)
        coef = -1.0 / (safe ** 2 * np.log(np.e * self.R / np.minimum(safe, self.R)))
        coef = np.where((rho > 0) & (rho < self.R), coef, 0.0)
        return np.stack([coef * dx, coef * dy])


class Sine(Descriptor):
    """amplitude * sin(2 pi (k . x))."""

    def __init__(self, freq=(1.0, 0.0), amplitude=1.0):
        self.k, self.amplitude = np.asarray(freq, dtype=np.float64), float(amplitude)

    def value(self, X, Y):
        return (self.amplitude * np.sin(2 * np.pi * (self.k[0] * X + self.k[1] * Y)))[None]

    def gradient(self, X, Y):
        c = 2 * np.pi * self.amplitude * np.cos(2 * np.pi * (self.k[0] * X + self.k[1] * Y))
        return np.stack([c * self.k[0], c * self.k[1]])


class Cone(Descriptor):
    def __init__(self, center=(0.5, 0.5), slope=1.0):
        self.center, self.slope = np.asarray(center, dtype=np.float64), float(slope)

    def value(self, X, Y):
        return (self.slope * _radius(X, Y, self.center)[2])[None]

    def gradient(self, X, Y):
        dx, dy, rho = _radius(X, Y, self.center)
        safe = np.where(rho > 0, rho, 1.0)
        return np.stack([np.where(rho > 0, self.slope * dx / safe, 0.0),
                         np.where(rho > 0, self.slope * dy / safe, 0.0)])


class Sum(Descriptor):
    def __init__(self, terms):
        self.terms = [build_descriptor(t) for t in terms]
        self.m = self.terms[0].m
        if any(t.m != self.m for t in self.terms):
            raise InputRejected('Sum descriptor terms have different numbers of components.')

    def value(self, X, Y):
        return sum(t.value(X, Y) for t in self.terms)

    def gradient(self, X, Y):
        return sum(t.gradient(X, Y) for t in self.terms)


class FileField(Descriptor):
    """A PQF1 field file, interpolated bilinearly."""

    def __init__(self, file):
        values, (nx, ny, h, x0, y0) = load_pqf1(get_abs_path(file))
        self.m = values.shape[0]
        axes = (y0 + h * np.arange(ny + 1), x0 + h * np.arange(nx + 1))
        grads = gradient_values(values, h)
        self._val = [RegularGridInterpolator(axes, v, bounds_error=False, fill_value=None) for v in values]
        self._grad = [RegularGridInterpolator(axes, g, bounds_error=False, fill_value=None) for g in grads]

    @staticmethod
    def _eval(interps, X, Y):
        pts = np.stack([np.asarray(Y, dtype=np.float64), np.asarray(X, dtype=np.float64)], axis=-1)
        return np.stack([f(pts) for f in interps])

    def value(self, X, Y):
        return self._eval(self._val, X, Y)

    def gradient(self, X, Y):
        return self._eval(self._grad, X, Y)


DESCRIPTORS = {
    'constant': Constant, 'zero': Zero, 'affine': Affine, 'bilinear': Bilinear, 'bump': Bump,
    'radial_power': RadialPower, 'loglog': LogLog, 'sine': Sine, 'cone': Cone, 'sum': Sum, 'file': FileField,
}


def build_descriptor(node):
    """Build a descriptor from a hydra `_target_` node, a `{type, params}` dict or an instance."""
    if isinstance(node, Descriptor):
        return node
    if isinstance(node, DictConfig) and '_target_' in node:
        return hydra.utils.instantiate(node, _convert_='all')
    node = to_plain(node)
    if not isinstance(node, dict):
        raise InputRejected(f'Cannot build a descriptor from {node!r}.')
    if '_target_' in node:
        return hydra.utils.instantiate(node, _convert_='all')
    node = dict(node)
    kind = node.pop('type', None)
    if kind not in DESCRIPTORS:
        raise InputRejected(f'Unknown descriptor type {kind!r}, choose from {sorted(DESCRIPTORS)}.')
    params = node.pop('params', None) or node
    return DESCRIPTORS[kind](**params)


def snap_singular_centers(desc, grid):
    """Copy of desc with every singular point moved to the nearest cell center of grid.

    A cell center is never a node of the grid or of any coarser dyadic grid.
    """
    desc = copy.deepcopy(desc)
    stack = [desc]
    while stack:
        d = stack.pop()
        if isinstance(d, Sum):
            stack.extend(d.terms)
        elif d.singular:
            d.center = grid.snap_to_cell_center(d.center)
    return desc
