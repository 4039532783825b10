"""Nodal fields on a Grid, their finite-difference gradients and the PQF1 binary format."""
import struct
from dataclasses import dataclass, field

import numpy as np

from utils.basics import first_index, init_path
from .errors import InputRejected, NonFiniteField
from .geometry import make_grid

MAGIC = b'PQF1'
VERSION = 1
_HEADER = struct.Struct('<4sIIIIddd')


@dataclass(eq=False)
class Field:
    grid: object
    values: np.ndarray  # (m, ny+1, nx+1)
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 2:
            v = v[None]
        if v.shape[1:] != self.grid.shape:
            raise InputRejected(f'Field shape {v.shape[1:]} does not match grid {self.grid.shape}.')
        self.values = v
        if self.check and not np.all(np.isfinite(v)):
            raise NonFiniteField(first_index(~np.isfinite(v)))

    @property
    def m(self):
        return self.values.shape[0]

    @classmethod
    def zeros(cls, grid, m=1):
        return cls(grid, np.zeros((m,) + grid.shape))

    @classmethod
    def from_function(cls, grid, fn):
        X, Y = grid.mesh()
        return cls(grid, np.asarray(fn(X, Y), dtype=np.float64))

    def copy(self):
        return Field(self.grid, self.values.copy(), check=False)

    def gradient(self):
        """Gradient Field with 2m components ordered [du0/dx, du0/dy, du1/dx, ...]."""
        return Field(self.grid, gradient_values(self.values, self.grid.h), check=False)

    def norm_pointwise(self):
        return np.sqrt(np.sum(self.values ** 2, axis=0))

    def __sub__(self, other):
        return Field(self.grid, self.values - _vals(other), check=False)

    def __add__(self, other):
        return Field(self.grid, self.values + _vals(other), check=False)

    # ! Binary IO
    def write(self, file_name):
        g = self.grid
        with open(init_path(file_name), 'wb') as f:
            f.write(_HEADER.pack(MAGIC, VERSION, self.m, g.nx, g.ny, g.h, g.x0, g.y0))
            f.write(np.ascontiguousarray(self.values, dtype='<f8').tobytes())
        return file_name

    @classmethod
    def read(cls, file_name, domain, grid=None):
        values, (nx, ny, h, x0, y0) = load_pqf1(file_name)
        if grid is None:
            grid = make_grid(domain, x0, y0, h, nx, ny)
        elif (grid.nx, grid.ny) != (nx, ny) or not np.isclose(grid.h, h):
            raise InputRejected(f'{file_name} was sampled on a different grid.')
        return cls(grid, values.astype(np.float64))


def _vals(other):
    return other.values if isinstance(other, Field) else other


def gradient_values(values, h):
    out = np.empty((2 * values.shape[0],) + values.shape[1:])
    for c in range(values.shape[0]):
        d_dy, d_dx = np.gradient(values[c], h, edge_order=2)
        out[2 * c], out[2 * c + 1] = d_dx, d_dy
    return out


def cell_average(values):
    """Average nodal values (k, ny+1, nx+1) to cell centers (k, ny, nx)."""
    return 0.25 * (values[:, :-1, :-1] + values[:, :-1, 1:] + values[:, 1:, :-1] + values[:, 1:, 1:])


def load_pqf1(file_name):
    """Raw PQF1 contents: values (m, ny+1, nx+1) and the header tuple (nx, ny, h, x0, y0)."""
    with open(file_name, 'rb') as f:
        raw = f.read()
    if len(raw) < _HEADER.size:
        raise InputRejected(f'{file_name} is too short to be a PQF1 field file.')
    magic, version, m, nx, ny, h, x0, y0 = _HEADER.unpack_from(raw)
    if magic != MAGIC or version != VERSION:
        raise InputRejected(f'{file_name} is not a PQF1 v{VERSION} field file.')
    n_expected = m * (nx + 1) * (ny + 1)
    values = np.frombuffer(raw, dtype='<f8', offset=_HEADER.size)
    if values.size != n_expected:
        raise InputRejected(f'{file_name} holds {values.size} values, header announces {n_expected}.')
    return values.reshape(m, ny + 1, nx + 1).astype(np.float64), (nx, ny, h, x0, y0)


@dataclass
class Patch:
    """Values of a locally supported function on a window of grid nodes."""
    rows: slice
    cols: slice
    values: np.ndarray  # (ny_w, nx_w)
    grad: np.ndarray  # (2, ny_w, nx_w), [d/dx, d/dy]

    def embed(self, grid):
        full = np.zeros(grid.shape)
        full[self.rows, self.cols] = self.values
        return full
