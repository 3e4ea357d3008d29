"""Uniform collocated grids, second-order difference operators and lattice symmetries.

Arrays are stored with shape ``(ny, nx)`` in C order, so the flat index of
node ``(i, j)`` is ``j * nx + i``; axis 1 is x (East), axis 0 is y (North).

The difference kernels are written so that reversing an axis flips the sign
of the first derivative and leaves the second derivative unchanged *bit for
bit*.  That is what makes the 90 degree rotation tests exact rather than
approximate, so keep the operand order of the stencils when editing them.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    GridMismatchError,
    InvalidArgumentError,
    InvalidGridError,
    UnsupportedTransformError,
)

__all__ = [
    "Grid",
    "ScalarField",
    "VectorField",
    "d1",
    "d1_flux",
    "d2",
    "grad_arrays",
    "div_arrays",
    "lap_array",
    "gradient",
    "divergence",
    "laplacian",
    "rotate90",
    "translate",
    "l2_norm",
    "h1_energy",
    "mass_weights",
    "fill_neumann",
    "rot90_array",
    "shift_array",
    "write_snapshot",
    "read_snapshot",
]


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    dx: float
    dy: float

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise InvalidGridError(f"cell counts must be integers, got {self.nx}x{self.ny}")
        if self.nx < 3 or self.ny < 3:
            raise InvalidGridError(f"grid must be at least 3x3, got {self.nx}x{self.ny}")
        if not (self.dx > 0 and self.dy > 0):
            raise InvalidGridError(f"spacings must be positive, got dx={self.dx}, dy={self.dy}")

    @classmethod
    def square(cls, n: int, spacing: float) -> "Grid":
        return cls(n, n, float(spacing), float(spacing))

    @classmethod
    def unit_pi(cls, intervals: int) -> "Grid":
        """Grid sampling [0, pi]^2 with ``intervals`` cells per side (nodes on both walls)."""
        return cls.square(intervals + 1, math.pi / intervals)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def Lx(self) -> float:
        return (self.nx - 1) * self.dx

    @property
    def Ly(self) -> float:
        return (self.ny - 1) * self.dy

    @property
    def is_square(self) -> bool:
        return self.nx == self.ny and self.dx == self.dy

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.nx) * self.dx

    @property
    def y(self) -> np.ndarray:
        return np.arange(self.ny) * self.dy

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinate arrays ``(X, Y)`` of shape ``(ny, nx)``."""
        return np.meshgrid(self.x, self.y, indexing="xy")

    def zeros(self) -> "ScalarField":
        return ScalarField(self, np.zeros(self.shape))

    def boundary_mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[0, :] = m[-1, :] = m[:, 0] = m[:, -1] = True
        return m


def _check_values(grid: Grid, values: np.ndarray, name: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape != grid.shape:
        if values.size == grid.nx * grid.ny and values.ndim == 1:
            values = values.reshape(grid.shape)
        else:
            raise GridMismatchError(f"{name}: shape {values.shape} does not match grid {grid.shape}")
    if not np.all(np.isfinite(values)):
        raise InvalidArgumentError(f"{name} contains non-finite values")
    return values


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _check_values(self.grid, self.values, "ScalarField"))

    def _same(self, other: "ScalarField"):
        if other.grid != self.grid:
            raise GridMismatchError("fields live on different grids")

    def __add__(self, other):
        self._same(other)
        return ScalarField(self.grid, self.values + other.values)

    def __sub__(self, other):
        self._same(other)
        return ScalarField(self.grid, self.values - other.values)

    def __mul__(self, a: float):
        return ScalarField(self.grid, a * self.values)

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.grid, -self.values)


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: Grid
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _check_values(self.grid, self.x, "VectorField.x"))
        object.__setattr__(self, "y", _check_values(self.grid, self.y, "VectorField.y"))

    @classmethod
    def zeros(cls, grid: Grid) -> "VectorField":
        return cls(grid, np.zeros(grid.shape), np.zeros(grid.shape))

    def _same(self, other: "VectorField"):
        if other.grid != self.grid:
            raise GridMismatchError("fields live on different grids")

    def __add__(self, other):
        self._same(other)
        return VectorField(self.grid, self.x + other.x, self.y + other.y)

    def __sub__(self, other):
        self._same(other)
        return VectorField(self.grid, self.x - other.x, self.y - other.y)

    def __mul__(self, a: float):
        return VectorField(self.grid, a * self.x, a * self.y)

    __rmul__ = __mul__

    def __neg__(self):
        return VectorField(self.grid, -self.x, -self.y)


# ---------------------------------------------------------------------------
# array-level stencils (hot path)

def d1(a: np.ndarray, axis: int, h: float) -> np.ndarray:
    """First derivative along ``axis``: centered inside, one-sided 2nd order on the walls."""
    b = np.moveaxis(a, axis, -1)
    if b.shape[-1] < 3:
        raise InvalidGridError("need at least 3 nodes along each axis")
    c = 0.5 / h
    out = np.empty_like(b)
    out[..., 1:-1] = (b[..., 2:] - b[..., :-2]) * c
    out[..., 0] = ((4.0 * b[..., 1] - 3.0 * b[..., 0]) - b[..., 2]) * c
    out[..., -1] = -(((4.0 * b[..., -2] - 3.0 * b[..., -1]) - b[..., -3]) * c)
    return np.moveaxis(out, -1, axis)


def d1_flux(a: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Summation-by-parts first derivative: centered inside, first-order one-sided on the walls.

    Under the trapezoid weights of :func:`mass_weights` the weighted sum of
    ``d1_flux(a)`` telescopes to ``a[-1] - a[0]``, so a flux that vanishes on
    the walls leaves the integral unchanged to round-off.
    """
    b = np.moveaxis(a, axis, -1)
    if b.shape[-1] < 3:
        raise InvalidGridError("need at least 3 nodes along each axis")
    c = 0.5 / h
    out = np.empty_like(b)
    out[..., 1:-1] = (b[..., 2:] - b[..., :-2]) * c
    out[..., 0] = (b[..., 1] - b[..., 0]) * (2.0 * c)
    out[..., -1] = -((b[..., -2] - b[..., -1]) * (2.0 * c))
    return np.moveaxis(out, -1, axis)


def d2(a: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Second derivative along ``axis``; walls use the 4-point one-sided formula."""
    b = np.moveaxis(a, axis, -1)
    if b.shape[-1] < 4:
        raise InvalidGridError("need at least 4 nodes along each axis for the one-sided second difference")
    c = 1.0 / (h * h)
    out = np.empty_like(b)
    out[..., 1:-1] = ((b[..., 2:] + b[..., :-2]) - 2.0 * b[..., 1:-1]) * c
    out[..., 0] = ((2.0 * b[..., 0] - 5.0 * b[..., 1]) + (4.0 * b[..., 2] - b[..., 3])) * c
    out[..., -1] = ((2.0 * b[..., -1] - 5.0 * b[..., -2]) + (4.0 * b[..., -3] - b[..., -4])) * c
    return np.moveaxis(out, -1, axis)


def grad_arrays(a: np.ndarray, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    return d1(a, 1, grid.dx), d1(a, 0, grid.dy)


def div_arrays(ax: np.ndarray, ay: np.ndarray, grid: Grid) -> np.ndarray:
    return d1(ax, 1, grid.dx) + d1(ay, 0, grid.dy)


def lap_array(a: np.ndarray, grid: Grid) -> np.ndarray:
    return d2(a, 1, grid.dx) + d2(a, 0, grid.dy)


# ---------------------------------------------------------------------------
# field-level API

def gradient(f: ScalarField) -> VectorField:
    gx, gy = grad_arrays(f.values, f.grid)
    return VectorField(f.grid, gx, gy)


def divergence(w: VectorField) -> ScalarField:
    return ScalarField(w.grid, div_arrays(w.x, w.y, w.grid))


def laplacian(f: ScalarField) -> ScalarField:
    return ScalarField(f.grid, lap_array(f.values, f.grid))


def rot90_array(a: np.ndarray) -> np.ndarray:
    """Rotate a ``(ny, nx)`` array by +90 degrees about the domain centre: (x, y) -> (-y, x)."""
    return np.ascontiguousarray(np.rot90(a, -1))


def rotate90(f):
    """Rotate a scalar or vector field by +90 degrees on a square lattice."""
    if not f.grid.is_square:
        raise UnsupportedTransformError("rotate90 requires a square grid (nx == ny, dx == dy)")
    if isinstance(f, VectorField):
        return VectorField(f.grid, -rot90_array(f.y), rot90_array(f.x))
    return ScalarField(f.grid, rot90_array(f.values))


def shift_array(a: np.ndarray, sx: int, sy: int, fill: str = "zero") -> np.ndarray:
    if fill == "periodic":
        return np.roll(a, (sy, sx), axis=(0, 1))
    if fill != "zero":
        raise InvalidArgumentError(f"unknown fill policy {fill!r}")
    ny, nx = a.shape
    out = np.zeros_like(a)
    out[max(sy, 0):ny + min(sy, 0), max(sx, 0):nx + min(sx, 0)] = \
        a[max(-sy, 0):ny + min(-sy, 0), max(-sx, 0):nx + min(-sx, 0)]
    return out


def translate(f: ScalarField, sx: int, sy: int, fill: str = "zero") -> ScalarField:
    """Shift ``f`` by whole cells: ``out[j + sy, i + sx] = f[j, i]``."""
    g = f.grid
    if abs(sx) >= g.nx or abs(sy) >= g.ny:
        raise InvalidArgumentError(f"shift ({sx}, {sy}) out of range for a {g.nx}x{g.ny} grid")
    return ScalarField(g, shift_array(f.values, int(sx), int(sy), fill))


def _fsum(a: np.ndarray) -> float:
    # correctly rounded, hence independent of the element order
    return math.fsum(a.ravel().tolist())


def l2_norm(f: ScalarField) -> float:
    return math.sqrt(_fsum(np.square(f.values)) * f.grid.dx * f.grid.dy)


def h1_energy(u: ScalarField, w: ScalarField) -> float:
    """Discrete energy norm ``sqrt(sum(|grad u|^2 + w^2) dx dy)``."""
    if u.grid != w.grid:
        raise GridMismatchError("u and w live on different grids")
    gx, gy = grad_arrays(u.values, u.grid)
    dens = (gx * gx + gy * gy) + w.values * w.values
    return math.sqrt(_fsum(dens) * u.grid.dx * u.grid.dy)


def _axis_weights(n: int) -> np.ndarray:
    w = np.ones(n)
    w[0] = w[-1] = 0.5
    return w


def mass_weights(grid: Grid) -> np.ndarray:
    """Trapezoid quadrature weights (1/2 on walls, 1/4 in corners).

    These are the norm matrix of :func:`d1_flux`; under them mass is
    conserved to round-off and the linear wave energy up to time-stepping
    error.
    """
    return np.outer(_axis_weights(grid.ny), _axis_weights(grid.nx))


def fill_neumann(a: np.ndarray) -> np.ndarray:
    """Overwrite wall values in place so the one-sided normal derivative vanishes.

    Edge nodes get ``(4 a1 - a2) / 3`` from the two nodes inward; each corner
    is the mean of the extrapolations along the two adjacent walls, which keeps
    the operation exactly equivariant under 90 degree rotations.
    """
    a[0, 1:-1] = (4.0 * a[1, 1:-1] - a[2, 1:-1]) / 3.0
    a[-1, 1:-1] = (4.0 * a[-2, 1:-1] - a[-3, 1:-1]) / 3.0
    a[1:-1, 0] = (4.0 * a[1:-1, 1] - a[1:-1, 2]) / 3.0
    a[1:-1, -1] = (4.0 * a[1:-1, -2] - a[1:-1, -3]) / 3.0
    for j, j1, j2 in ((0, 1, 2), (-1, -2, -3)):
        for i, i1, i2 in ((0, 1, 2), (-1, -2, -3)):
            cx = (4.0 * a[j, i1] - a[j, i2]) / 3.0
            cy = (4.0 * a[j1, i] - a[j2, i]) / 3.0
            a[j, i] = 0.5 * (cx + cy)
    return a


# ---------------------------------------------------------------------------
# SWF1 snapshot files

_HEADER = struct.Struct("<4sIIdd")
MAGIC = b"SWF1"


def write_snapshot(path, f: ScalarField) -> Path:
    g = f.grid
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, g.nx, g.ny, g.dx, g.dy))
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())
    return path


def read_snapshot(path) -> ScalarField:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise InvalidArgumentError(f"{path}: truncated SWF1 header")
    magic, nx, ny, dx, dy = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise InvalidArgumentError(f"{path}: bad magic {magic!r}")
    body = raw[_HEADER.size:]
    if len(body) != 8 * nx * ny:
        raise InvalidArgumentError(f"{path}: expected {nx * ny} values, found {len(body) // 8}")
    grid = Grid(nx, ny, dx, dy)
    return ScalarField(grid, np.frombuffer(body, dtype="<f8").reshape(ny, nx).astype(float))
