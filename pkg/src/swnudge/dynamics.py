"""Shallow-water right-hand sides and the RK4 integrator.

Three models share one grid and one wall treatment (:func:`close_walls`):
free-slip rigid walls, where the wall-normal velocity (or transport) has zero
tendency and must start at zero.  Continuity uses a summation-by-parts
divergence so that the trapezoid-weighted mass is conserved exactly.  The
full model also slaves the tangential transport at the walls and uses mirror
ghosts for its viscous term.

``nonlinear``
    prognostic ``(h, hu, hv)``; momentum in flux form with Coriolis on the
    beta plane, Laplacian viscosity, linear friction and zonal wind forcing.
``simplified``
    prognostic ``(h, u, v)``; the inviscid Saint-Venant system.
``linear``
    prognostic ``(dh, du, dv)``; the Saint-Venant system linearised about
    ``(h_bar, 0)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple

import numpy as np

from .errors import CFLError, InvalidArgumentError, StateInvalidError
from .grid import Grid, ScalarField, VectorField, d1, d1_flux, fill_neumann, mass_weights

MODELS = ("linear", "simplified", "nonlinear")
WIND_PROFILES = ("double_gyre", "single_gyre", "none")

#: largest Courant number accepted by :func:`step_rk4` without ``force``
CFL_LIMIT = 1.0


@dataclass(frozen=True)
class ModelParams:
    """Physical constants; defaults are the reference basin of the experiments."""

    g_reduced: float = 0.02
    f0: float = 7e-5
    beta: float = 2e-11
    R: float = 9e-8
    A: float = 5.0
    alpha_A: float = 1.0
    alpha_tau: float = 1.0
    tau_max: float = 0.05
    rho: float = 1000.0
    h_bar: float = 500.0
    D: float | None = None
    wind_profile: str = "double_gyre"

    def __post_init__(self):
        if not self.g_reduced > 0:
            raise InvalidArgumentError("g_reduced must be > 0")
        if not self.h_bar > 0:
            raise InvalidArgumentError("h_bar must be > 0")
        if not self.rho > 0:
            raise InvalidArgumentError("rho must be > 0")
        for name in ("A", "R", "tau_max"):
            if getattr(self, name) < 0:
                raise InvalidArgumentError(f"{name} must be >= 0")
        if self.wind_profile not in WIND_PROFILES:
            raise InvalidArgumentError(f"unknown wind profile {self.wind_profile!r}")

    def resolved(self, grid: Grid) -> "ModelParams":
        """Fill ``D`` with the basin side when it was left unset."""
        return self if self.D is not None else replace(self, D=grid.Ly)

    @property
    def gh(self) -> float:
        return self.g_reduced * self.h_bar


@dataclass(frozen=True, eq=False)
class FlowState:
    h: ScalarField
    v: VectorField
    t: float = 0.0

    def __post_init__(self):
        if np.any(self.h.values <= 0):
            raise StateInvalidError("height must stay positive")


@dataclass(frozen=True, eq=False)
class LinearState:
    dh: ScalarField
    dv: VectorField
    t: float = 0.0


class Tendency(NamedTuple):
    """Time derivatives: ``h`` of the height, ``v`` of the velocity (transport for the nonlinear model)."""

    h: ScalarField
    v: VectorField


# ---------------------------------------------------------------------------
# forcing

def wind_stress_profile(y, params: ModelParams, Ly: float | None = None):
    """Raw zonal stress amplitude at latitude ``y`` (scaled by ``alpha_tau / rho`` in the RHS)."""
    L = Ly if Ly is not None else params.D
    if L is None:
        raise InvalidArgumentError("basin side unknown: pass Ly or set params.D")
    y = np.asarray(y, dtype=float)
    if params.wind_profile == "none" or params.tau_max == 0:
        out = np.zeros_like(y)
    elif params.wind_profile == "double_gyre":
        out = -params.tau_max * np.cos(2.0 * np.pi * y / L)
    else:
        out = -params.tau_max * np.cos(np.pi * y / L)
    return out if out.ndim else float(out)


def coriolis(y, params: ModelParams):
    """Beta-plane Coriolis parameter ``f0 + beta (y - D/2)``."""
    if params.D is None:
        raise InvalidArgumentError("params.D is unset; call params.resolved(grid) first")
    f = params.f0 + params.beta * (np.asarray(y, dtype=float) - 0.5 * params.D)
    return f if np.ndim(f) else float(f)


def courant_number(grid: Grid, params: ModelParams, dt: float) -> float:
    """Gravity-wave Courant number ``dt * sqrt(2 g h_bar) / min(dx, dy)`` (advisory)."""
    return dt * math.sqrt(2.0 * params.gh) / min(grid.dx, grid.dy)


cfl_check = courant_number


# ---------------------------------------------------------------------------
# array kernels

def _walls(ax: np.ndarray, ay: np.ndarray) -> None:
    ax[:, 0] = 0.0
    ax[:, -1] = 0.0
    ay[0, :] = 0.0
    ay[-1, :] = 0.0


def close_walls(kind: str, th: np.ndarray, tx: np.ndarray, ty: np.ndarray):
    """Apply the wall closure to a tendency in place.

    Normal components vanish.  The full model also slaves the tangential
    transport at the walls, since the one-sided advection and viscous stencils
    there are unstable once the western boundary current reaches grid scale.
    Wall heights stay prognostic; the continuity equation uses the
    summation-by-parts divergence, which conserves mass exactly.
    """
    if kind == "nonlinear":
        fill_neumann(tx)
        fill_neumann(ty)
    _walls(tx, ty)
    return th, tx, ty


def _check_h(h: np.ndarray) -> None:
    if not (h.min() > 0):
        raise StateInvalidError("non-positive or non-finite height encountered")


def rhs_linear_arrays(dh, dvx, dvy, grid: Grid, h_bar: float, g: float):
    th = -h_bar * (d1_flux(dvx, 1, grid.dx) + d1_flux(dvy, 0, grid.dy))
    tx = -g * d1(dh, 1, grid.dx)
    ty = -g * d1(dh, 0, grid.dy)
    return close_walls("linear", th, tx, ty)


def rhs_simplified_arrays(h, vx, vy, grid: Grid, g: float):
    _check_h(h)
    dx, dy = grid.dx, grid.dy
    th = -(d1_flux(h * vx, 1, dx) + d1_flux(h * vy, 0, dy))
    hx, hy = d1(h, 1, dx), d1(h, 0, dy)
    tx = -(vx * d1(vx, 1, dx) + vy * d1(vx, 0, dy)) - g * hx
    ty = -(vx * d1(vy, 1, dx) + vy * d1(vy, 0, dy)) - g * hy
    return close_walls("simplified", th, tx, ty)


def _lap_free_slip(a: np.ndarray, dx: float, dy: float) -> np.ndarray:
    # mirror ghosts (zero normal gradient); the one-sided second difference
    # at a wall has a growing mode when used for diffusion
    e = np.pad(a, 1, mode="reflect")
    lx = (e[1:-1, 2:] - 2.0 * a + e[1:-1, :-2]) / (dx * dx)
    ly = (e[2:, 1:-1] - 2.0 * a + e[:-2, 1:-1]) / (dy * dy)
    return lx + ly


def rhs_nonlinear_arrays(h, qx, qy, grid: Grid, p: ModelParams, f_cor: np.ndarray, wind: np.ndarray):
    """Tendencies of ``(h, hu, hv)``; ``f_cor`` and ``wind`` are precomputed ``(ny, nx)`` fields."""
    _check_h(h)
    dx, dy = grid.dx, grid.dy
    vx = qx / h
    vy = qy / h
    th = -(d1_flux(qx, 1, dx) + d1_flux(qy, 0, dy))
    divq = d1(qx, 1, dx) + d1(qy, 0, dy)
    adv_x = divq * vx + (qx * d1(vx, 1, dx) + qy * d1(vx, 0, dy))
    adv_y = divq * vy + (qx * d1(vy, 1, dx) + qy * d1(vy, 0, dy))
    gh = p.g_reduced * h
    visc = p.alpha_A * p.A
    lap_qx = _lap_free_slip(qx, dx, dy)
    lap_qy = _lap_free_slip(qy, dx, dy)
    # keep the x and y expressions structurally identical (rotation tests are bit-exact)
    tx = (((-adv_x) - gh * d1(h, 1, dx)) + f_cor * qy) + (visc * lap_qx - p.R * qx)
    ty = (((-adv_y) - gh * d1(h, 0, dy)) - f_cor * qx) + (visc * lap_qy - p.R * qy)
    tx = tx + wind
    return close_walls("nonlinear", th, tx, ty)


# ---------------------------------------------------------------------------
# field-level API

def rhs_nonlinear(s: FlowState, p: ModelParams) -> Tendency:
    """Tendencies of the full model; ``Tendency.v`` is d(hv)/dt."""
    grid = s.h.grid
    p = p.resolved(grid)
    _, Y = grid.mesh()
    f_cor = coriolis(Y, p)
    wind = p.alpha_tau * wind_stress_profile(Y, p, grid.Ly) / p.rho
    h = s.h.values
    th, tx, ty = rhs_nonlinear_arrays(h, h * s.v.x, h * s.v.y, grid, p, f_cor, wind)
    return Tendency(ScalarField(grid, th), VectorField(grid, tx, ty))


def rhs_simplified(s: FlowState, g: float) -> Tendency:
    grid = s.h.grid
    th, tx, ty = rhs_simplified_arrays(s.h.values, s.v.x, s.v.y, grid, g)
    return Tendency(ScalarField(grid, th), VectorField(grid, tx, ty))


def rhs_linearized(s: LinearState, h_bar: float, g: float) -> Tendency:
    grid = s.dh.grid
    th, tx, ty = rhs_linear_arrays(s.dh.values, s.dv.x, s.dv.y, grid, h_bar, g)
    return Tendency(ScalarField(grid, th), VectorField(grid, tx, ty))


# ---------------------------------------------------------------------------
# time stepping

def _lin(a, b, c):
    """a + c * b over tuples of arrays (or bare arrays/floats)."""
    if isinstance(a, tuple):
        return tuple(x + c * y for x, y in zip(a, b))
    return a + c * b


def step_rk4(y, rhs: Callable, dt: float, *, courant: float | None = None, force: bool = False):
    """One classical Runge-Kutta step of ``y' = rhs(y)``.

    ``y`` is an array, a float or a tuple of arrays.  When ``courant`` is
    given and exceeds :data:`CFL_LIMIT` the step is refused unless ``force``.
    """
    if not dt > 0:
        raise InvalidArgumentError(f"dt must be positive, got {dt}")
    if courant is not None and courant > CFL_LIMIT and not force:
        raise CFLError(f"Courant number {courant:.3g} exceeds {CFL_LIMIT}; pass force=True to override")
    k1 = rhs(y)
    k2 = rhs(_lin(y, k1, 0.5 * dt))
    k3 = rhs(_lin(y, k2, 0.5 * dt))
    k4 = rhs(_lin(y, k3, dt))
    c = dt / 6.0
    if isinstance(y, tuple):
        return tuple(a + c * ((b1 + 2.0 * b2) + (2.0 * b3 + b4)) for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4))
    return y + c * ((k1 + 2.0 * k2) + (2.0 * k3 + k4))


@dataclass
class Model:
    """A model bound to a grid: converts between :class:`FlowState` and prognostic arrays."""

    kind: str
    grid: Grid
    params: ModelParams = field(default_factory=ModelParams)

    def __post_init__(self):
        if self.kind not in MODELS:
            raise InvalidArgumentError(f"unknown model {self.kind!r}; expected one of {MODELS}")
        self.params = self.params.resolved(self.grid)
        _, Y = self.grid.mesh()
        self.f_cor = coriolis(Y, self.params)
        self.wind = self.params.alpha_tau * wind_stress_profile(Y, self.params, self.grid.Ly) / self.params.rho

    def rhs(self, y):
        p, g = self.params, self.grid
        if self.kind == "linear":
            return rhs_linear_arrays(*y, g, p.h_bar, p.g_reduced)
        if self.kind == "simplified":
            return rhs_simplified_arrays(*y, g, p.g_reduced)
        return rhs_nonlinear_arrays(*y, g, p, self.f_cor, self.wind)

    def courant(self, dt: float) -> float:
        return courant_number(self.grid, self.params, dt)

    def step(self, y, dt: float, force: bool = False):
        return step_rk4(y, self.rhs, dt, courant=self.courant(dt), force=force)

    # conversions ---------------------------------------------------------

    def from_state(self, s: FlowState):
        h, vx, vy = s.h.values.copy(), s.v.x.copy(), s.v.y.copy()
        _walls(vx, vy)
        if self.kind == "linear":
            return (h - self.params.h_bar, vx, vy)
        if self.kind == "simplified":
            return (h, vx, vy)
        qx, qy = h * vx, h * vy
        close_walls(self.kind, h, qx, qy)
        return (h, qx, qy)

    def to_arrays(self, y) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Full ``(h, u, v)`` arrays from prognostic variables."""
        if self.kind == "linear":
            return (y[0] + self.params.h_bar, y[1], y[2])
        if self.kind == "simplified":
            return y
        return (y[0], y[1] / y[0], y[2] / y[0])

    def to_state(self, y, t: float = 0.0) -> FlowState:
        h, vx, vy = self.to_arrays(y)
        return FlowState(ScalarField(self.grid, h), VectorField(self.grid, vx, vy), t)

    def equilibrium(self):
        z = np.zeros(self.grid.shape)
        h = np.full(self.grid.shape, self.params.h_bar)
        return self.from_state(FlowState(ScalarField(self.grid, h), VectorField(self.grid, z, z)))


def linear_energy(dh: np.ndarray, dvx: np.ndarray, dvy: np.ndarray, grid: Grid, h_bar: float, g: float) -> float:
    """``g |dh|^2 + h_bar |dv|^2`` with trapezoid weights."""
    w = mass_weights(grid)
    return grid.dx * grid.dy * (g * float(np.sum(w * dh * dh)) + h_bar * float(np.sum(w * (dvx * dvx + dvy * dvy))))


def total_mass(h: np.ndarray, grid: Grid) -> float:
    return float(np.sum(mass_weights(grid) * h)) * grid.dx * grid.dy
