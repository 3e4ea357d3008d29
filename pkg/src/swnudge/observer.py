"""Symmetry-preserving nudging observers.

The observer is a copy of the model plus two convolution corrections driven
by the height innovation ``h_obs - h_hat``::

    dh_hat/dt += phi_h * (h_obs - h_hat)
    dv_hat/dt += phi_v * grad(h_obs - h_hat)      (d(h_hat v_hat)/dt for the full model)

With Dirac kernels these reduce to classical nudging.  Corrections are part
of the right-hand side, so they act inside every Runge-Kutta stage.

Near the walls the convolution needs the innovation beyond the basin.  The
default ``"mirror"`` extension uses the image flow of the free-slip walls:
heights continue evenly, and each gradient component oddly across the walls
normal to it.  This keeps the correction consistent with the model's wall
closure, so smooth errors do not leak into the grid-scale modes of the
centred scheme.  ``"zero"`` extends the innovation by zero instead.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import FlowState, Model, ModelParams, Tendency, close_walls
from .errors import GridMismatchError, InvalidArgumentError
from .grid import Grid, ScalarField, VectorField, d1
from .kernels import DiscreteKernel, KernelSpec, build_kernel, convolve_array

__all__ = [
    "EXTENSIONS",
    "ObserverConfig",
    "ObserverState",
    "Observer",
    "correction_h",
    "correction_v",
    "observer_rhs_simplified",
    "observer_rhs_nonlinear",
    "enforce_boundary",
]


#: innovation extension past the walls -> (height, x-gradient, y-gradient) modes as (y, x) pairs
EXTENSIONS = {
    "mirror": (("even", "even"), ("even", "odd"), ("odd", "even")),
    "zero": ("zero", "zero", "zero"),
}


@dataclass(frozen=True)
class ObserverConfig:
    kernel_h: KernelSpec = field(default_factory=lambda: KernelSpec.gaussian(1.0, 5e-7))
    kernel_v: KernelSpec = field(default_factory=lambda: KernelSpec.gaussian(1.0, 5e-8))
    model: str = "simplified"
    extension: str = "mirror"

    def __post_init__(self):
        if self.extension not in EXTENSIONS:
            raise InvalidArgumentError(f"extension must be one of {tuple(EXTENSIONS)}, got {self.extension!r}")

    @classmethod
    def gaussian(cls, alpha=1.0, beta_h=5e-7, beta_v=None, radius=10, model="simplified",
                 extension="mirror") -> "ObserverConfig":
        """Equal-width Gaussian pair; ``beta_v`` defaults to ``0.1 * beta_h``."""
        if beta_v is None:
            beta_v = 0.1 * beta_h
        kh, kv = KernelSpec.gaussian(alpha, beta_h, radius), KernelSpec.gaussian(alpha, beta_v, radius)
        return cls(kh, kv, model, extension)

    @classmethod
    def dirac(cls, K_h: float, K_v: float, model="simplified") -> "ObserverConfig":
        return cls(KernelSpec.dirac(K_h), KernelSpec.dirac(K_v), model)


@dataclass(frozen=True, eq=False)
class ObserverState:
    h_hat: ScalarField
    v_hat: VectorField
    t: float = 0.0


def _same_grid(a: ScalarField, b: ScalarField):
    if a.grid != b.grid:
        raise GridMismatchError("observation and estimate live on different grids")


def _modes(extension: str):
    try:
        return EXTENSIONS[extension]
    except KeyError:
        raise InvalidArgumentError(f"extension must be one of {tuple(EXTENSIONS)}, got {extension!r}") from None


def correction_h(h_obs: ScalarField, h_hat: ScalarField, k: DiscreteKernel, extension: str = "mirror") -> ScalarField:
    _same_grid(h_obs, h_hat)
    return ScalarField(h_obs.grid, convolve_array(k, h_obs.values - h_hat.values, _modes(extension)[0]))


def _corr_v_arrays(err: np.ndarray, grid: Grid, k: DiscreteKernel, extension: str = "mirror"):
    _, mx, my = _modes(extension)
    gx = d1(err, 1, grid.dx)
    gy = d1(err, 0, grid.dy)
    return convolve_array(k, gx, mx), convolve_array(k, gy, my)


def correction_v(h_obs: ScalarField, h_hat: ScalarField, k: DiscreteKernel, extension: str = "mirror") -> VectorField:
    """Gradient of the innovation first, then each component convolved."""
    _same_grid(h_obs, h_hat)
    cx, cy = _corr_v_arrays(h_obs.values - h_hat.values, h_obs.grid, k, extension)
    return VectorField(h_obs.grid, cx, cy)


class Observer:
    """Observer right-hand side bound to a :class:`Model` and a pair of stencils.

    ``rhs(y_hat, h_obs)`` works on the model's prognostic arrays; ``h_obs``
    must use the same convention as ``y_hat[0]`` (a perturbation for the
    linear model, a full height otherwise).
    """

    def __init__(self, model: Model, cfg: ObserverConfig):
        if cfg.model != model.kind:
            raise InvalidArgumentError(f"observer configured for {cfg.model!r} but model is {model.kind!r}")
        self.model = model
        self.cfg = cfg
        self.k_h = build_kernel(cfg.kernel_h)
        self.k_v = build_kernel(cfg.kernel_v)

    def corrections(self, h_hat: np.ndarray, h_obs: np.ndarray):
        err = h_obs - h_hat
        ch = convolve_array(self.k_h, err, _modes(self.cfg.extension)[0])
        cx, cy = _corr_v_arrays(err, self.model.grid, self.k_v, self.cfg.extension)
        return ch, cx, cy

    def rhs(self, y_hat, h_obs: np.ndarray, dh_obs: np.ndarray | None = None):
        """Observer tendency.

        When the observed height tendency ``dh_obs`` is supplied, the wall
        cells of ``h_hat`` follow it, so the observed wall heights act as
        boundary data inside every Runge-Kutta stage instead of being imposed
        only by the overwrite after the step (which damps the error by an
        amount that depends on the time step).
        """
        th, tx, ty = self.model.rhs(y_hat)
        ch, cx, cy = self.corrections(y_hat[0], h_obs)
        th, tx, ty = close_walls(self.model.kind, th + ch, tx + cx, ty + cy)
        if dh_obs is not None:
            th = self.enforce_boundary_arrays((th,), dh_obs)[0]
        return th, tx, ty

    @staticmethod
    def enforce_boundary_arrays(y_hat, h_obs: np.ndarray):
        h = y_hat[0].copy()
        h[0, :] = h_obs[0, :]
        h[-1, :] = h_obs[-1, :]
        h[:, 0] = h_obs[:, 0]
        h[:, -1] = h_obs[:, -1]
        return (h,) + tuple(y_hat[1:])


def _field_rhs(o: ObserverState, h_obs: ScalarField, cfg: ObserverConfig, params: ModelParams, kind: str) -> Tendency:
    _same_grid(h_obs, o.h_hat)
    grid = o.h_hat.grid
    model = Model(kind, grid, params)
    obs = Observer(model, ObserverConfig(cfg.kernel_h, cfg.kernel_v, kind, cfg.extension))
    y = model.from_state(FlowState(o.h_hat, o.v_hat, o.t))
    th, tx, ty = obs.rhs(y, h_obs.values)
    return Tendency(ScalarField(grid, th), VectorField(grid, tx, ty))


def observer_rhs_simplified(o: ObserverState, h_obs: ScalarField, cfg: ObserverConfig, g: float) -> Tendency:
    return _field_rhs(o, h_obs, cfg, ModelParams(g_reduced=g, tau_max=0.0), "simplified")


def observer_rhs_nonlinear(o: ObserverState, h_obs: ScalarField, cfg: ObserverConfig, params: ModelParams) -> Tendency:
    """Full-model observer; ``Tendency.v`` is the tendency of the transport ``h_hat v_hat``."""
    return _field_rhs(o, h_obs, cfg, params, "nonlinear")


def enforce_boundary(o: ObserverState, h_obs: ScalarField) -> ObserverState:
    """Overwrite the wall cells of ``h_hat`` with the observation."""
    _same_grid(h_obs, o.h_hat)
    (h,) = Observer.enforce_boundary_arrays((o.h_hat.values,), h_obs.values)
    return ObserverState(ScalarField(o.h_hat.grid, h), o.v_hat, o.t)
