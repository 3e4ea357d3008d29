"""Modal analysis of the linearised error equation on the reference square.

The height error ``u`` of the linearised observer obeys the damped wave
equation ``u_tt = psi_v * lap(u) - phi_h * u_t`` with Dirichlet walls, where
``psi_v = g h_bar delta + h_bar phi_v``.  On ``[0, pi]^2`` the sine modes
``e_pq = (2/pi) sin(px) sin(qy)`` diagonalise both convolutions (taken with
the odd extension across the walls), so every mode is a scalar damped
oscillator::

    lambda^2 + g2_pq lambda + f2_pq k2_pq = 0

``k2_pq`` is ``p^2 + q^2`` for the exact Laplacian (``laplacian="spectral"``)
or the symbol of the 5-point stencil (``"fd5"``).  Modal amplitudes use the
orthonormal normalisation ``u = sum u_pq e_pq``.

Multipliers are computed from the sampled stencil: for a stencil
``beta * p_i * p_j`` on a grid of spacing ``h`` the multiplier of ``e_pq`` is
``beta * P(p) * P(q)`` with ``P(p) = sum_k p_k cos(p k h)``.  This equals the
Rayleigh quotient ``<e_pq, phi * e_pq> / <e_pq, e_pq>`` under the odd
extension; :func:`multiplier_leakage` measures how far the zero extension
used by the observer departs from it.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.fft import dstn, idstn

from .errors import AssumptionViolatedError, CFLError, InvalidArgumentError, InvalidTuningError, NumericalFailureError
from .grid import Grid, ScalarField, h1_energy
from .kernels import DiscreteKernel, KernelSpec, _pass1d, build_kernel, convolve_array

__all__ = [
    "ModalCoefficients",
    "ModeSolution",
    "PsiV",
    "Trajectory",
    "ReferenceScaling",
    "kernel_multiplier",
    "kernel_fourier_coeffs",
    "mode_eigenvalues",
    "overdamped_modes",
    "overdamped_radius",
    "modal_amplitudes",
    "modal_solution",
    "modal_solution_arrays",
    "direct_integrate_error",
    "hilbert_norm_series",
    "modal_hnorm",
    "modal_trajectory",
    "decay_horizon",
    "slowest_period",
    "tuning_heuristic",
    "mode_report_csv",
    "multiplier_leakage",
]

LAPLACIANS = ("spectral", "fd5")
MODE_CSV_HEADER = ["p", "q", "f2", "g2", "discriminant", "regime", "re_lambda", "im_lambda"]


def kernel_multiplier(k: DiscreteKernel, p: np.ndarray, spacing: float) -> np.ndarray:
    """Cosine sum ``P(p)`` of a separable stencil's profile.

    The 2-D multiplier of ``e_pq`` is ``k.scale * P(p) * P(q)``.
    """
    if not k.separable:
        raise InvalidArgumentError("multipliers are defined for separable stencils only")
    r = k.radius
    p = np.asarray(p, dtype=float)
    out = np.full(p.shape, k.profile[r])
    for j in range(1, r + 1):
        c = k.profile[r + j]
        if c != 0.0:
            out = out + 2.0 * c * np.cos(p * j * spacing)
    return out


def _symbol(k: DiscreteKernel, idx: np.ndarray, spacing: float) -> np.ndarray:
    P = kernel_multiplier(k, idx, spacing)
    return k.scale * np.multiply.outer(P, P)


def _k2(idx: np.ndarray, spacing: float, laplacian: str) -> np.ndarray:
    if laplacian == "spectral":
        s = idx * idx
    else:
        s = (4.0 / spacing**2) * np.sin(0.5 * idx * spacing) ** 2
    return np.add.outer(s, s)


@dataclass(frozen=True, eq=False)
class ModalCoefficients:
    """Per-mode coefficients for ``p, q = 1..N``; arrays are indexed ``[p - 1, q - 1]``."""

    N: int
    f2: np.ndarray
    g2: np.ndarray
    g_hbar: float
    k2: np.ndarray
    intervals: int
    laplacian: str = "spectral"
    violations: tuple = ()

    @property
    def spacing(self) -> float:
        return math.pi / self.intervals

    @property
    def discriminant(self) -> np.ndarray:
        return self.g2 * self.g2 - 4.0 * self.k2 * self.f2

    def tail_monotone(self) -> bool:
        """``g2`` non-increasing and ``f2`` non-increasing in each index over the computed range."""
        ok = True
        for a in (self.g2, self.f2):
            ok &= bool(np.all(np.diff(a, axis=0) <= 0) and np.all(np.diff(a, axis=1) <= 0))
        return ok


def kernel_fourier_coeffs(
    kernel_h: KernelSpec,
    kernel_v: KernelSpec,
    g: float,
    h_bar: float,
    N: int,
    *,
    intervals: int | None = None,
    laplacian: str = "spectral",
    validate: bool = True,
) -> ModalCoefficients:
    """Multipliers of ``phi_h`` (``g2``) and ``psi_v`` (``f2``) on a ``[0, pi]^2`` grid.

    The stencils are sampled on a grid of ``intervals`` cells per side
    (default ``N + 1``, so that modes ``1..N`` are the interior sine modes).
    With ``validate`` a non-positive ``g2`` or an ``f2`` below ``g h_bar``
    raises :class:`AssumptionViolatedError` naming the first offending mode;
    otherwise offenders are listed in ``violations``.
    """
    if int(N) != N or N < 1:
        raise InvalidArgumentError("N must be a positive integer")
    if laplacian not in LAPLACIANS:
        raise InvalidArgumentError(f"laplacian must be one of {LAPLACIANS}")
    if not (g > 0 and h_bar > 0):
        raise InvalidArgumentError("g and h_bar must be > 0")
    intervals = N + 1 if intervals is None else int(intervals)
    if intervals < 2:
        raise InvalidArgumentError("intervals must be >= 2")
    h = math.pi / intervals
    idx = np.arange(1, N + 1, dtype=float)
    g_hbar = g * h_bar
    g2 = _symbol(build_kernel(kernel_h), idx, h)
    f2 = g_hbar + h_bar * _symbol(build_kernel(kernel_v), idx, h)
    bad = [(int(p) + 1, int(q) + 1) for p, q in zip(*np.nonzero((g2 <= 0) | (f2 < g_hbar)))]
    if bad and validate:
        p, q = bad[0]
        raise AssumptionViolatedError(
            f"gain multipliers not positive at mode (p={p}, q={q}): g2={g2[p - 1, q - 1]:.6g}, "
            f"f2-g*h_bar={f2[p - 1, q - 1] - g_hbar:.6g} ({len(bad)} modes affected)",
            mode=(p, q),
        )
    return ModalCoefficients(int(N), f2, g2, g_hbar, _k2(idx, h, laplacian), intervals, laplacian, tuple(bad))


# ---------------------------------------------------------------------------
# per-mode eigenstructure

@dataclass(frozen=True)
class ModeSolution:
    p: int
    q: int
    lambda_plus: complex
    lambda_minus: complex
    regime: str
    omega: float
    A: float | None = None
    B: float | None = None


def _regime(disc: float, g4: float) -> str:
    if abs(disc) <= 8.0 * np.finfo(float).eps * max(g4, 1e-300):
        return "critical"
    return "overdamped" if disc > 0 else "oscillatory"


def _roots(g2: float, c: float):
    """Roots of ``l^2 + g2 l + c`` and the regime; ``c = f2 * k2``."""
    g4 = g2 * g2
    disc = g4 - 4.0 * c
    regime = _regime(disc, g4)
    if regime == "critical":
        lam = complex(-0.5 * g2, 0.0)
        return lam, lam, regime, 0.0, disc
    if regime == "oscillatory":
        w = 0.5 * math.sqrt(4.0 * c - g4)
        return complex(-0.5 * g2, w), complex(-0.5 * g2, -w), regime, w, disc
    s = math.sqrt(disc)
    lm = -0.5 * (g2 + s)
    # the small root through the product of the roots avoids cancellation
    lp = c / lm
    return complex(lp, 0.0), complex(lm, 0.0), regime, 0.5 * s, disc


def mode_eigenvalues(p: int, q: int, mc: ModalCoefficients) -> ModeSolution:
    if not (1 <= p <= mc.N and 1 <= q <= mc.N):
        raise InvalidArgumentError(f"mode ({p}, {q}) outside 1..{mc.N}")
    g2 = float(mc.g2[p - 1, q - 1])
    c = float(mc.f2[p - 1, q - 1] * mc.k2[p - 1, q - 1])
    lp, lm, regime, w, _ = _roots(g2, c)
    return ModeSolution(p, q, lp, lm, regime, w)


def overdamped_modes(mc: ModalCoefficients) -> list[tuple[int, int]]:
    """Modes with a non-negative discriminant (critical modes included)."""
    d = mc.discriminant
    return [(int(p) + 1, int(q) + 1) for p, q in zip(*np.nonzero(d >= 0))]


def overdamped_radius(mc: ModalCoefficients) -> float:
    """Bound on ``k2`` beyond which no mode can be overdamped: ``max(g2)^2 / (4 min f2)``."""
    return float(np.max(mc.g2)) ** 2 / (4.0 * float(np.min(mc.f2)))


def mode_report_csv(mc: ModalCoefficients) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MODE_CSV_HEADER)
    for p in range(1, mc.N + 1):
        for q in range(1, mc.N + 1):
            g2 = float(mc.g2[p - 1, q - 1])
            f2 = float(mc.f2[p - 1, q - 1])
            lp, _, regime, _, disc = _roots(g2, f2 * float(mc.k2[p - 1, q - 1]))
            w.writerow([p, q, repr(f2), repr(g2), repr(disc), regime, repr(lp.real), repr(lp.imag)])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# series solution

def _interior(a: np.ndarray) -> np.ndarray:
    return a[..., 1:-1, 1:-1]


def _check_reference_grid(grid: Grid, mc: ModalCoefficients | None = None):
    n = grid.nx - 1
    if not grid.is_square or abs(grid.dx * n - math.pi) > 1e-12 * math.pi:
        raise InvalidArgumentError("series solutions need a square grid sampling [0, pi]^2")
    if mc is not None and (mc.intervals != n or mc.N < n - 1):
        raise InvalidArgumentError(
            f"coefficients were built for {mc.intervals} intervals and N={mc.N}; grid has {n} intervals"
        )


def modal_amplitudes(u: np.ndarray, grid: Grid) -> np.ndarray:
    """Orthonormal amplitudes ``<u, e_pq>`` (discrete), indexed ``[..., q - 1, p - 1]``.

    Arrays are ``(y, x)`` ordered, so the first mode axis is ``q``.
    """
    return grid.dx * dstn(_interior(u), type=1, norm="ortho", axes=(-2, -1))


def _synthesise(c: np.ndarray, grid: Grid) -> np.ndarray:
    out = np.zeros(c.shape[:-2] + grid.shape)
    out[..., 1:-1, 1:-1] = idstn(c / grid.dx, type=1, norm="ortho", axes=(-2, -1))
    return out


def _mode_arrays(mc: ModalCoefficients, n: int):
    # (y, x) layout: [q - 1, p - 1]
    return mc.g2[:n, :n].T, mc.f2[:n, :n].T, mc.k2[:n, :n].T


def _evolve(a0: np.ndarray, a1: np.ndarray, mc: ModalCoefficients, t: float, n: int):
    g2, f2, k2 = _mode_arrays(mc, n)
    c = f2 * k2
    g4 = g2 * g2
    disc = g4 - 4.0 * c
    tol = 8.0 * np.finfo(float).eps * np.maximum(g4, 1e-300)
    crit = np.abs(disc) <= tol
    osc = (disc < 0) & ~crit
    over = (disc > 0) & ~crit
    half = 0.5 * g2
    env = np.exp(-half * t)
    drive = a1 + half * a0
    u = np.zeros(np.broadcast_shapes(a0.shape, g2.shape))
    ut = np.zeros_like(u)
    if np.any(osc):
        w = np.where(osc, 0.5 * np.sqrt(np.where(osc, -disc, 1.0)), 1.0)
        B = drive / w
        cs, sn = np.cos(w * t), np.sin(w * t)
        uu = env * (a0 * cs + B * sn)
        vv = env * ((-half) * (a0 * cs + B * sn) + w * (B * cs - a0 * sn))
        u = np.where(osc, uu, u)
        ut = np.where(osc, vv, ut)
    if np.any(over):
        w = np.where(over, 0.5 * np.sqrt(np.where(over, disc, 1.0)), 1.0)
        B = drive / w
        # exp(-half t) cosh(w t) without overflow: both exponents are <= 0
        ep = np.exp((w - half) * t)
        em = np.exp(-(w + half) * t)
        ch, sh = 0.5 * (ep + em), 0.5 * (ep - em)
        uu = a0 * ch + B * sh
        vv = (-half) * uu + w * (a0 * sh + B * ch)
        u = np.where(over, uu, u)
        ut = np.where(over, vv, ut)
    if np.any(crit):
        B = drive
        uu = env * (a0 + B * t)
        vv = env * ((-half) * (a0 + B * t) + B)
        u = np.where(crit, uu, u)
        ut = np.where(crit, vv, ut)
    return u, ut


def modal_solution_arrays(u0: np.ndarray, u1: np.ndarray, grid: Grid, mc: ModalCoefficients, t: float):
    """Series solution at time ``t`` for arrays of shape ``(..., n+1, n+1)``."""
    _check_reference_grid(grid, mc)
    u0 = np.asarray(u0, dtype=float)
    u1 = np.asarray(u1, dtype=float)
    edge = np.concatenate([u0[..., 0, :], u0[..., -1, :], u0[..., :, 0], u0[..., :, -1]], axis=-1)
    scale = max(float(np.max(np.abs(u0))), 1e-300)
    if np.max(np.abs(edge)) > 1e-12 * scale:
        raise InvalidArgumentError("u0 must vanish on the boundary (Dirichlet data)")
    n = grid.nx - 2
    a0 = modal_amplitudes(u0, grid)
    a1 = modal_amplitudes(u1, grid)
    u, ut = _evolve(a0, a1, mc, float(t), n)
    return _synthesise(u, grid), _synthesise(ut, grid)


def modal_solution(u0: ScalarField, u1: ScalarField, mc: ModalCoefficients, t: float):
    """``(u(t), u_t(t))`` from the series with the coefficients ``A_pq``, ``B_pq`` of the initial data."""
    if u0.grid != u1.grid:
        raise InvalidArgumentError("u0 and u1 live on different grids")
    u, ut = modal_solution_arrays(u0.values, u1.values, u0.grid, mc, t)
    return ScalarField(u0.grid, u), ScalarField(u0.grid, ut)


def modal_hnorm(u0: np.ndarray, u1: np.ndarray, grid: Grid, mc: ModalCoefficients, t: float) -> np.ndarray:
    """Energy norm from the modal amplitudes: ``sqrt(sum k2 |u_pq|^2 + |u_pq'|^2)``."""
    _check_reference_grid(grid, mc)
    n = grid.nx - 2
    a, at = _evolve(modal_amplitudes(u0, grid), modal_amplitudes(u1, grid), mc, float(t), n)
    k2 = _mode_arrays(mc, n)[2]
    return np.sqrt(np.sum(k2 * a * a + at * at, axis=(-2, -1)))


# ---------------------------------------------------------------------------
# direct integration (oracle)

@dataclass(frozen=True, eq=False)
class PsiV:
    """``psi_v = g_hbar * delta + kernel`` where ``kernel`` is the stencil of ``h_bar * phi_v``."""

    g_hbar: float
    kernel: DiscreteKernel

    @classmethod
    def from_specs(cls, kernel_v: KernelSpec, g: float, h_bar: float) -> "PsiV":
        k = build_kernel(kernel_v)
        return cls(g * h_bar, DiscreteKernel(k.radius, h_bar * k.weights, h_bar * k.scale, k.profile))


@dataclass(frozen=True, eq=False)
class Trajectory:
    grid: Grid
    times: np.ndarray
    u: np.ndarray
    ut: np.ndarray


def _lap_dirichlet(u: np.ndarray, grid: Grid, laplacian: str) -> np.ndarray:
    out = np.zeros_like(u)
    if laplacian == "spectral":
        n = grid.nx - 2
        idx = np.arange(1, n + 1, dtype=float)
        k2 = np.add.outer(idx * idx, idx * idx)
        c = dstn(_interior(u), type=1, norm="ortho", axes=(-2, -1))
        out[..., 1:-1, 1:-1] = idstn(-k2 * c, type=1, norm="ortho", axes=(-2, -1))
        return out
    h2 = grid.dx * grid.dx
    out[..., 1:-1, 1:-1] = (
        (u[..., 1:-1, 2:] - 2.0 * u[..., 1:-1, 1:-1] + u[..., 1:-1, :-2])
        + (u[..., 2:, 1:-1] - 2.0 * u[..., 1:-1, 1:-1] + u[..., :-2, 1:-1])
    ) / h2
    return out


def _odd_conv(k: DiscreteKernel, a: np.ndarray, scale: float | None = None) -> np.ndarray:
    if k.separable:
        # one pass order is enough here (no bit-exact symmetry requirement)
        p = k.profile
        out = (k.scale if scale is None else scale) * _pass1d(_pass1d(a, p, -1, "odd"), p, -2, "odd")
    else:
        out = convolve_array(k, a, "odd")
    out[..., 0, :] = out[..., -1, :] = 0.0
    out[..., :, 0] = out[..., :, -1] = 0.0
    return out


def _energy(u: np.ndarray, w: np.ndarray, h: float) -> np.ndarray:
    """Squared energy norm up to the factor ``h^2``."""
    gx = np.diff(u, axis=-1)
    gy = np.diff(u, axis=-2)
    hw = h * w
    return np.sum(gx * gx, axis=(-2, -1)) + np.sum(gy * gy, axis=(-2, -1)) + np.sum(hw * hw, axis=(-2, -1))


def direct_integrate_error(
    u0,
    u1,
    kernel_h: DiscreteKernel,
    psi_v: PsiV,
    T: float,
    dt: float,
    *,
    grid: Grid | None = None,
    times=None,
    laplacian: str = "spectral",
    force: bool = False,
) -> Trajectory:
    """RK4 integration of ``u_tt = psi_v * lap(u) - phi_h * u_t`` with ``u = 0`` on the walls.

    ``u0``/``u1`` are fields or arrays ``(..., n+1, n+1)`` (leading axes are
    independent initial conditions).  Convolutions use the odd extension.
    The trajectory holds the initial state and the states at ``times``
    (default: ``T`` only), each rounded to the nearest step.
    """
    if isinstance(u0, ScalarField):
        grid = u0.grid
        u0 = u0.values
        u1 = u1.values if isinstance(u1, ScalarField) else u1
    if grid is None:
        raise InvalidArgumentError("grid is required for array input")
    if laplacian not in LAPLACIANS:
        raise InvalidArgumentError(f"laplacian must be one of {LAPLACIANS}")
    if not (dt > 0 and T >= 0):
        raise InvalidArgumentError("need dt > 0 and T >= 0")
    _check_reference_grid(grid)
    u = np.array(u0, dtype=float)
    w = np.array(u1, dtype=float)
    for a in (u, w):
        a[..., 0, :] = a[..., -1, :] = 0.0
        a[..., :, 0] = a[..., :, -1] = 0.0

    # Courant check on the fastest mode
    n = grid.nx - 2
    if laplacian == "spectral":
        k2max = 2.0 * n * n
    else:
        k2max = 8.0 / grid.dx**2
    c2 = psi_v.g_hbar + max(float(np.sum(psi_v.kernel.weights)), 0.0)
    speed = math.sqrt(c2 * k2max) + float(np.sum(np.abs(kernel_h.weights)))
    if speed * dt > 2.5 and not force:
        raise CFLError(f"dt={dt:.3g} too large for the fastest mode (|lambda| dt = {speed * dt:.3g} > 2.5)")

    nsteps = int(round(T / dt))
    want = [T] if times is None else sorted(float(t) for t in times)
    marks = {}
    for t in want:
        s = int(round(t / dt))
        if s > nsteps or s < 0:
            raise InvalidArgumentError(f"sample time {t} outside [0, T]")
        marks.setdefault(s, t)

    kv = psi_v.kernel
    shared = kv.separable and kernel_h.separable and np.array_equal(kv.profile, kernel_h.profile)

    def rhs(uu, ww):
        lap = _lap_dirichlet(uu, grid, laplacian)
        if shared:
            # equal profiles: both convolutions in one pass
            corr = _odd_conv(kv, kv.scale * lap - kernel_h.scale * ww, 1.0)
        else:
            corr = _odd_conv(kv, lap) - _odd_conv(kernel_h, ww)
        return ww, psi_v.g_hbar * lap + corr

    e0 = np.maximum(_energy(u, w, grid.dx), 1e-300)
    ts, us, uts = [0.0], [u.copy()], [w.copy()]
    for step in range(1, nsteps + 1):
        k1u, k1w = rhs(u, w)
        k2u, k2w = rhs(u + 0.5 * dt * k1u, w + 0.5 * dt * k1w)
        k3u, k3w = rhs(u + 0.5 * dt * k2u, w + 0.5 * dt * k2w)
        k4u, k4w = rhs(u + dt * k3u, w + dt * k3w)
        u = u + (dt / 6.0) * ((k1u + 2.0 * k2u) + (2.0 * k3u + k4u))
        w = w + (dt / 6.0) * ((k1w + 2.0 * k2w) + (2.0 * k3w + k4w))
        if step % 50 == 0 or step in marks or step == nsteps:
            e = _energy(u, w, grid.dx)
            if not np.all(np.isfinite(e)) or np.any(e > 100.0 * e0):
                raise NumericalFailureError(f"direct integration unstable at step {step} (norm grew > 10x)")
        if step in marks:
            ts.append(step * dt)
            us.append(u.copy())
            uts.append(w.copy())
    return Trajectory(grid, np.asarray(ts), np.stack(us), np.stack(uts))


def modal_trajectory(u0: np.ndarray, u1: np.ndarray, grid: Grid, mc: ModalCoefficients, times) -> Trajectory:
    """Series solution sampled at ``times`` (the initial state is included when ``0`` is listed)."""
    ts = np.asarray(sorted(float(t) for t in times))
    us, uts = zip(*(modal_solution_arrays(u0, u1, grid, mc, t) for t in ts))
    return Trajectory(grid, ts, np.stack(us), np.stack(uts))


def decay_horizon(mc: ModalCoefficients, excited: np.ndarray, ratio: float = 1e-3) -> float:
    """Time after which every excited mode has decayed below ``ratio`` of its initial energy norm.

    ``excited`` is a boolean mask indexed like ``mc.g2``.  The slowest
    envelope is ``exp(-min(g2) t / 2)``; the factor 2 covers the bounded
    transfer between the ``u`` and ``u_t`` parts of an oscillatory mode.
    """
    if not np.any(excited):
        return 0.0
    gamma = 0.5 * float(np.min(mc.g2[excited]))
    return math.log(2.0 / ratio) / gamma


def slowest_period(mc: ModalCoefficients, excited: np.ndarray) -> float:
    """Period ``2 pi / omega`` of the slowest oscillatory excited mode."""
    d = mc.discriminant
    osc = excited & (d < 0)
    if not np.any(osc):
        raise InvalidArgumentError("no oscillatory mode is excited")
    w = 0.5 * np.sqrt(-d[osc])
    return 2.0 * math.pi / float(np.min(w))


def hilbert_norm_series(traj: Trajectory) -> np.ndarray:
    """:func:`~swnudge.grid.h1_energy` of each sample; shape ``(n_samples, *batch)``."""
    g = traj.grid
    flat_u = traj.u.reshape((-1,) + g.shape)
    flat_w = traj.ut.reshape((-1,) + g.shape)
    vals = [h1_energy(ScalarField(g, a), ScalarField(g, b)) for a, b in zip(flat_u, flat_w)]
    return np.asarray(vals).reshape(traj.u.shape[:-2])


# ---------------------------------------------------------------------------
# gain design and conventions

def tuning_heuristic(L0: float, omega0: float, xi0: float, g: float, h_bar: float) -> tuple[float, float]:
    """``(beta_v, beta_h)`` from ``h_bar beta_v = (L0 omega0)^2 - g h_bar`` and ``beta_h = 2 xi0 omega0``."""
    if not (g > 0 and h_bar > 0):
        raise InvalidTuningError("g and h_bar must be > 0")
    if xi0 < 0 or omega0 < 0 or L0 < 0:
        raise InvalidTuningError("L0, omega0 and xi0 must be >= 0")
    c2 = (L0 * omega0) ** 2
    gh = g * h_bar
    if c2 < gh * (1.0 - 1e-12):
        raise InvalidTuningError(f"(L0 omega0)^2 = {c2:.6g} is below g h_bar = {gh:.6g}")
    return max(c2 - gh, 0.0) / h_bar, 2.0 * xi0 * omega0


@dataclass(frozen=True)
class ReferenceScaling:
    """Map from the physical basin to the reference square ``[0, pi]^2``.

    Lengths scale by ``ell = L / pi`` and times by ``tau = ell / sqrt(g h_bar)``,
    so the reference problem has ``g h_bar = 1``.  Stencils are rescaled so
    that a reference cell covers the same physical distance and each kernel
    keeps its physical mass (its long-wave multiplier).
    """

    L: float = 2.0e6
    physical_intervals: int = 80
    g: float = 0.02
    h_bar: float = 500.0
    intervals: int = 64
    dt: float = 1800.0

    @property
    def ell(self) -> float:
        return self.L / math.pi

    @property
    def tau(self) -> float:
        return self.ell / math.sqrt(self.g * self.h_bar)

    @property
    def dt_ref(self) -> float:
        return self.dt / self.tau

    @property
    def cell_ratio(self) -> float:
        """Physical cells per reference cell."""
        return self.physical_intervals / self.intervals

    def alpha_ref(self, alpha: float) -> float:
        return alpha * self.cell_ratio**2

    def _mass_ratio(self, spec: KernelSpec, ref: KernelSpec) -> float:
        if spec.shape == "dirac":
            return 1.0
        r = spec.truncation_radius
        k = np.arange(-r, r + 1, dtype=float)
        m_phys = float(np.sum(np.exp(-spec.alpha * k * k))) ** 2
        m_ref = float(np.sum(np.exp(-ref.alpha * k * k))) ** 2
        return m_phys / m_ref

    def _map(self, spec: KernelSpec, factor: float) -> KernelSpec:
        if spec.shape == "dirac":
            return KernelSpec.dirac(spec.K * factor)
        ref = KernelSpec.gaussian(self.alpha_ref(spec.alpha), 1.0, spec.truncation_radius)
        beta = spec.beta * factor * self._mass_ratio(spec, ref)
        return KernelSpec.gaussian(ref.alpha, beta, spec.truncation_radius)

    def kernel_h(self, spec: KernelSpec) -> KernelSpec:
        """``phi_h`` is a rate: multiply by ``tau``."""
        return self._map(spec, self.tau)

    def kernel_v(self, spec: KernelSpec) -> KernelSpec:
        """``h_bar phi_v`` enters beside ``g h_bar``: divide by ``g`` (reference ``g = h_bar = 1``)."""
        return self._map(spec, 1.0 / self.g)

    def grid(self) -> Grid:
        return Grid.unit_pi(self.intervals)

    def coefficients(self, kernel_h: KernelSpec, kernel_v: KernelSpec, *, laplacian="spectral", validate=True):
        return kernel_fourier_coeffs(
            self.kernel_h(kernel_h), self.kernel_v(kernel_v), 1.0, 1.0, self.intervals - 1,
            intervals=self.intervals, laplacian=laplacian, validate=validate,
        )


# ---------------------------------------------------------------------------
# diagonality check

def multiplier_leakage(spec: KernelSpec, intervals: int, p: int, q: int, boundary: str = "zero") -> dict:
    """Apply the stencil to ``e_pq`` and project back on the sine basis.

    Returns the diagonal multiplier, the predicted cosine-sum multiplier and
    the relative size of the off-diagonal part, both over the whole grid and
    over nodes farther than the stencil radius from the walls.
    """
    grid = Grid.unit_pi(intervals)
    k = build_kernel(spec)
    X, Y = grid.mesh()
    e = (2.0 / math.pi) * np.sin(p * X) * np.sin(q * Y)
    e[0, :] = e[-1, :] = e[:, 0] = e[:, -1] = 0.0
    ke = convolve_array(k, e, boundary)
    ke[0, :] = ke[-1, :] = ke[:, 0] = ke[:, -1] = 0.0
    amps = modal_amplitudes(ke, grid)
    diag = float(amps[q - 1, p - 1]) / float(modal_amplitudes(e, grid)[q - 1, p - 1])
    off = amps.copy()
    off[q - 1, p - 1] = 0.0
    pred = float(_symbol(k, np.array([float(p), float(q)]), grid.dx)[0, 1]) if k.separable else float("nan")
    r = k.radius
    resid = ke - (pred if k.separable else diag) * e
    inner = resid[r + 1:-r - 1, r + 1:-r - 1] if grid.nx > 2 * r + 3 else resid[:0, :0]
    ref = float(np.sqrt(np.sum((diag * e) ** 2)))
    return {
        "multiplier": diag,
        "predicted": pred,
        "leakage": float(np.sqrt(np.sum(off * off))) / max(abs(diag) * 1.0, 1e-300),
        "interior_leakage": float(np.sqrt(np.sum(inner * inner))) / max(ref, 1e-300),
    }
