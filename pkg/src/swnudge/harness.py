"""Twin experiments: synthetic truth, noisy height observations, observer runs and rate fits."""
from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .dynamics import CFL_LIMIT, FlowState, Model, ModelParams, courant_number, step_rk4
from .errors import AbortedRunError, CFLError, InvalidArgumentError, StateInvalidError, UndefinedMetricError
from .grid import Grid, ScalarField, VectorField, read_snapshot
from .observer import Observer, ObserverConfig, ObserverState

log = logging.getLogger(__name__)

__all__ = [
    "InitSpec",
    "TwinConfig",
    "ErrorSeries",
    "RateFit",
    "TwinResult",
    "Variation",
    "SweepRow",
    "generate_truth",
    "observe",
    "relative_error",
    "run_twin",
    "fit_rates",
    "sweep",
]

DEFAULT_MODES = ((1, 1), (2, 1), (1, 2))

# How the observed wall heights enter the observer:
#   "free"       wall cells of h_hat evolve under the observer dynamics
#   "overwrite"  as "free", then h_hat <- h_obs on the walls after each step
#   "prescribed" wall cells follow the observed tendency inside every stage,
#                plus the overwrite after each step
BOUNDARY_MODES = ("free", "overwrite", "prescribed")


@dataclass(frozen=True)
class InitSpec:
    """Truth initial state.

    ``kind`` is one of ``"low_mode"`` (basin modes added to the equilibrium),
    ``"spinup"`` (``steps`` wind-driven steps from rest), ``"from_snapshot"``
    (SWF1 files ``path`` for h, optional ``path_vx``/``path_vy``) or
    ``"equilibrium"``.
    """

    kind: str = "low_mode"
    amplitude_h: float = 2.0
    amplitude_v: float = 0.008
    modes: tuple = DEFAULT_MODES
    steps: int = 17520
    path: str | None = None
    path_vx: str | None = None
    path_vy: str | None = None

    def __post_init__(self):
        if self.kind not in ("low_mode", "spinup", "from_snapshot", "equilibrium"):
            raise InvalidArgumentError(f"unknown init kind {self.kind!r}")
        if self.amplitude_h < 0 or self.amplitude_v < 0:
            raise InvalidArgumentError("init amplitudes must be >= 0")
        object.__setattr__(self, "modes", tuple(tuple(int(c) for c in m) for m in self.modes))


@dataclass(frozen=True)
class TwinConfig:
    model: str = "simplified"
    grid: Grid = field(default_factory=lambda: Grid.square(81, 25000.0))
    dt: float = 1800.0
    n_steps: int = 5760
    params: ModelParams = field(default_factory=lambda: ModelParams(tau_max=0.0))
    observer: ObserverConfig = field(default_factory=ObserverConfig)
    noise_fraction: float = 0.0
    rng_seed: int = 0
    truth_init: InitSpec = field(default_factory=InitSpec)
    snapshot_every: int = 0
    force: bool = False
    boundary: str = "free"
    estimate_init: str = "equilibrium"

    def __post_init__(self):
        if self.estimate_init not in ("equilibrium", "truth"):
            raise InvalidArgumentError(f"estimate_init must be 'equilibrium' or 'truth', got {self.estimate_init!r}")
        if self.boundary not in BOUNDARY_MODES:
            raise InvalidArgumentError(f"boundary must be one of {BOUNDARY_MODES}, got {self.boundary!r}")
        if self.n_steps < 1:
            raise InvalidArgumentError("n_steps must be >= 1")
        if self.noise_fraction < 0:
            raise InvalidArgumentError("noise_fraction must be >= 0")
        if not self.dt > 0:
            raise InvalidArgumentError("dt must be > 0")
        if self.observer.model != self.model:
            object.__setattr__(self, "observer", replace(self.observer, model=self.model))

    def with_gains(self, alpha: float, beta_h: float, beta_v: float | None = None) -> "TwinConfig":
        r = self.observer.kernel_h.truncation_radius
        obs = ObserverConfig.gaussian(alpha, beta_h, beta_v, radius=r, model=self.model,
                                      extension=self.observer.extension)
        return replace(self, observer=obs)


@dataclass
class ErrorSeries:
    steps: np.ndarray
    times: np.ndarray
    e_h: np.ndarray
    e_vx: np.ndarray
    e_vy: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "time_s", "e_h", "e_vx", "e_vy"])
        for row in zip(self.steps, self.times, self.e_h, self.e_vx, self.e_vy):
            w.writerow([int(row[0])] + [repr(float(x)) for x in row[1:]])
        return buf.getvalue()


@dataclass
class RateFit:
    c_h: float
    c_vx: float
    c_vy: float
    plateau_h: float
    plateau_vx: float
    plateau_vy: float
    fit_r2: dict
    status: dict

    def reliable(self, var: str) -> bool:
        return self.status[var] == "ok"


@dataclass
class TwinResult:
    series: ErrorSeries
    snapshots: list = field(default_factory=list)
    final_truth: FlowState | None = None
    final_estimate: ObserverState | None = None


# ---------------------------------------------------------------------------
# truth

def low_mode_arrays(grid: Grid, init: InitSpec):
    """Smooth basin perturbation built from wall-compatible standing modes.

    Mode ``m`` of the list enters with phase ``m * pi / 2``: a height pattern
    ``cos(p pi x / Lx) cos(q pi y / Ly)`` weighted by ``cos(phase)`` and the
    matching velocity ``(kx/k sin cos, ky/k cos sin)`` weighted by
    ``sin(phase)``.  With the default list the degenerate pair (2,1), (1,2)
    is in quadrature, i.e. a rotating wave, so ``||h - h_bar||`` never comes
    close to zero and relative errors stay well conditioned.  Both fields
    are scaled so their peak magnitudes are ``amplitude_h`` and ``amplitude_v``.
    """
    X, Y = grid.mesh()
    Lx, Ly = grid.Lx, grid.Ly
    dh = np.zeros(grid.shape)
    vx = np.zeros(grid.shape)
    vy = np.zeros(grid.shape)
    for m, (p, q) in enumerate(init.modes):
        kx, ky = p * np.pi / Lx, q * np.pi / Ly
        k = math.hypot(kx, ky)
        wh, wv = round(math.cos(m * math.pi / 2)), round(math.sin(m * math.pi / 2))
        cx, sx = np.cos(kx * X), np.sin(kx * X)
        cy, sy = np.cos(ky * Y), np.sin(ky * Y)
        dh += wh * (cx * cy)
        if k > 0:
            vx += wv * ((kx / k) * sx * cy)
            vy += wv * ((ky / k) * cx * sy)
    hmax = float(np.abs(dh).max())
    vmax = max(float(np.abs(vx).max()), float(np.abs(vy).max()))
    sh = init.amplitude_h / hmax if hmax > 0 else 0.0
    sv = init.amplitude_v / vmax if vmax > 0 else 0.0
    return sh * dh, sv * vx, sv * vy


@lru_cache(maxsize=4)
def _spinup(grid: Grid, params: ModelParams, dt: float, steps: int, force: bool):
    model = Model("nonlinear", grid, params)
    y = model.equilibrium()
    for n in range(steps):
        try:
            y = model.step(y, dt, force=force)
        except StateInvalidError as exc:
            raise AbortedRunError(f"spin-up failed at step {n + 1}: {exc}", n + 1, "truth") from exc
    return model.to_arrays(y)


def initial_truth(cfg: TwinConfig) -> FlowState:
    g, p, init = cfg.grid, cfg.params, cfg.truth_init
    if init.kind == "equilibrium":
        h = np.full(g.shape, p.h_bar)
        return FlowState(ScalarField(g, h), VectorField.zeros(g))
    if init.kind == "low_mode":
        dh, vx, vy = low_mode_arrays(g, init)
        return FlowState(ScalarField(g, p.h_bar + dh), VectorField(g, vx, vy))
    if init.kind == "spinup":
        h, vx, vy = _spinup(g, p, cfg.dt, init.steps, cfg.force)
        return FlowState(ScalarField(g, h.copy()), VectorField(g, vx.copy(), vy.copy()))
    h = read_snapshot(init.path)
    if h.grid != g:
        raise InvalidArgumentError(f"snapshot grid {h.grid} does not match {g}")
    vx = read_snapshot(init.path_vx).values if init.path_vx else np.zeros(g.shape)
    vy = read_snapshot(init.path_vy).values if init.path_vy else np.zeros(g.shape)
    return FlowState(h, VectorField(g, vx, vy))


def _check_cfl(cfg: TwinConfig, model: Model):
    c = courant_number(cfg.grid, model.params, cfg.dt)
    if c > CFL_LIMIT and not cfg.force:
        raise CFLError(f"Courant number {c:.3g} exceeds {CFL_LIMIT}; set force to override")


def _sane(y, model: Model) -> bool:
    h = model.to_arrays(y)[0]
    hb = model.params.h_bar
    if not all(np.all(np.isfinite(a)) for a in y):
        return False
    return bool(h.min() > 0 and h.max() < 2.0 * hb)


def generate_truth(cfg: TwinConfig) -> list[FlowState]:
    """Integrate the truth; returns the states at step 0, every ``snapshot_every`` steps, and the last step."""
    model = Model(cfg.model, cfg.grid, cfg.params)
    _check_cfl(cfg, model)
    y = model.from_state(initial_truth(cfg))
    out = [model.to_state(y, 0.0)]
    for n in range(1, cfg.n_steps + 1):
        try:
            y = step_rk4(y, model.rhs, cfg.dt, force=True)
        except StateInvalidError as exc:
            raise AbortedRunError(f"truth failed at step {n}: {exc}", n, "truth") from exc
        if not _sane(y, model):
            raise AbortedRunError(f"truth diverged at step {n}", n, "truth")
        if (cfg.snapshot_every and n % cfg.snapshot_every == 0) or n == cfg.n_steps:
            out.append(model.to_state(y, n * cfg.dt))
    return out


# ---------------------------------------------------------------------------
# observations and metrics

def noise_std(h: np.ndarray, noise_fraction: float, h_bar: float) -> float:
    """``noise_fraction`` times the spatial standard deviation of ``h - h_bar``."""
    return noise_fraction * float(np.std(h - h_bar))


def observe(h: ScalarField, noise_fraction: float, rng: np.random.Generator, h_bar: float = 500.0) -> ScalarField:
    """Add i.i.d. Gaussian noise scaled to the instantaneous spatial spread of ``h``."""
    if noise_fraction < 0:
        raise InvalidArgumentError("noise_fraction must be >= 0")
    if noise_fraction == 0:
        return h
    s = noise_std(h.values, noise_fraction, h_bar)
    return ScalarField(h.grid, h.values + s * rng.standard_normal(h.grid.shape))


def _rel(num: np.ndarray, den: np.ndarray, name: str) -> float:
    d = float(np.sqrt(np.sum(den * den)))
    if d == 0:
        raise UndefinedMetricError(f"{name}: truth equals equilibrium, relative error undefined")
    return float(np.sqrt(np.sum(num * num))) / d


def relative_errors_arrays(truth, est, h_bar: float):
    """``(e_h, e_vx, e_vy)`` from full ``(h, u, v)`` arrays."""
    h, vx, vy = truth
    hh, hvx, hvy = est
    return (
        _rel((hh - h_bar) - (h - h_bar), h - h_bar, "e_h"),
        _rel(hvx - vx, vx, "e_vx"),
        _rel(hvy - vy, vy, "e_vy"),
    )


def relative_error(truth: FlowState, est: ObserverState, h_bar: float = 500.0):
    return relative_errors_arrays(
        (truth.h.values, truth.v.x, truth.v.y), (est.h_hat.values, est.v_hat.x, est.v_hat.y), h_bar
    )


# ---------------------------------------------------------------------------
# twin run

def run_twin(cfg: TwinConfig, record_every: int = 1) -> TwinResult:
    """Co-integrate truth and observer.

    Both systems advance inside one RK4 step so every stage of the observer
    sees the matching truth stage.  The observation noise drawn for time
    ``t_n`` is held during step ``n``; a fresh draw is made at ``t_{n+1}``.
    ``cfg.boundary`` selects how the wall observations are used (see
    ``BOUNDARY_MODES``).
    """
    model = Model(cfg.model, cfg.grid, cfg.params)
    _check_cfl(cfg, model)
    obs = Observer(model, cfg.observer)
    hb = model.params.h_bar
    rng = np.random.default_rng(cfg.rng_seed)

    yt = model.from_state(initial_truth(cfg))
    yo = tuple(a.copy() for a in (yt if cfg.estimate_init == "truth" else model.equilibrium()))

    def draw(h_t):
        if cfg.noise_fraction == 0:
            return None
        full = model.to_arrays(h_t)[0]
        return noise_std(full, cfg.noise_fraction, hb) * rng.standard_normal(cfg.grid.shape)

    steps, e_h, e_vx, e_vy = [], [], [], []
    snaps = []

    def record(n):
        errs = relative_errors_arrays(model.to_arrays(yt), model.to_arrays(yo), hb)
        steps.append(n)
        e_h.append(errs[0])
        e_vx.append(errs[1])
        e_vy.append(errs[2])

    def snapshot(n):
        snaps.append((n, model.to_state(yt, n * cfg.dt), _obs_state(model, yo, n * cfg.dt)))

    record(0)
    if cfg.snapshot_every:
        snapshot(0)
    eps = draw(yt)
    nt = len(yt)
    prescribed = cfg.boundary == "prescribed"
    for n in range(1, cfg.n_steps + 1):
        def rhs(Y, eps=eps):
            a, b = Y[:nt], Y[nt:]
            try:
                kt = model.rhs(a)
            except StateInvalidError as exc:
                raise AbortedRunError(f"truth failed at step {n}: {exc}", n, "truth") from exc
            h_obs = a[0] if eps is None else a[0] + eps
            try:
                ko = obs.rhs(b, h_obs, kt[0] if prescribed else None)
            except StateInvalidError as exc:
                raise AbortedRunError(f"observer failed at step {n}: {exc}", n, "observer") from exc
            return tuple(kt) + tuple(ko)

        Y = step_rk4(yt + yo, rhs, cfg.dt, force=True)
        yt, yo = Y[:nt], Y[nt:]
        if not _sane(yt, model):
            raise AbortedRunError(f"truth diverged at step {n}", n, "truth")
        if not _sane(yo, model):
            raise AbortedRunError(f"observer diverged at step {n}", n, "observer")
        eps = draw(yt)
        if cfg.boundary != "free":
            h_obs = yt[0] if eps is None else yt[0] + eps
            yo = Observer.enforce_boundary_arrays(yo, h_obs)
        if n % record_every == 0 or n == cfg.n_steps:
            record(n)
        if cfg.snapshot_every and (n % cfg.snapshot_every == 0 or n == cfg.n_steps):
            snapshot(n)

    steps = np.asarray(steps)
    series = ErrorSeries(steps, steps * cfg.dt, np.asarray(e_h), np.asarray(e_vx), np.asarray(e_vy))
    t_end = cfg.n_steps * cfg.dt
    return TwinResult(series, snaps, model.to_state(yt, t_end), _obs_state(model, yo, t_end))


def _obs_state(model: Model, y, t: float) -> ObserverState:
    h, vx, vy = model.to_arrays(y)
    g = model.grid
    return ObserverState(ScalarField(g, h), VectorField(g, vx, vy), t)


# ---------------------------------------------------------------------------
# rate fits

TAIL_FRACTION = 0.1
WINDOW_FACTOR = 5.0
MIN_R2 = 0.9


def _fit_one(t: np.ndarray, e: np.ndarray):
    n_tail = max(1, int(math.ceil(TAIL_FRACTION * e.size)))
    plateau = float(np.mean(e[-n_tail:]))
    mask = (e > WINDOW_FACTOR * plateau) & (e > 0)
    if mask.sum() < 2:
        return 0.0, plateau, float("nan"), "no-decay"
    tw, lw = t[mask], np.log(e[mask])
    slope, icpt = np.polyfit(tw, lw, 1)
    pred = slope * tw + icpt
    ss_res = float(np.sum((lw - pred) ** 2))
    ss_tot = float(np.sum((lw - lw.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    c = -float(slope)
    if c <= 0:
        return 0.0, plateau, r2, "no-decay"
    return c, plateau, r2, ("ok" if r2 >= MIN_R2 else "unreliable")


def fit_rates(series: ErrorSeries) -> RateFit:
    """Exponential decay rates (1/s) and residual plateaus of the three error curves.

    The plateau is the mean of the last 10% of samples; the rate is a least-squares
    fit of ``log e`` against time over the samples above five times the plateau.
    """
    if series.times.size < 10:
        raise InvalidArgumentError("need at least 10 samples to fit rates")
    res = {}
    for var in ("h", "vx", "vy"):
        res[var] = _fit_one(series.times, getattr(series, f"e_{var}"))
    return RateFit(
        c_h=res["h"][0], c_vx=res["vx"][0], c_vy=res["vy"][0],
        plateau_h=res["h"][1], plateau_vx=res["vx"][1], plateau_vy=res["vy"][1],
        fit_r2={k: v[2] for k, v in res.items()},
        status={k: v[3] for k, v in res.items()},
    )


# ---------------------------------------------------------------------------
# sweeps

@dataclass(frozen=True)
class Variation:
    alpha: float
    beta_h: float
    noise_fraction: float = 0.0
    dt: float | None = None


@dataclass
class SweepRow:
    alpha: float
    beta_h: float
    noise_fraction: float
    fit: RateFit | None
    status: str
    series: ErrorSeries | None = None

    HEADER = ("alpha", "beta_h", "noise_fraction", "c_h", "c_vx", "c_vy",
              "plateau_h", "plateau_vx", "plateau_vy", "r2_h", "status")

    def cells(self) -> list[str]:
        f = self.fit
        nums = [f.c_h, f.c_vx, f.c_vy, f.plateau_h, f.plateau_vx, f.plateau_vy, f.fit_r2["h"]] if f else [float("nan")] * 7
        return [repr(float(x)) for x in (self.alpha, self.beta_h, self.noise_fraction, *nums)] + [self.status]


def variation_config(base: TwinConfig, v: Variation) -> TwinConfig:
    ratio = base.observer.kernel_v.weight / base.observer.kernel_h.weight if base.observer.kernel_h.weight else 0.1
    cfg = base.with_gains(v.alpha, v.beta_h, ratio * v.beta_h)
    cfg = replace(cfg, noise_fraction=v.noise_fraction)
    if v.dt is not None:
        cfg = replace(cfg, dt=v.dt)
    return cfg


def _run_row(args) -> SweepRow:
    base, v = args
    try:
        res = run_twin(variation_config(base, v))
        return SweepRow(v.alpha, v.beta_h, v.noise_fraction, fit_rates(res.series), "ok", res.series)
    except AbortedRunError as exc:
        return SweepRow(v.alpha, v.beta_h, v.noise_fraction, None, f"unstable:step={exc.step}")
    except CFLError:
        # refused before the first step
        return SweepRow(v.alpha, v.beta_h, v.noise_fraction, None, "unstable:step=0")
    except Exception as exc:  # row failures must not stop the sweep
        msg = str(exc).replace(",", ";").replace("\n", " ")
        return SweepRow(v.alpha, v.beta_h, v.noise_fraction, None, f"error:{type(exc).__name__}:{msg}")


def sweep(base: TwinConfig, variations: list, jobs: int = 1) -> list[SweepRow]:
    """Run every variation; rows come back in input order whatever ``jobs`` is."""
    if not variations:
        raise InvalidArgumentError("sweep needs at least one variation")
    tasks = [(base, v) for v in variations]
    if jobs <= 1 or len(tasks) == 1:
        return [_run_row(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(_run_row, tasks))


def sweep_csv(rows: list[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SweepRow.HEADER)
    for r in rows:
        w.writerow(r.cells())
    return buf.getvalue()
