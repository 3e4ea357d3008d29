"""``swnudge`` command line: run | sweep | spectral | invariance.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 violated modelling assumption (non-positive gain coefficient),
4 violated invariant.  ``SWNUDGE_LOG`` (quiet, info, debug) sets the
verbosity of diagnostics on standard error; results go to files and
standard output only.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import numpy as np
from scipy.fft import idstn

from .config import Config, load_config
from .dynamics import FlowState, Model, ModelParams, step_rk4
from .errors import (
    AssumptionViolatedError,
    CFLError,
    ConfigError,
    InvalidArgumentError,
    InvalidGridError,
    NumericalFailureError,
    StateInvalidError,
    SwnudgeError,
)
from .grid import Grid, ScalarField, VectorField, h1_energy, rot90_array, rotate90, shift_array, write_snapshot
from .harness import fit_rates, run_twin, sweep, sweep_csv
from .kernels import DiscreteKernel, build_kernel, convolve_array
from .observer import Observer, ObserverConfig, correction_h, correction_v
from .spectral import (
    ReferenceScaling,
    PsiV,
    direct_integrate_error,
    modal_solution_arrays,
    mode_report_csv,
    overdamped_modes,
    overdamped_radius,
)

log = logging.getLogger("swnudge")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_ASSUMPTION, EXIT_INVARIANT = 0, 1, 2, 3, 4
LOG_LEVELS = {"quiet": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _setup_logging() -> None:
    level = os.environ.get("SWNUDGE_LOG", "quiet").strip().lower()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("swnudge: %(levelname)s: %(message)s"))
    root = logging.getLogger("swnudge")
    root.handlers[:] = [handler]
    root.setLevel(LOG_LEVELS.get(level, logging.ERROR))
    root.propagate = False


class _Manifest:
    def __init__(self, out: Path, cfg: Config, command: str):
        self.out = out
        self.data = {
            "command": command,
            "config_hash": cfg.hash(),
            "config": json.loads(cfg.canonical_json()),
            "tool_version": _version(),
            "started": datetime.now(timezone.utc).isoformat(),
            "finished": None,
            "outputs": [],
        }

    def write_text(self, name: str, text: str) -> Path:
        p = self.out / name
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        self.data["outputs"].append(name)
        return p

    def add(self, name: str) -> None:
        self.data["outputs"].append(name)

    def close(self, status: int) -> None:
        self.data["finished"] = datetime.now(timezone.utc).isoformat()
        self.data["exit_status"] = status
        self.data["outputs"] = sorted(self.data["outputs"])
        with open(self.out / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.data, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _out_dir(path: str | None) -> Path:
    out = Path(path or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# run

def cmd_run(cfg: Config, out: Path) -> int:
    man = _Manifest(out, cfg, "run")
    tw = cfg.twin()
    run_id = cfg["run"]["run_id"]
    log.info("run %s: %s model, %d steps, dt=%g s", run_id, tw.model, tw.n_steps, tw.dt)
    t0 = time.perf_counter()
    try:
        res = run_twin(tw, record_every=cfg["run"]["record_every"])
    except NumericalFailureError:
        man.close(EXIT_NUMERICAL)
        raise
    log.info("run finished in %.1f s", time.perf_counter() - t0)
    man.write_text("errors.csv", res.series.to_csv())
    for n, truth, est in res.snapshots:
        for var, arr in (("h", truth.h.values), ("vx", truth.v.x), ("vy", truth.v.y),
                         ("hhat", est.h_hat.values), ("vxhat", est.v_hat.x), ("vyhat", est.v_hat.y)):
            name = f"{run_id}_{var}_{n}.swf"
            write_snapshot(out / name, ScalarField(truth.h.grid, arr))
            man.add(name)
    fit = fit_rates(res.series)
    for var in ("h", "vx", "vy"):
        print(
            f"{var}: rate {getattr(fit, 'c_' + var):.6g} 1/s  plateau {getattr(fit, 'plateau_' + var):.6g}  "
            f"r2 {fit.fit_r2[var]:.4f}  [{fit.status[var]}]"
        )
    man.close(EXIT_OK)
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep

def cmd_sweep(cfg: Config, out: Path, jobs: int) -> int:
    variations = cfg.variations()
    if not variations:
        raise ConfigError("[sweep] defines no variations")
    man = _Manifest(out, cfg, "sweep")
    base = cfg.twin()
    log.info("sweep: %d rows, %d job(s)", len(variations), jobs)
    rows = sweep(base, variations, jobs=jobs)
    man.write_text("sweep.csv", sweep_csv(rows))
    for r in rows:
        c = r.fit.c_h if r.fit else float("nan")
        print(f"alpha={r.alpha:g} beta_h={r.beta_h:g} noise={r.noise_fraction:g}: c_h={c:.6g} [{r.status}]")
    status = EXIT_NUMERICAL if all(r.status != "ok" for r in rows) else EXIT_OK
    man.close(status)
    return status


# ---------------------------------------------------------------------------
# spectral

def _smooth_ics(rng: np.random.Generator, n_ic: int, intervals: int, width: float) -> np.ndarray:
    n = intervals - 1
    idx = np.arange(1, n + 1, dtype=float)
    damp = np.exp(-np.add.outer(idx * idx, idx * idx) / width)
    out = np.zeros((n_ic, n + 2, n + 2))
    out[:, 1:-1, 1:-1] = idstn(rng.standard_normal((n_ic, n, n)) * damp, type=1, norm="ortho", axes=(-2, -1))
    return out


def _rel_hnorm(a: np.ndarray, b: np.ndarray, at: np.ndarray, bt: np.ndarray, grid: Grid) -> float:
    num = h1_energy(ScalarField(grid, a - b), ScalarField(grid, at - bt))
    den = h1_energy(ScalarField(grid, a), ScalarField(grid, at))
    return num / den


def spectral_oracle(cfg: Config, scaling: ReferenceScaling, mc) -> list[tuple[int, float, float]]:
    """Modal series vs direct integration; rows ``(ic, t, relative H-norm error)``."""
    s = cfg["spectral"]
    kh, kv = cfg.kernels()
    grid = scaling.grid()
    rng = np.random.default_rng(s["seed"])
    u0 = _smooth_ics(rng, s["n_ic"], scaling.intervals, s["ic_width"])
    u1 = _smooth_ics(rng, s["n_ic"], scaling.intervals, s["ic_width"])
    times = [k * scaling.dt_ref for k in cfg.sample_steps()]
    dt = scaling.dt_ref / s["substeps"]
    traj = direct_integrate_error(
        u0, u1, build_kernel(scaling.kernel_h(kh)), PsiV.from_specs(scaling.kernel_v(kv), 1.0, 1.0),
        max(times), dt, grid=grid, times=times, laplacian=s["laplacian"],
    )
    rows = []
    for i, t in enumerate(traj.times[1:], start=1):
        um, utm = modal_solution_arrays(u0, u1, grid, mc, t)
        for b in range(u0.shape[0]):
            rows.append((b, float(t), _rel_hnorm(um[b], traj.u[i, b], utm[b], traj.ut[i, b], grid)))
    return rows


def cmd_spectral(cfg: Config, out: Path, modes: int | None) -> int:
    s = cfg["spectral"]
    g = cfg.grid()
    m = cfg["model"]
    intervals = modes if modes is not None else s["intervals"]
    if intervals < 3:
        raise ConfigError("--modes must be >= 3")
    scaling = ReferenceScaling(
        L=g.Lx, physical_intervals=g.nx - 1, g=m["g_reduced"], h_bar=m["h_bar"], intervals=intervals, dt=cfg["run"]["dt"]
    )
    man = _Manifest(out, cfg, "spectral")
    kh, kv = cfg.kernels()
    try:
        mc = scaling.coefficients(kh, kv, laplacian=s["laplacian"])
    except AssumptionViolatedError:
        man.close(EXIT_ASSUMPTION)
        raise
    man.write_text("modes.csv", mode_report_csv(mc))
    od = overdamped_modes(mc)
    print(f"reference grid: {intervals} intervals on [0, pi]^2, modes 1..{mc.N}")
    print(f"time scale tau = {scaling.tau:.6g} s, dt_ref = {scaling.dt_ref:.6g}")
    print(f"g2 range [{mc.g2.min():.6g}, {mc.g2.max():.6g}], f2 range [{mc.f2.min():.6g}, {mc.f2.max():.6g}]")
    print(f"overdamped modes: {len(od)} (bound on p^2+q^2: {overdamped_radius(mc):.6g})")
    if s["oracle"]:
        log.info("oracle: %d initial conditions", s["n_ic"])
        rows = spectral_oracle(cfg, scaling, mc)
        lines = ["ic,t,rel_hnorm_error"] + [f"{b},{t!r},{e!r}" for b, t, e in rows]
        man.write_text("oracle.csv", "\n".join(lines) + "\n")
        print(f"oracle: max relative H-norm residual {max(e for _, _, e in rows):.3e} over {len(rows)} samples")
    man.close(EXIT_OK)
    return EXIT_OK


# ---------------------------------------------------------------------------
# invariance

def _asymmetric(k: DiscreteKernel) -> DiscreteKernel:
    w = k.weights.copy()
    r = k.radius
    if r == 0:
        w = np.pad(w, 1)
        r = 1
    w[r, r + 1] += 0.25 * max(abs(w[r, r]), 1e-12)
    return DiscreteKernel(r, w)


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    d = float(np.max(np.abs(a - b)))
    s = float(np.max(np.abs(b)))
    return d / s if s > 0 else d


def invariance_suites(cfg: Config) -> list[tuple[str, float | None, float, str]]:
    """Rows ``(suite, discrepancy or None when skipped, tolerance, note)``."""
    grid = cfg.grid()
    rng = np.random.default_rng(cfg["invariance"]["seed"])
    kh_spec, kv_spec = cfg.kernels()
    ext = cfg["observer"]["extension"]
    kh, kv = build_kernel(kh_spec), build_kernel(kv_spec)
    if cfg["invariance"]["inject_asymmetry"]:
        kh, kv = _asymmetric(kh), _asymmetric(kv)
    p = cfg.params()
    h_bar = p.h_bar
    f = rng.standard_normal(grid.shape)
    rows = []

    if grid.is_square:
        rows.append(("kernel-rotation", _rel(convolve_array(kh, rot90_array(f)), rot90_array(convolve_array(kh, f))), 0.0, ""))
        h_hat = ScalarField(grid, h_bar + rng.standard_normal(grid.shape))
        h_obs = ScalarField(grid, h_bar + rng.standard_normal(grid.shape))
        ch = correction_h(rotate90(h_obs), rotate90(h_hat), kh, ext).values
        cv = correction_v(rotate90(h_obs), rotate90(h_hat), kv, ext)
        ch_r = rotate90(correction_h(h_obs, h_hat, kh, ext)).values
        cv_r = rotate90(correction_v(h_obs, h_hat, kv, ext))
        d = max(_rel(ch, ch_r), _rel(cv.x, cv_r.x), _rel(cv.y, cv_r.y))
        rows.append(("correction-rotation", d, 0.0, ""))

        model = Model("simplified", grid, ModelParams(g_reduced=p.g_reduced, h_bar=h_bar, tau_max=0.0))
        obs = Observer(model, ObserverConfig(kh_spec, kv_spec, "simplified", ext))
        # the stencils actually tested (possibly with injected asymmetry)
        obs.k_h, obs.k_v = kh, kv
        vx = 0.01 * rng.standard_normal(grid.shape)
        vy = 0.01 * rng.standard_normal(grid.shape)
        state = FlowState(h_hat, VectorField(grid, vx, vy))
        y = model.from_state(state)
        yr = model.from_state(FlowState(rotate90(state.h), rotate90(state.v)))
        dt = cfg["run"]["dt"]
        hob, hob_r = h_obs.values, rotate90(h_obs).values

        def step(Y, hb):
            return step_rk4(Y, lambda Z: obs.rhs(Z, hb), dt, force=True)

        a = step(y, hob)
        b = step(yr, hob_r)
        ar = (rot90_array(a[0]), -rot90_array(a[2]), rot90_array(a[1]))
        rows.append(("observer-rotation", max(_rel(b[i], ar[i]) for i in range(3)), 0.0, ""))
    else:
        for name in ("kernel-rotation", "correction-rotation", "observer-rotation"):
            rows.append((name, None, 0.0, "skipped: grid is not square"))

    # interior translation: compact bump far from the walls, shifted by whole cells
    r = max(kh.radius, 1)
    X, Y = grid.mesh()
    cx, cy = 0.4 * grid.Lx, 0.4 * grid.Ly
    w = 4.0 * max(grid.dx, grid.dy)
    bump = np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / (2 * w * w))
    bump[bump < 1e-30] = 0.0
    sx, sy = 3, 2
    a = convolve_array(kh, shift_array(bump, sx, sy))
    b = shift_array(convolve_array(kh, bump), sx, sy)
    m = np.zeros(grid.shape, dtype=bool)
    m[r + abs(sy):grid.ny - r - abs(sy), r + abs(sx):grid.nx - r - abs(sx)] = True
    rows.append(("kernel-translation", _rel(a[m], b[m]), 1e-12, ""))
    return rows


def cmd_invariance(cfg: Config) -> int:
    rows = invariance_suites(cfg)
    failed = []
    for name, d, tol, note in rows:
        if d is None:
            print(f"{name}: {note}")
            continue
        ok = d <= tol
        print(f"{name}: max discrepancy {d:.3e} (tolerance {tol:g}) {'ok' if ok else 'VIOLATED'}")
        if not ok:
            failed.append(name)
    if failed:
        print(f"violated invariant(s): {', '.join(failed)}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="swnudge", description="Symmetry-preserving nudging twin experiments.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {_version()}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--config", metavar="PATH", help="configuration file (defaults apply when omitted)")
        if out:
            p.add_argument("--out", metavar="DIR", default=".", help="output directory (default: current)")
        p.add_argument("--seed", metavar="U64", type=int, help="override the random seed")
        p.add_argument("--jobs", metavar="N", type=int, default=os.cpu_count() or 1, help="parallel sweep rows")

    common(sub.add_parser("run", help="one twin experiment"))
    common(sub.add_parser("sweep", help="gain/noise sweep report"))
    sp = sub.add_parser("spectral", help="mode report and modal-vs-direct oracle")
    common(sp)
    sp.add_argument("--modes", metavar="N", type=int, help="reference grid intervals (modes 1..N-1)")
    common(sub.add_parser("invariance", help="equivariance self-checks"), out=False)
    return ap


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg = cfg.with_seed(args.seed)
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        if args.command == "run":
            return cmd_run(cfg, _out_dir(args.out))
        if args.command == "sweep":
            return cmd_sweep(cfg, _out_dir(args.out), args.jobs)
        if args.command == "spectral":
            return cmd_spectral(cfg, _out_dir(args.out), args.modes)
        return cmd_invariance(cfg)
    except AssumptionViolatedError as exc:
        mode = f" (p, q) = {exc.mode}" if exc.mode else ""
        print(f"swnudge: assumption violated{mode}: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except (NumericalFailureError, StateInvalidError, CFLError) as exc:
        print(f"swnudge: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, InvalidArgumentError, InvalidGridError) as exc:
        print(f"swnudge: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SwnudgeError as exc:
        print(f"swnudge: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
