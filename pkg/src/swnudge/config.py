"""Sectioned ``key = value`` experiment configuration.

An empty file resolves to the baseline linear-regime twin (81 x 81 basin,
25 km spacing, 1800 s steps, ``g' = 0.02``, ``h_bar = 500``, Gaussian gains
with ``alpha = 1``, ``beta_h = 5e-7``, ``beta_v = 0.1 beta_h``, stencil
radius 10).  Unknown sections or keys are rejected so typos cannot silently
fall back to defaults.
"""
from __future__ import annotations

import configparser
import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .dynamics import MODELS, WIND_PROFILES, ModelParams
from .errors import ConfigError, SwnudgeError
from .grid import Grid
from .harness import BOUNDARY_MODES, InitSpec, TwinConfig, Variation
from .kernels import KernelSpec
from .observer import EXTENSIONS, ObserverConfig

__all__ = ["Config", "load_config", "parse_config", "bundled_config", "SCHEMA"]

# section -> key -> (type, default); ``None`` defaults are resolved from other keys
SCHEMA: dict[str, dict[str, tuple[type, object]]] = {
    "grid": {"nx": (int, 81), "ny": (int, 81), "dx": (float, 25000.0), "dy": (float, 25000.0)},
    "model": {
        "kind": (str, "simplified"),
        "g_reduced": (float, 0.02),
        "h_bar": (float, 500.0),
        "f0": (float, 7e-5),
        "beta": (float, 2e-11),
        "R": (float, 9e-8),
        "A": (float, 5.0),
        "alpha_A": (float, 1.0),
        "alpha_tau": (float, 1.0),
        "tau_max": (float, 0.05),
        "rho": (float, 1000.0),
        "D": (float, None),
        "wind_profile": (str, "double_gyre"),
    },
    "observer": {
        "kernel": (str, "gaussian"),
        "alpha": (float, 1.0),
        "alpha_h": (float, None),
        "alpha_v": (float, None),
        "beta_h": (float, 5e-7),
        "beta_v": (float, None),
        "K_h": (float, 5e-7),
        "K_v": (float, None),
        "truncation": (int, 10),
        "boundary": (str, "free"),
        "extension": (str, "mirror"),
    },
    "noise": {"fraction": (float, 0.0), "seed": (int, 0)},
    "run": {
        "dt": (float, 1800.0),
        "steps": (int, 5760),
        "record_every": (int, 1),
        "snapshot_every": (int, 0),
        "force": (bool, False),
        "run_id": (str, "run"),
        "estimate_init": (str, "equilibrium"),
    },
    "init": {
        "kind": (str, "low_mode"),
        "amplitude_h": (float, 2.0),
        "amplitude_v": (float, 0.008),
        "modes": (str, "1 1, 2 1, 1 2"),
        "steps": (int, 17520),
        "path": (str, ""),
        "path_vx": (str, ""),
        "path_vy": (str, ""),
    },
    "sweep": {"alpha": (str, "1"), "beta_h": (str, "5e-7"), "noise_fraction": (str, "0"), "rows": (str, "")},
    "spectral": {
        "intervals": (int, 64),
        "laplacian": (str, "spectral"),
        "oracle": (bool, True),
        "n_ic": (int, 20),
        "ic_width": (float, 16.0),
        "sample_steps": (str, "10, 100, 1000"),
        "substeps": (int, 2),
        "seed": (int, 0),
    },
    "invariance": {"inject_asymmetry": (bool, False), "seed": (int, 0)},
}


def _convert(section: str, key: str, raw: str, typ: type):
    try:
        if typ is bool:
            v = raw.strip().lower()
            if v in ("1", "true", "yes", "on"):
                return True
            if v in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ is int:
            f = float(raw)
            if f != int(f):
                raise ValueError(raw)
            return int(f)
        if typ is float:
            f = float(raw)
            if not math.isfinite(f):
                raise ValueError(raw)
            return f
        return raw.strip()
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot read {raw!r} as {typ.__name__}") from None


def _floats(section: str, key: str, raw: str) -> list[float]:
    parts = [p for p in raw.replace(";", ",").split(",") if p.strip()]
    return [_convert(section, key, p, float) for p in parts]


@dataclass(frozen=True)
class Config:
    """Resolved configuration; ``values[section][key]`` holds typed values."""

    values: dict = field(default_factory=dict)

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    def canonical_json(self) -> str:
        return json.dumps(self.values, sort_keys=True, separators=(",", ":"), allow_nan=False)

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    def with_seed(self, seed: int) -> "Config":
        vals = json.loads(self.canonical_json())
        vals["noise"]["seed"] = int(seed)
        vals["spectral"]["seed"] = int(seed)
        vals["invariance"]["seed"] = int(seed)
        return Config(vals)

    # builders ------------------------------------------------------------

    def grid(self) -> Grid:
        g = self["grid"]
        return Grid(g["nx"], g["ny"], g["dx"], g["dy"])

    def params(self) -> ModelParams:
        m = self["model"]
        kw = {k: m[k] for k in ("g_reduced", "h_bar", "f0", "beta", "R", "A", "alpha_A", "alpha_tau", "tau_max", "rho")}
        return ModelParams(**kw, D=m["D"], wind_profile=m["wind_profile"])

    def kernels(self) -> tuple[KernelSpec, KernelSpec]:
        o = self["observer"]
        if o["kernel"] == "dirac":
            return KernelSpec.dirac(o["K_h"]), KernelSpec.dirac(o["K_v"])
        r = o["truncation"]
        return KernelSpec.gaussian(o["alpha_h"], o["beta_h"], r), KernelSpec.gaussian(o["alpha_v"], o["beta_v"], r)

    def observer(self) -> ObserverConfig:
        kh, kv = self.kernels()
        return ObserverConfig(kh, kv, self["model"]["kind"], self["observer"]["extension"])

    def init(self) -> InitSpec:
        i = self["init"]
        modes = []
        for chunk in i["modes"].split(","):
            if not chunk.strip():
                continue
            try:
                p, q = (int(c) for c in chunk.split())
            except ValueError:
                raise ConfigError(f"[init] modes: cannot read {chunk.strip()!r} as 'p q'") from None
            modes.append((p, q))
        return InitSpec(
            kind=i["kind"], amplitude_h=i["amplitude_h"], amplitude_v=i["amplitude_v"], modes=tuple(modes),
            steps=i["steps"], path=i["path"] or None, path_vx=i["path_vx"] or None, path_vy=i["path_vy"] or None,
        )

    def twin(self) -> TwinConfig:
        r = self["run"]
        try:
            return TwinConfig(
                model=self["model"]["kind"], grid=self.grid(), dt=r["dt"], n_steps=r["steps"],
                params=self.params(), observer=self.observer(), noise_fraction=self["noise"]["fraction"],
                rng_seed=self["noise"]["seed"], truth_init=self.init(), snapshot_every=r["snapshot_every"],
                force=r["force"], boundary=self["observer"]["boundary"], estimate_init=r["estimate_init"],
            )
        except ConfigError:
            raise
        except SwnudgeError as exc:
            raise ConfigError(str(exc)) from exc

    def variations(self) -> list[Variation]:
        """Explicit ``rows`` (``alpha beta_h noise [dt]`` separated by ``;``) or the product of the lists."""
        s = self["sweep"]
        out = []
        if s["rows"].strip():
            for chunk in s["rows"].split(";"):
                if not chunk.strip():
                    continue
                nums = [_convert("sweep", "rows", x, float) for x in chunk.split()]
                if len(nums) not in (3, 4):
                    raise ConfigError(f"[sweep] rows: expected 'alpha beta_h noise [dt]', got {chunk.strip()!r}")
                out.append(Variation(nums[0], nums[1], nums[2], nums[3] if len(nums) == 4 else None))
            return out
        for a in _floats("sweep", "alpha", s["alpha"]):
            for b in _floats("sweep", "beta_h", s["beta_h"]):
                for n in _floats("sweep", "noise_fraction", s["noise_fraction"]):
                    out.append(Variation(a, b, n))
        return out

    def sample_steps(self) -> list[float]:
        return _floats("spectral", "sample_steps", self["spectral"]["sample_steps"])


def _validate(values: dict) -> None:
    m, o = values["model"], values["observer"]
    if m["kind"] not in MODELS:
        raise ConfigError(f"[model] kind must be one of {MODELS}, got {m['kind']!r}")
    if m["wind_profile"] not in WIND_PROFILES:
        raise ConfigError(f"[model] wind_profile must be one of {WIND_PROFILES}")
    if o["kernel"] not in ("gaussian", "dirac"):
        raise ConfigError(f"[observer] kernel must be gaussian or dirac, got {o['kernel']!r}")
    if o["extension"] not in EXTENSIONS:
        raise ConfigError(f"[observer] extension must be one of {tuple(EXTENSIONS)}, got {o['extension']!r}")
    if o["boundary"] not in BOUNDARY_MODES:
        raise ConfigError(f"[observer] boundary must be one of {BOUNDARY_MODES}")
    if values["init"]["kind"] not in ("low_mode", "spinup", "from_snapshot", "equilibrium"):
        raise ConfigError(f"[init] kind not recognised: {values['init']['kind']!r}")
    if values["spectral"]["laplacian"] not in ("spectral", "fd5"):
        raise ConfigError("[spectral] laplacian must be spectral or fd5")
    for sec, key in (("run", "steps"), ("run", "record_every"), ("spectral", "n_ic"), ("spectral", "substeps")):
        if values[sec][key] < 1:
            raise ConfigError(f"[{sec}] {key} must be >= 1")
    if values["spectral"]["intervals"] < 3:
        raise ConfigError("[spectral] intervals must be >= 3")


def parse_config(text: str, source: str = "<string>") -> Config:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str  # keys are case-sensitive (R, A, D, K_h)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    values = {}
    for section, keys in SCHEMA.items():
        got = dict(cp[section]) if cp.has_section(section) else {}
        unknown = sorted(set(got) - set(keys))
        if unknown:
            raise ConfigError(f"{source}: unknown key(s) in [{section}]: {', '.join(unknown)}")
        values[section] = {k: (_convert(section, k, got[k], t) if k in got else d) for k, (t, d) in keys.items()}
    extra = sorted(set(cp.sections()) - set(SCHEMA))
    if extra:
        raise ConfigError(f"{source}: unknown section(s): {', '.join(extra)}")

    # dependent defaults
    g = values["grid"]
    m, o = values["model"], values["observer"]
    if m["D"] is None:
        m["D"] = (g["ny"] - 1) * g["dy"]
    o["alpha_h"] = o["alpha"] if o["alpha_h"] is None else o["alpha_h"]
    o["alpha_v"] = o["alpha"] if o["alpha_v"] is None else o["alpha_v"]
    o["beta_v"] = 0.1 * o["beta_h"] if o["beta_v"] is None else o["beta_v"]
    o["K_v"] = 0.1 * o["K_h"] if o["K_v"] is None else o["K_v"]
    _validate(values)
    return Config(values)


def bundled_config(name: str) -> Path | None:
    """Path of a configuration shipped with the package, or ``None``."""
    ref = resources.files("swnudge") / "configs" / name
    return Path(str(ref)) if ref.is_file() else None


def load_config(path: str | Path | None) -> Config:
    """Read ``path``; a bare name of a bundled configuration (``table1.cfg``) also works."""
    if path is None:
        return parse_config("", "<defaults>")
    p = Path(path)
    if not p.exists() and p.name == str(path):
        p = bundled_config(p.name) or p
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {str(p)!r}: {exc.strerror or exc}") from exc
    return parse_config(text, str(p))
