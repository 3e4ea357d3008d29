"""Isotropic gain kernels and their truncated stencils.

Offsets are measured in grid cells.  A Gaussian ``beta * exp(-alpha (i^2 + j^2))``
truncated to the square ``|i|, |j| <= r`` factorises exactly into
``beta * p_i * p_j`` with ``p_i = exp(-alpha i^2)``, so it is applied as two
1-D passes.  Each pass adds the symmetric taps pairwise
(``p_k * (f[n+k] + f[n-k])``), which is invariant under reversing the axis,
and the two pass orders are averaged; together this makes the convolution
commute with 90 degree lattice rotations bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .errors import InvalidArgumentError
from .grid import ScalarField

__all__ = ["BOUNDARIES", "KernelSpec", "DiscreteKernel", "build_kernel", "convolve", "convolve_array", "kernel_mass"]


@dataclass(frozen=True)
class KernelSpec:
    """``shape`` is ``"gaussian"`` (uses ``alpha``, ``beta``) or ``"dirac"`` (uses ``K``)."""

    shape: str = "gaussian"
    alpha: float = 1.0
    beta: float = 0.0
    K: float = 0.0
    truncation_radius: int = 10

    def __post_init__(self):
        if self.shape not in ("gaussian", "dirac"):
            raise InvalidArgumentError(f"unknown kernel shape {self.shape!r}")
        if self.shape == "gaussian" and not self.alpha > 0:
            raise InvalidArgumentError("alpha must be > 0")
        if self.beta < 0 or self.K < 0:
            raise InvalidArgumentError("kernel weights must be >= 0")
        if self.truncation_radius < 0 or int(self.truncation_radius) != self.truncation_radius:
            raise InvalidArgumentError("truncation_radius must be a non-negative integer")

    @classmethod
    def gaussian(cls, alpha: float, beta: float, radius: int = 10) -> "KernelSpec":
        return cls("gaussian", alpha=alpha, beta=beta, truncation_radius=radius)

    @classmethod
    def dirac(cls, K: float) -> "KernelSpec":
        return cls("dirac", K=K, truncation_radius=0)

    @property
    def weight(self) -> float:
        return self.beta if self.shape == "gaussian" else self.K


@dataclass(frozen=True, eq=False)
class DiscreteKernel:
    """Stencil ``weights[r + j, r + i]`` for offset ``(i, j)``.

    ``scale`` and ``profile`` are set when the stencil is ``scale * outer(profile, profile)``;
    :func:`convolve` then uses the separable path.
    """

    radius: int
    weights: np.ndarray
    scale: float | None = None
    profile: np.ndarray | None = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        n = 2 * self.radius + 1
        if w.shape != (n, n):
            raise InvalidArgumentError(f"weights must be {n}x{n}, got {w.shape}")
        object.__setattr__(self, "weights", w)

    @property
    def separable(self) -> bool:
        return self.profile is not None

    def is_dihedral(self) -> bool:
        w = self.weights
        return bool(np.array_equal(w, w.T) and np.array_equal(w, w[::-1, :]) and np.array_equal(w, w[:, ::-1]))


def build_kernel(spec: KernelSpec) -> DiscreteKernel:
    if spec.shape == "dirac":
        return DiscreteKernel(0, np.array([[spec.K]]), scale=spec.K, profile=np.ones(1))
    r = int(spec.truncation_radius)
    offs = np.arange(-r, r + 1, dtype=float)
    p = np.exp(-spec.alpha * offs * offs)
    w = spec.beta * (p[:, None] * p[None, :])
    return DiscreteKernel(r, w, scale=spec.beta, profile=p)


def kernel_mass(k: DiscreteKernel) -> float:
    return math.fsum(k.weights.ravel().tolist())


BOUNDARIES = ("zero", "odd", "even")


def _pad(b: np.ndarray, r: int, boundary: str) -> np.ndarray:
    # b has the convolution axis last
    if boundary == "zero":
        widths = [(0, 0)] * (b.ndim - 1) + [(r, r)]
        return np.pad(b, widths)
    n = b.shape[-1]
    if r > n - 1:
        raise InvalidArgumentError(f"{boundary} extension needs radius < {n}, got {r}")
    # reflection about the wall node
    left = b[..., r:0:-1]
    right = b[..., -2:-r - 2:-1]
    if boundary == "odd":
        left, right = -left, -right
    return np.concatenate([left, b, right], axis=-1)


def _axes(boundary) -> tuple[str, str]:
    """``(y, x)`` extension modes from a single mode or a ``(y, x)`` pair."""
    by, bx = (boundary, boundary) if isinstance(boundary, str) else tuple(boundary)
    for b in (by, bx):
        if b not in BOUNDARIES:
            raise InvalidArgumentError(f"unknown boundary extension {b!r}")
    return by, bx


def _pass1d(a: np.ndarray, p: np.ndarray, axis: int, boundary: str) -> np.ndarray:
    # correlate1d adds mirrored taps pairwise for symmetric weights, so the
    # result is invariant under reversing the axis
    r = (p.size - 1) // 2
    nz = [k for k in range(1, r + 1) if p[r + k] != 0.0]
    rr = max(nz) if nz else 0
    if rr == 0:
        return p[r] * a
    taps = p[r - rr:r + rr + 1]
    if boundary == "zero":
        return correlate1d(a, taps, axis=axis, mode="constant", cval=0.0)
    b = np.moveaxis(a, axis, -1)
    n = b.shape[-1]
    ext = _pad(b, rr, boundary)
    out = correlate1d(ext, taps, axis=-1, mode="constant", cval=0.0)[..., rr:rr + n]
    return np.moveaxis(out, -1, axis)


def _direct(a: np.ndarray, w: np.ndarray, by: str, bx: str) -> np.ndarray:
    r = (w.shape[0] - 1) // 2
    ny, nx = a.shape
    ext = np.moveaxis(_pad(np.moveaxis(_pad(a, r, bx), 0, -1), r, by), -1, 0)
    out = np.zeros_like(a)
    for jj in range(2 * r + 1):
        for ii in range(2 * r + 1):
            c = w[jj, ii]
            if c != 0.0:
                # out(x) += w(i, j) f(x - i, y - j)
                out = out + c * ext[2 * r - jj:2 * r - jj + ny, 2 * r - ii:2 * r - ii + nx]
    return out


def convolve_array(k: DiscreteKernel, a: np.ndarray, boundary="zero") -> np.ndarray:
    """Array-level :func:`convolve`.

    ``boundary`` says how the field continues past the walls: ``"zero"``,
    ``"odd"`` or ``"even"`` (reflection about the wall node, negated for
    ``"odd"``), or a ``(y, x)`` pair of those.  The last two axes are
    ``(y, x)``; leading axes are treated as a batch.
    """
    by, bx = _axes(boundary)
    if k.radius == 0:
        return k.weights[0, 0] * a
    if not k.separable:
        if a.ndim == 2:
            return _direct(a, k.weights, by, bx)
        return np.stack([convolve_array(k, b, boundary) for b in a])
    p = k.profile
    xy = _pass1d(_pass1d(a, p, -1, bx), p, -2, by)
    yx = _pass1d(_pass1d(a, p, -2, by), p, -1, bx)
    return k.scale * (0.5 * (xy + yx))


def convolve(k: DiscreteKernel, f: ScalarField, boundary="zero") -> ScalarField:
    """``out(x) = sum_{|i|,|j|<=r} w(i, j) f(x - i, y - j)`` with ``f`` zero outside the domain."""
    return ScalarField(f.grid, convolve_array(k, f.values, boundary))
