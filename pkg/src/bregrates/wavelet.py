"""Orthonormal 2-D Haar transform in Mallat layout, plus the identity transform.

Coefficients are returned as a ``(side, side)`` array: after a full-depth
decomposition the single scaling coefficient sits at ``[0, 0]``, and the
detail bands of scale ``j`` (``2**j x 2**j`` blocks) occupy
``[0:n, n:2n]``, ``[n:2n, 0:n]`` and ``[n:2n, n:2n]`` with ``n = 2**j``.
:func:`coefficient_levels` gives the scale ``j`` of every entry so that
per-coefficient weights can be laid out against the same array.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DimensionError, check_image


def _is_pow2(n):
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class AnalysisTransform:
    kind: str = "haar2d"
    side: int = 1
    levels: int | None = None

    def __post_init__(self):
        if self.kind not in ("identity", "haar2d"):
            raise ValueError(f"unknown transform kind {self.kind!r}")
        if self.kind == "haar2d":
            if not _is_pow2(self.side):
                raise ValueError(f"Haar transform needs a power-of-two side, got {self.side}")
            depth = int(np.log2(self.side))
            levels = depth if self.levels is None else int(self.levels)
            if not 0 <= levels <= depth:
                raise ValueError(f"levels must lie in [0, {depth}]")
            object.__setattr__(self, "levels", levels)
        else:
            object.__setattr__(self, "levels", 0)

    def analysis(self, f):
        return analysis(self, f)

    def synthesis(self, c):
        return synthesis(self, c)


def identity(side: int) -> AnalysisTransform:
    return AnalysisTransform("identity", side)


def haar(side: int, levels: int | None = None) -> AnalysisTransform:
    return AnalysisTransform("haar2d", side, levels)


def _haar_step(x):
    a = x[0::2, 0::2]
    b = x[0::2, 1::2]
    c = x[1::2, 0::2]
    d = x[1::2, 1::2]
    n = a.shape[0]
    out = np.empty_like(x)
    out[:n, :n] = (a + b + c + d) * 0.5
    out[:n, n:] = (a - b + c - d) * 0.5
    out[n:, :n] = (a + b - c - d) * 0.5
    out[n:, n:] = (a - b - c + d) * 0.5
    return out


def _haar_step_inv(y):
    n = y.shape[0] // 2
    ll, hl, lh, hh = y[:n, :n], y[:n, n:], y[n:, :n], y[n:, n:]
    out = np.empty_like(y)
    out[0::2, 0::2] = (ll + hl + lh + hh) * 0.5
    out[0::2, 1::2] = (ll - hl + lh - hh) * 0.5
    out[1::2, 0::2] = (ll + hl - lh - hh) * 0.5
    out[1::2, 1::2] = (ll - hl - lh + hh) * 0.5
    return out


def analysis(t: AnalysisTransform, f) -> np.ndarray:
    """Wavelet coefficients of ``f`` (a copy of ``f`` for the identity)."""
    f = check_image(f, t.side)
    if t.kind == "identity":
        return f.copy()
    c = f.copy()
    n = t.side
    for _ in range(t.levels):
        c[:n, :n] = _haar_step(c[:n, :n])
        n //= 2
    return c


def synthesis(t: AnalysisTransform, c) -> np.ndarray:
    """Inverse (= adjoint) of :func:`analysis`."""
    c = np.asarray(c, dtype=np.float64)
    if c.size != t.side * t.side:
        raise DimensionError(f"expected {t.side**2} coefficients, got {c.size}")
    c = c.reshape(t.side, t.side)
    if t.kind == "identity":
        return c.copy()
    f = c.copy()
    n = t.side >> (t.levels - 1) if t.levels else t.side
    for _ in range(t.levels):
        f[:n, :n] = _haar_step_inv(f[:n, :n])
        n *= 2
    return f


def coefficient_levels(t: AnalysisTransform) -> np.ndarray:
    """Dyadic scale index of every coefficient in Mallat layout.

    Detail coefficients in a ``2**j x 2**j`` band get level ``j``; the
    scaling coefficients of the coarsest approximation get level 0.  For the
    identity transform every entry is level 0.
    """
    lev = np.zeros((t.side, t.side), dtype=np.int64)
    if t.kind == "identity":
        return lev
    n = t.side // 2
    for _ in range(t.levels):
        j = int(np.log2(n))
        lev[:n, n : 2 * n] = j
        lev[n : 2 * n, : 2 * n] = j
        n //= 2
    return lev
