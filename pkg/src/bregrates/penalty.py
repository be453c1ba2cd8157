"""p-homogeneous penalties ``R(f) = (1/p) sum_l w_l |(W f)_l|^p`` for 1 < p <= 2.

``W`` is an orthogonal analysis transform (identity or Haar) and ``w`` a
vector of positive per-coefficient weights.  Besides the value, the module
provides the (single-valued) subgradient, the convex conjugate, the symmetric
Bregman distance and the componentwise proximal map.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import check_image, dot
from .wavelet import AnalysisTransform, coefficient_levels, haar, identity

_TINY = 1e-300


def signed_power(x, n):
    """Componentwise ``sign(x) * |x|**n``."""
    if n <= 0:
        raise ValueError("exponent must be positive")
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.abs(x) ** n


def besov_weights(p, s, d, levels):
    """Weights ``2**(|l| d (p (s/d + 1/2) - 1))`` for coefficient levels ``|l|``.

    With ``s = d (1/p - 1/2)`` every weight is one and the penalty is the
    plain l_p norm of the wavelet coefficients.
    """
    if d < 1:
        raise ValueError("dimension d must be >= 1")
    levels = np.asarray(levels, dtype=np.float64)
    return 2.0 ** (levels * d * (p * (s / d + 0.5) - 1.0))


@dataclass(frozen=True)
class Penalty:
    p: float
    transform: AnalysisTransform
    weights: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if not 1.0 < self.p <= 2.0:
            raise ValueError(f"p must lie in (1, 2], got {self.p}")
        w = self.weights
        if w is None:
            w = np.ones((self.transform.side, self.transform.side))
        w = np.asarray(w, dtype=np.float64).reshape(self.transform.side, self.transform.side)
        if not (np.all(np.isfinite(w)) and np.all(w > 0)):
            raise ValueError("weights must be positive and finite")
        object.__setattr__(self, "weights", w)

    @property
    def q(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def side(self) -> int:
        return self.transform.side

    def coefficients(self, f):
        return self.transform.analysis(f)

    def __call__(self, f):
        return eval_R(self, f)


def make_penalty(p, side, wavelet=None, s=None):
    """Convenience constructor.

    ``wavelet`` defaults to Haar for ``p < 2`` and the identity for ``p == 2``
    (the Besov and Tikhonov set-ups).  ``s`` selects Besov smoothness; the
    default ``d (1/p - 1/2)`` gives unit weights.
    """
    if wavelet is None:
        wavelet = p < 2
    t = haar(side) if wavelet else identity(side)
    weights = None
    if s is not None:
        weights = besov_weights(p, s, 2, coefficient_levels(t))
    return Penalty(float(p), t, weights)


def eval_R(pen: Penalty, f) -> float:
    c = pen.coefficients(f)
    return float(np.sum(pen.weights * np.abs(c) ** pen.p) / pen.p)


def eval_R_from_coefficients(pen: Penalty, c) -> float:
    c = np.asarray(c).reshape(pen.weights.shape)
    return float(np.sum(pen.weights * np.abs(c) ** pen.p) / pen.p)


def eval_R_star(pen: Penalty, g) -> float:
    """Convex conjugate ``(1/q) sum_l w_l**(1-q) |(W g)_l|**q``."""
    q = pen.q
    c = pen.coefficients(g)
    return float(np.sum(pen.weights ** (1.0 - q) * np.abs(c) ** q) / q)


def subgradient(pen: Penalty, f) -> np.ndarray:
    """The unique element ``W^T (w * (W f)^[p-1])`` of the subdifferential."""
    c = pen.coefficients(f)
    return pen.transform.synthesis(pen.weights * signed_power(c, pen.p - 1.0))


def bregman(pen: Penalty, f, g) -> float:
    """Symmetric Bregman distance ``<r_f - r_g, f - g>``."""
    f = check_image(f, pen.side)
    g = check_image(g, pen.side)
    cf = pen.coefficients(f)
    cg = pen.coefficients(g)
    a = pen.p - 1.0
    return float(np.sum(pen.weights * (signed_power(cf, a) - signed_power(cg, a)) * (cf - cg)))


def _prox_root_general(x, s, p, tol=1e-14, max_iter=200):
    """Positive root of ``z + s z**(p-1) = x`` for ``x > 0`` (vectorised).

    Safeguarded Newton inside the bracket ``[0, min(x, (x/s)**(1/(p-1)))]``;
    a step leaving the bracket is replaced by bisection.
    """
    a = p - 1.0
    lo = np.zeros_like(x)
    with np.errstate(over="ignore"):
        hi = np.minimum(x, (x / s) ** (1.0 / a))
    z = hi.copy()
    for _ in range(max_iter):
        za = z**a
        phi = z + s * za - x
        done = np.abs(phi) <= tol * np.maximum(1.0, x)
        if np.all(done):
            break
        hi = np.where(phi > 0, z, hi)
        lo = np.where(phi <= 0, z, lo)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            step = z - phi / (1.0 + s * a * za / z)
        bad = ~((step > lo) & (step < hi)) | ~np.isfinite(step)
        z_new = np.where(bad, 0.5 * (lo + hi), step)
        z = np.where(done, z, z_new)
    return z


def prox_root(x, s, p):
    """Nonnegative root of ``z + s z**(p-1) = x`` for ``x >= 0``, ``s > 0``.

    Closed forms for p = 2, 3/2 and 4/3; safeguarded Newton otherwise.
    """
    x = np.asarray(x, dtype=np.float64)
    s = np.broadcast_to(np.asarray(s, dtype=np.float64), x.shape)
    z = np.zeros_like(x)
    act = x > _TINY
    xa, sa = x[act], s[act]
    if p == 2.0:
        z[act] = xa / (1.0 + sa)
    elif p == 1.5:
        # y = sqrt(z) solves y^2 + s y - x = 0
        y = 2.0 * xa / (sa + np.sqrt(sa * sa + 4.0 * xa))
        z[act] = y * y
    elif abs(p - 4.0 / 3.0) < 1e-15:
        # y = z^(1/3) solves the depressed cubic y^3 + s y - x = 0
        r = np.sqrt(sa / 3.0)
        with np.errstate(over="ignore"):
            arg = 1.5 * xa / (sa * r)
        y = np.empty_like(xa)
        trig = np.isfinite(arg) & (arg < 1e8)
        y[trig] = 2.0 * r[trig] * np.sinh(np.arcsinh(arg[trig]) / 3.0)
        # Cardano where the hyperbolic form would overflow (s tiny vs x)
        xc, sc = xa[~trig], sa[~trig]
        u = np.cbrt(0.5 * xc + np.sqrt(0.25 * xc * xc + sc**3 / 27.0))
        y[~trig] = u - sc / (3.0 * u)
        z[act] = y * y * y
    else:
        z[act] = _prox_root_general(xa, sa, p)
    return z


def prox(pen_or_p, x, scale):
    """Componentwise prox of ``scale * (1/p)|.|**p``.

    ``pen_or_p`` is a :class:`Penalty` or the exponent itself; ``scale`` is a
    positive scalar or an array broadcastable to ``x`` (e.g. step * alpha *
    weights).
    """
    p = pen_or_p.p if isinstance(pen_or_p, Penalty) else float(pen_or_p)
    scale = np.asarray(scale, dtype=np.float64)
    if np.any(scale <= 0):
        raise ValueError("prox scale must be positive")
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * prox_root(np.abs(x), scale, p)


def prox_residual(p, x, scale, z):
    """Optimality residual ``z + scale * z^[p-1] - x``."""
    return z + scale * signed_power(z, p - 1.0) - x


def fenchel_young_gap(pen: Penalty, f, g) -> float:
    """``R(f) + R*(g) - <g, f>`` (nonnegative, zero iff g is the subgradient)."""
    return eval_R(pen, f) + eval_R_star(pen, g) - dot(g, f)
