"""Parallel-beam discrete Radon transform with an exactly matched adjoint.

Each pixel is a unit square.  For a projection angle ``theta`` its area is
spread along the detector axis ``s = x cos(theta) + y sin(theta)`` with the
trapezoidal density of the projected square, and the integral of that density
over every unit-width detector bin becomes the matrix entry.  The weights of
one pixel sum to one for every angle, so each projection preserves the total
image mass as long as the detector spans the image diagonal.

The matrix is assembled once in CSR form; the adjoint is its transpose.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .core import AngleSet, DimensionError, RngSeed, PROBE_STREAM, check_image, check_sinogram


def default_n_dtc(side: int) -> int:
    return int(np.ceil(side * np.sqrt(2.0))) + 1


def _trapezoid_cdf(t, short, long):
    """CDF at offset ``t`` of a projected unit square (widths ``short <= long``)."""
    half_sum = 0.5 * (long + short)
    half_diff = 0.5 * (long - short)
    out = np.empty_like(t)
    denom = 2.0 * short * long
    safe = np.where(denom > 0, denom, 1.0)

    left = t <= -half_sum
    rise = (t > -half_sum) & (t <= -half_diff)
    flat = (t > -half_diff) & (t < half_diff)
    fall = (t >= half_diff) & (t < half_sum)
    right = t >= half_sum

    out[left] = 0.0
    d = (t + half_sum)[rise]
    out[rise] = d * d / np.broadcast_to(safe, t.shape)[rise]
    out[flat] = 0.5 + t[flat] / long
    d = (half_sum - t)[fall]
    out[fall] = 1.0 - d * d / np.broadcast_to(safe, t.shape)[fall]
    out[right] = 1.0
    return out


def _projection_block(side, n_dtc, theta):
    """COO triplets (bin, pixel, weight) for one angle."""
    c = 0.5 * (side - 1)
    rows, cols = np.indices((side, side))
    x = (cols - c).ravel()
    y = (rows - c).ravel()
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    a, b = abs(cos_t), abs(sin_t)
    short, long = min(a, b), max(a, b)

    s0 = x * cos_t + y * sin_t
    # detector bin j covers [j - h, j - h + 1) with h = n_dtc / 2
    h = 0.5 * n_dtc
    first = np.floor(s0 - 0.5 * (a + b) + h).astype(np.int64)
    pix = np.arange(side * side)
    bins, pixels, weights = [], [], []
    # the projected square is at most sqrt(2) wide, so it touches <= 3 bins
    for k in range(3):
        j = first + k
        lo = j - h - s0
        w = _trapezoid_cdf(lo + 1.0, short, long) - _trapezoid_cdf(lo, short, long)
        keep = (w > 0) & (j >= 0) & (j < n_dtc)
        bins.append(j[keep])
        pixels.append(pix[keep])
        weights.append(w[keep])
    return np.concatenate(bins), np.concatenate(pixels), np.concatenate(weights)


def projection_matrix(side: int, thetas, n_dtc: int | None = None) -> sp.csr_matrix:
    """Sparse system matrix for the given angles (radians), rows grouped per angle."""
    n_dtc = default_n_dtc(side) if n_dtc is None else int(n_dtc)
    thetas = np.atleast_1d(np.asarray(thetas, dtype=np.float64))
    r_all, c_all, w_all = [], [], []
    for k, theta in enumerate(thetas):
        r, c, w = _projection_block(side, n_dtc, theta)
        r_all.append(r + k * n_dtc)
        c_all.append(c)
        w_all.append(w)
    mat = sp.coo_matrix(
        (np.concatenate(w_all), (np.concatenate(r_all), np.concatenate(c_all))),
        shape=(thetas.size * n_dtc, side * side),
    )
    return mat.tocsr()


class _LinearOp:
    """Shared apply/adjoint plumbing for the full and subsampled operators."""

    side: int
    n_dtc: int
    matrix: sp.csr_matrix

    @property
    def n_angles(self) -> int:
        return self.matrix.shape[0] // self.n_dtc

    @property
    def shape(self):
        return self.matrix.shape

    def apply(self, f) -> np.ndarray:
        f = check_image(f, self.side)
        return (self.matrix @ f.ravel()).reshape(self.n_angles, self.n_dtc)

    def adjoint(self, g) -> np.ndarray:
        g = check_sinogram(g, self.n_angles, self.n_dtc)
        return (self.matrix.T @ g.ravel()).reshape(self.side, self.side)

    __call__ = apply

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def matvec(self, v):
        return self.matrix @ v

    def rmatvec(self, v):
        return self.matrix.T @ v


class RadonOperator(_LinearOp):
    """Discrete Radon transform on ``n_theta`` equispaced angles in ``[0, pi)``.

    Parameters
    ----------
    side : int
        Pixels per image side.
    n_theta : int
        Size of the fine angle grid; angle ``k`` is ``k * pi / n_theta``.
    n_dtc : int, optional
        Detector cells of unit width.  Defaults to ``ceil(side*sqrt(2)) + 1``.
    thetas : array_like, optional
        Explicit angles in radians, overriding the equispaced grid.
    """

    def __init__(self, side: int, n_theta: int, n_dtc: int | None = None, thetas=None):
        if side < 1 or n_theta < 1:
            raise ValueError("side and n_theta must be positive")
        self.side = int(side)
        self.n_dtc = default_n_dtc(side) if n_dtc is None else int(n_dtc)
        if thetas is None:
            thetas = np.arange(n_theta) * np.pi / n_theta
        self.thetas = np.asarray(thetas, dtype=np.float64)
        if self.thetas.size != n_theta:
            raise DimensionError("thetas must have n_theta entries")
        self.n_theta = int(n_theta)
        self.matrix = projection_matrix(self.side, self.thetas, self.n_dtc)
        self._norm = None
        self._block_bound = None

    @property
    def norm_estimate(self) -> float:
        if self._norm is None:
            self._norm = estimate_op_norm(self)
        return self._norm

    @property
    def per_angle_norm_bound(self) -> float:
        """Largest norm of a single-angle block (the sampling constant kappa)."""
        if self._block_bound is None:
            best = 0.0
            for k in range(self.n_theta):
                block = self.matrix[k * self.n_dtc : (k + 1) * self.n_dtc]
                gram = (block @ block.T).toarray()
                best = max(best, float(np.linalg.eigvalsh(gram)[-1]))
            self._block_bound = float(np.sqrt(best))
        return self._block_bound

    def subsample(self, angles: AngleSet) -> "SubsampledRadon":
        return SubsampledRadon(self, angles)


class SubsampledRadon(_LinearOp):
    """Row-block restriction of a :class:`RadonOperator` to an :class:`AngleSet`."""

    def __init__(self, base: RadonOperator, angles: AngleSet):
        if angles.n_theta != base.n_theta:
            raise ValueError(
                f"angle set refers to a grid of {angles.n_theta}, operator has {base.n_theta}"
            )
        idx = angles.as_array()
        if idx.max() >= base.n_theta:
            raise ValueError("angle index out of range")
        self.base = base
        self.angles = angles
        self.side = base.side
        self.n_dtc = base.n_dtc
        rows = (idx[:, None] * base.n_dtc + np.arange(base.n_dtc)).ravel()
        self.matrix = base.matrix[rows]


class MatrixOperator(_LinearOp):
    """Any matrix viewed as stacked measurement blocks of ``n_dtc`` rows each.

    Lets the solver and diagnostics run on toy or user-supplied operators;
    ``matrix`` has ``side**2`` columns.
    """

    def __init__(self, matrix, side: int, n_dtc: int = 1):
        mat = sp.csr_matrix(np.atleast_2d(matrix) if not sp.issparse(matrix) else matrix,
                            dtype=np.float64)
        if mat.shape[1] != side * side:
            raise DimensionError(f"matrix has {mat.shape[1]} columns, expected {side * side}")
        if mat.shape[0] % n_dtc:
            raise DimensionError(f"{mat.shape[0]} rows do not split into blocks of {n_dtc}")
        self.matrix = mat
        self.side = int(side)
        self.n_dtc = int(n_dtc)


def estimate_op_norm(op, n_iter: int = 1000, rtol: float = 1e-10, seed: int = 0) -> float:
    """Largest singular value by power iteration on ``op^T op``.

    ``op`` may be a dense array, a scipy sparse matrix, or any object with
    ``matvec``/``rmatvec`` (the Radon operators above).
    """
    if hasattr(op, "matvec") and hasattr(op, "rmatvec"):
        fwd, bwd, n = op.matvec, op.rmatvec, op.shape[1]
    else:
        mat = op if sp.issparse(op) else np.atleast_2d(np.asarray(op, dtype=np.float64))
        fwd, bwd, n = (lambda v: mat @ v), (lambda v: mat.T @ v), mat.shape[1]
    v = RngSeed(seed, PROBE_STREAM).generator().standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(n_iter):
        w = bwd(fwd(v))
        lam_new = float(np.linalg.norm(w))
        if lam_new == 0.0:
            return 0.0
        v = w / lam_new
        if abs(lam_new - lam) <= rtol * lam_new:
            lam = lam_new
            break
        lam = lam_new
    return float(np.sqrt(lam))
