"""Dense, desk-scale diagnostics of the forward operator.

These routines materialise the operator as a dense matrix and are meant for
small images (a few thousand pixels); :data:`MAX_DENSE_COLUMNS` caps the
size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .core import CapabilityError, check_image
from .penalty import Penalty
from .radon import RadonOperator, SubsampledRadon
from .wavelet import coefficient_levels

MAX_DENSE_COLUMNS = 4096


def _dense_normalised(op, n_blocks=None):
    """Dense matrix scaled by ``1/sqrt(number of angle blocks)``.

    For the Radon operators the block count is the number of angles, so the
    Gram matrix is the empirical normal operator ``(1/N) sum_i A_i^T A_i``.
    Plain arrays default to one block (no scaling).
    """
    if isinstance(op, (RadonOperator, SubsampledRadon)):
        mat, n = op.matrix, op.n_angles
    else:
        mat = op
        n = 1
    if n_blocks is not None:
        n = n_blocks
    cols = mat.shape[1]
    if cols > MAX_DENSE_COLUMNS:
        raise CapabilityError(
            f"operator has {cols} columns, dense diagnostics are capped at "
            f"{MAX_DENSE_COLUMNS}; use a smaller image or subsample"
        )
    dense = mat.toarray() if sp.issparse(mat) else np.atleast_2d(np.asarray(mat, dtype=np.float64))
    return dense / np.sqrt(n), n


def _gram_eigenvalues(op):
    dense, _ = _dense_normalised(op)
    if dense.shape[0] < dense.shape[1]:
        gram = dense @ dense.T
    else:
        gram = dense.T @ dense
    return np.clip(la.eigvalsh(gram), 0.0, None)


def effective_dimension(op, alpha):
    """``tr[(B + alpha)^-1 B]`` for the normalised normal operator ``B``.

    ``alpha`` may be a scalar or an array (the eigen-decomposition is shared).
    """
    alpha_arr = np.asarray(alpha, dtype=np.float64)
    if np.any(alpha_arr <= 0):
        raise ValueError("alpha must be positive")
    ev = _gram_eigenvalues(op)
    out = np.array([np.sum(ev / (ev + a)) for a in alpha_arr.ravel()]).reshape(alpha_arr.shape)
    return float(out) if out.ndim == 0 else out


def script_R_quadratic(op, f_dagger, beta: float, pen: Penalty | None = None, n_blocks=None) -> float:
    """Closed form ``(beta/2) <f, (B_u + beta I)^-1 f>`` of the approximation term.

    Only defined for the quadratic penalty (p = 2, identity transform).
    """
    if pen is not None and (pen.p != 2.0 or pen.transform.kind != "identity"):
        raise CapabilityError("closed form only holds for p = 2 with the identity transform")
    if beta <= 0:
        raise ValueError("beta must be positive")
    dense, _ = _dense_normalised(op, n_blocks)
    f = np.asarray(f_dagger, dtype=np.float64).ravel()
    if f.size != dense.shape[1]:
        raise ValueError(f"f has {f.size} entries, operator expects {dense.shape[1]}")
    gram = dense.T @ dense + beta * np.eye(dense.shape[1])
    x = la.solve(gram, f, assume_a="pos")
    return 0.5 * beta * float(f @ x)


@dataclass
class BesovSum:
    total: float
    partial_sums: np.ndarray
    level_subtotals: dict


def besov_assumption_sum(op: RadonOperator, pen: Penalty, truncation: int, s: float | None = None,
                         chunk: int = 256) -> BesovSum:
    """Partial sums of ``sum_l c_{l,q,-s,d} ||A psi_l||_Z^q`` over basis functions.

    Basis functions are taken in Mallat order (coarse first).  ``||.||_Z`` is
    the maximum over the angle grid of the Euclidean detector norm.  ``s``
    defaults to ``d (1/p - 1/2)``, for which all weights equal one.
    """
    n = pen.side * pen.side
    if not 0 <= truncation <= n:
        raise ValueError(f"truncation must lie in [0, {n}]")
    d = 2
    q = pen.q
    if s is None:
        s = d * (1.0 / pen.p - 0.5)
    levels = coefficient_levels(pen.transform).ravel()
    weights = 2.0 ** (levels * d * (q * (-s / d + 0.5) - 1.0))

    terms = np.zeros(truncation)
    for start in range(0, truncation, chunk):
        idx = np.arange(start, min(start + chunk, truncation))
        basis = np.zeros((idx.size, n))
        basis[np.arange(idx.size), idx] = 1.0
        psi = np.stack([pen.transform.synthesis(b).ravel() for b in basis], axis=1)
        proj = (op.matrix @ psi).reshape(op.n_angles, op.n_dtc, idx.size)
        znorm = np.sqrt((proj**2).sum(axis=1)).max(axis=0)
        terms[idx] = weights[idx] * znorm**q
    partial = np.cumsum(terms)
    subtotals = {}
    for lev in np.unique(levels[:truncation]):
        subtotals[int(lev)] = float(terms[levels[:truncation] == lev].sum())
    return BesovSum(float(partial[-1]) if truncation else 0.0, partial, subtotals)


def adjoint_mismatch(op, n_pairs: int = 20, seed: int = 0) -> float:
    """Worst relative gap ``|<Af, g> - <f, A^T g>| / (||Af|| ||g||)`` on random pairs."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs):
        f = rng.standard_normal((op.side, op.side))
        g = rng.standard_normal((op.n_angles, op.n_dtc))
        af = op.apply(f)
        gap = abs(np.vdot(af, g) - np.vdot(f, op.adjoint(g)))
        worst = max(worst, gap / (np.linalg.norm(af) * np.linalg.norm(g)))
    return float(worst)


def mass_defect(op, f) -> float:
    """Largest relative deviation of a per-angle detector sum from the image mass."""
    f = check_image(f, op.side)
    sums = op.apply(f).sum(axis=1)
    return float(np.max(np.abs(sums - f.sum())) / abs(f.sum()))
