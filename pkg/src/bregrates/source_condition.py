"""Make a phantom satisfy the discrete range condition ``dR(f) = A^T w``.

Given a phantom ``f0`` we fit ``w`` by ridge-regularised least squares,

    w = argmin 1/2 ||A^T w - dR(f0)||^2 + lam ||w||^2,

and then invert the subgradient map on ``A^T w``.  The resulting image
satisfies the range condition exactly (up to rounding) and stays close to
``f0`` when ``lam`` is small.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ConvergenceError, RngSeed, check_image
from .penalty import Penalty, eval_R, signed_power, subgradient
from .radon import RadonOperator, estimate_op_norm


@dataclass
class CGLSResult:
    x: np.ndarray
    iterations: int
    residual_trace: list = field(default_factory=list)
    gradient_trace: list = field(default_factory=list)


def cgls_ridge(K, b, lam: float, tol: float = 1e-10, max_iters: int = 5000, x0=None):
    """CGLS for ``min_x 1/2 ||K x - b||^2 + lam ||x||^2``.

    Equivalent to CG on ``(K^T K + 2 lam I) x = K^T b``.  Stops once the
    normal-equation residual drops below ``tol`` times its initial value.
    ``K`` is anything supporting ``K @ v`` and ``K.T @ v`` (dense or sparse).

    The trace records the damped least-squares residual
    ``sqrt(||K x - b||^2 + 2 lam ||x||^2)``, which CGLS never increases.
    """
    if lam <= 0:
        raise ValueError("ridge parameter must be positive")
    b = np.asarray(b, dtype=np.float64).ravel()
    shift = 2.0 * lam
    x = np.zeros(K.shape[1]) if x0 is None else np.asarray(x0, dtype=np.float64).copy()
    r = b - K @ x
    s = K.T @ r - shift * x
    p = s.copy()
    gamma = float(np.dot(s, s))
    norm0 = np.sqrt(gamma)
    res = CGLSResult(x, 0)
    res.residual_trace.append(float(np.sqrt(np.dot(r, r) + shift * np.dot(x, x))))
    res.gradient_trace.append(norm0)
    if norm0 == 0.0:
        return res
    for k in range(1, max_iters + 1):
        q = K @ p
        delta = float(np.dot(q, q)) + shift * float(np.dot(p, p))
        a = gamma / delta
        x = x + a * p
        r = r - a * q
        s = K.T @ r - shift * x
        gamma_new = float(np.dot(s, s))
        res.residual_trace.append(float(np.sqrt(np.dot(r, r) + shift * np.dot(x, x))))
        res.gradient_trace.append(np.sqrt(gamma_new))
        if np.sqrt(gamma_new) <= tol * norm0:
            res.x, res.iterations = x, k
            return res
        p = s + (gamma_new / gamma) * p
        gamma = gamma_new
    raise ConvergenceError(
        f"CGLS did not reach relative residual {tol:g} in {max_iters} iterations "
        f"(achieved {np.sqrt(gamma) / norm0:.3e})",
        residual=np.sqrt(gamma) / norm0,
    )


@dataclass
class SourceConditionResult:
    f_dagger: np.ndarray
    w: np.ndarray
    sc_residual: float
    rel_change: float
    lam_sc: float = float("nan")
    iterations: int = 0
    adjoint_norm: float = float("nan")

    @property
    def relative_sc_residual(self) -> float:
        return self.sc_residual / self.adjoint_norm if self.adjoint_norm > 0 else 0.0

    def provenance(self, pen: Penalty) -> dict:
        return {
            "p": pen.p,
            "lambda_sc": self.lam_sc,
            "sc_residual": self.sc_residual,
            "sc_residual_relative": self.relative_sc_residual,
            "rel_change": self.rel_change,
            "R_f_dagger": eval_R(pen, self.f_dagger),
            "w_norm": float(np.linalg.norm(self.w)),
            "cgls_iterations": self.iterations,
        }


def default_lambda_sc(op: RadonOperator) -> float:
    return 1e-3 * op.norm_estimate**2


def image_from_dual(pen: Penalty, op: RadonOperator, w):
    """Invert the subgradient on ``A^T w``: the image whose subgradient is ``A^T w``."""
    v = op.adjoint(np.asarray(w).reshape(op.n_angles, op.n_dtc))
    c = pen.transform.analysis(v) / pen.weights
    return pen.transform.synthesis(signed_power(c, 1.0 / (pen.p - 1.0)))


def project_to_source_condition(f0, op: RadonOperator, pen: Penalty, lam_sc: float | None = None,
                                rng: RngSeed | None = None, tol: float = 1e-10,
                                max_iters: int = 20000) -> SourceConditionResult:
    """Nearby image to ``f0`` satisfying ``dR(f) = A^T w`` on the full angle grid."""
    f0 = check_image(f0, op.side)
    if lam_sc is None:
        seed = rng.seed if rng is not None else 0
        lam_sc = 1e-3 * estimate_op_norm(op, seed=seed) ** 2
    if lam_sc <= 0:
        raise ValueError("lambda_SC must be positive")
    target = subgradient(pen, f0)
    sol = cgls_ridge(op.matrix.T, target.ravel(), lam_sc, tol=tol, max_iters=max_iters)
    w = sol.x.reshape(op.n_angles, op.n_dtc)
    f_dagger = image_from_dual(pen, op, w)
    atw = op.adjoint(w)
    sc_res = float(np.linalg.norm(subgradient(pen, f_dagger) - atw))
    n0 = float(np.linalg.norm(f0))
    rel = float(np.linalg.norm(f_dagger - f0) / n0) if n0 > 0 else 0.0
    return SourceConditionResult(
        f_dagger=f_dagger,
        w=w,
        sc_residual=sc_res,
        rel_change=rel,
        lam_sc=float(lam_sc),
        iterations=sol.iterations,
        adjoint_norm=float(np.linalg.norm(atw)),
    )
