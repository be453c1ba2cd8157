"""Proximal gradient descent with Barzilai-Borwein steps.

Solves ``min_f (1/2N) ||A f - g||^2 + alpha R(f)`` where ``A`` stacks ``N``
single-angle projections and ``R`` is a :class:`~bregrates.penalty.Penalty`.
One iteration is::

    f <- W^T prox_{tau alpha w |.|^p / p}( W (f - (tau/N) A^T (A f - g)) )
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .core import DivergenceError, check_image, check_sinogram, weighted_residual_norm_sq
from .penalty import Penalty, eval_R, eval_R_from_coefficients, prox
from .radon import estimate_op_norm

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 2000
    rel_tol: float = 1e-7
    obj_tol: float = 1e-13
    tau_init: float | None = None
    tau_min: float | None = None
    tau_max: float | None = None
    bb_variant: str = "BB2"

    def __post_init__(self):
        if self.bb_variant not in ("BB1", "BB2"):
            raise ValueError(f"bb_variant must be 'BB1' or 'BB2', got {self.bb_variant!r}")
        if self.max_iters < 1 or self.rel_tol <= 0 or self.obj_tol <= 0:
            raise ValueError("max_iters and tolerances must be positive")
        if self.tau_init is not None:
            lo = self.tau_min if self.tau_min is not None else 0.0
            hi = self.tau_max if self.tau_max is not None else np.inf
            if not (0 < self.tau_init and lo <= self.tau_init <= hi and 0 <= lo):
                raise ValueError("need 0 < tau_min <= tau_init <= tau_max")

    def resolved(self, op, n_angles) -> "SolverConfig":
        """Fill in step-size defaults from the operator norm."""
        tau = self.tau_init
        if tau is None:
            tau = n_angles / estimate_op_norm(op) ** 2
        return replace(
            self,
            tau_init=tau,
            tau_min=1e-8 * tau if self.tau_min is None else self.tau_min,
            tau_max=1e8 * tau if self.tau_max is None else self.tau_max,
        )


@dataclass
class SolveResult:
    reconstruction: np.ndarray
    iterations: int
    objective_trace: np.ndarray
    converged: bool
    final_step: float
    fixed_point_residual: float = float("nan")
    step_trace: np.ndarray = field(default=None, repr=False)
    change_trace: np.ndarray = field(default=None, repr=False)

    @property
    def objective(self) -> float:
        return float(self.objective_trace[-1])

    def write_trace(self, path):
        """Dump ``iteration, objective, step, residual`` rows to CSV."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "objective", "step", "residual"])
            for k, obj in enumerate(self.objective_trace):
                step = self.step_trace[k] if k < len(self.step_trace) else ""
                res = self.change_trace[k] if k < len(self.change_trace) else ""
                w.writerow([k, repr(float(obj)), repr(float(step)) if step != "" else "",
                            repr(float(res)) if res != "" else ""])


def objective(op, g, pen: Penalty, alpha: float, f) -> float:
    """``(1/2N) sum_i ||(A f - g)_i||^2 + alpha R(f)``."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    f = check_image(f, pen.side)
    g = check_sinogram(g, op.n_angles, op.n_dtc)
    r = op.apply(f) - g
    return 0.5 * weighted_residual_norm_sq(r) + alpha * eval_R(pen, f)


def bb_step(s, y, variant="BB1", bounds=(0.0, np.inf), fallback=1.0) -> float:
    """Barzilai-Borwein step length, clamped to ``bounds``.

    Returns ``fallback`` when the curvature ``<s, y>`` is not positive.
    """
    s = np.ravel(s)
    y = np.ravel(y)
    if s.size != y.size:
        raise ValueError("s and y must have equal length")
    sy = float(np.dot(s, y))
    if not sy > 0:
        return float(fallback)
    if variant == "BB1":
        tau = float(np.dot(s, s)) / sy
    elif variant == "BB2":
        tau = sy / float(np.dot(y, y))
    else:
        raise ValueError(f"unknown BB variant {variant!r}")
    return float(np.clip(tau, bounds[0], bounds[1]))


def pgd_solve(op, g, pen: Penalty, alpha: float, cfg: SolverConfig | None = None, f0=None,
              trace_path=None) -> SolveResult:
    """Minimise the Tikhonov functional with proximal gradient + BB steps.

    Parameters
    ----------
    op : SubsampledRadon or RadonOperator
        Anything exposing ``matrix`` (rows grouped per angle), ``n_angles``,
        ``n_dtc`` and ``side``.
    g : ndarray, shape (n_angles, n_dtc)
        Data.
    pen : Penalty
    alpha : float
        Regularisation parameter.
    cfg : SolverConfig, optional
    f0 : ndarray, optional
        Starting image, zero by default.
    trace_path : path, optional
        If given, the per-iteration trace is written there as CSV.

    Raises
    ------
    DivergenceError
        If the objective exceeds a million times its starting value.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    side = pen.side
    n = op.n_angles
    g = check_sinogram(g, n, op.n_dtc).ravel()
    cfg = (cfg or SolverConfig()).resolved(op, n)
    mat = op.matrix
    mat_t = mat.T.tocsr()
    t = pen.transform
    weights = pen.weights

    f = np.zeros((side, side)) if f0 is None else check_image(f0, side).copy()
    r = mat @ f.ravel() - g
    grad = (mat_t @ r).reshape(side, side) / n
    obj0 = 0.5 * np.dot(r, r) / n + alpha * eval_R(pen, f)
    objs = [obj0]
    steps, changes = [], []
    tau = cfg.tau_init
    converged = False
    small_obj_run = 0
    blowup = 1e6 * max(obj0, np.finfo(float).tiny)
    k = 0
    for k in range(1, cfg.max_iters + 1):
        z = prox(pen.p, t.analysis(f - tau * grad), tau * alpha * weights)
        f_new = t.synthesis(z)
        r = mat @ f_new.ravel() - g
        grad_new = (mat_t @ r).reshape(side, side) / n
        obj = 0.5 * np.dot(r, r) / n + alpha * eval_R_from_coefficients(pen, z)
        if not np.isfinite(obj) or obj > blowup:
            raise DivergenceError(
                f"objective grew from {obj0:.3e} to {obj:.3e} at step tau={tau:.3e}", step=tau
            )
        s = f_new - f
        ds = float(np.linalg.norm(s))
        fn = float(np.linalg.norm(f_new))
        objs.append(obj)
        steps.append(tau)
        changes.append(ds / fn if fn > 0 else ds)
        used_tau = tau
        tau = bb_step(s, grad_new - grad, cfg.bb_variant, (cfg.tau_min, cfg.tau_max), cfg.tau_init)
        f, grad = f_new, grad_new
        if ds <= cfg.rel_tol * fn or ds == 0.0:
            converged = True
            break
        if abs(objs[-2] - obj) <= cfg.obj_tol * max(abs(obj), np.finfo(float).tiny):
            small_obj_run += 1
            if small_obj_run >= 5:
                break
        else:
            small_obj_run = 0

    # fixed-point residual at the step actually used last
    f_fp = t.synthesis(prox(pen.p, t.analysis(f - used_tau * grad), used_tau * alpha * weights))
    fp_res = float(np.linalg.norm(f - f_fp))
    fp_ok = fp_res <= 10 * cfg.rel_tol * max(float(np.linalg.norm(f)), np.finfo(float).tiny)
    converged = bool((converged or small_obj_run >= 5) and fp_ok) or fp_res == 0.0
    if not converged:
        log.debug("PGD stopped after %d iterations without convergence (fp residual %.3e)",
                  k, fp_res)
    result = SolveResult(
        reconstruction=f,
        iterations=k,
        objective_trace=np.asarray(objs),
        converged=converged,
        final_step=used_tau,
        fixed_point_residual=fp_res,
        step_trace=np.asarray(steps),
        change_trace=np.asarray(changes),
    )
    if trace_path is not None:
        result.write_trace(trace_path)
    return result


def apriori_check(result, pen: Penalty, f_dagger, delta: float, alpha: float, eps) -> bool:
    """Does ``R(f_sol) <= R(f_dagger) + delta^2/(2 alpha) ||eps||^2_{V_N}`` hold (1% slack)?"""
    f_sol = result.reconstruction if isinstance(result, SolveResult) else result
    lhs = eval_R(pen, f_sol)
    bound = eval_R(pen, f_dagger)
    if delta != 0:
        bound += delta**2 / (2.0 * alpha) * weighted_residual_norm_sq(eps)
    return bool(lhs <= 1.01 * bound)
