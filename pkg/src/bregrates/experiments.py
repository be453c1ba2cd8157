"""Monte-Carlo convergence-rate harness.

For every number of sampled angles ``N`` a plan draws ``realizations``
independent angle subsets and noise vectors, reconstructs with PGD and
records the symmetric Bregman distance to the ground truth.  The mean
distance per ``N`` is fitted by a monomial ``c N**beta`` on log-log axes.

Two noise regimes are supported:

* ``fixed``: ``delta = c_delta * max|A f|`` and ``alpha = c_alpha kappa^2 N^(-1/3)``
* ``decreasing``: ``delta = c_delta * max|A f| / N`` and ``alpha = c_alpha kappa^2 / N``

``kappa`` is the largest single-angle block norm of the forward operator.
Writing ``alpha`` in units of ``kappa^2`` makes ``c_alpha`` independent of
how the projector is normalised (the data term scales with ``kappa^2``).

Every random draw comes from a stream keyed by ``(base seed, N, index)``, so
results do not depend on scheduling or on the number of worker processes.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

import numpy as np

from .core import (
    ANGLE_STREAM,
    NOISE_STREAM,
    ConvergenceError,
    DivergenceError,
    RngSeed,
    gaussian_noise,
    sample_angles,
)
from .penalty import Penalty, bregman, make_penalty
from .phantom import builtin_phantom
from .radon import RadonOperator
from .solver import SolverConfig, apriori_check, pgd_solve
from .source_condition import SourceConditionResult, project_to_source_condition

log = logging.getLogger(__name__)

DESK_N_VALUES = (18, 25, 32, 40, 50, 64, 81)
PAPER_N_VALUES = tuple(range(36, 163, 14))

# Default c_alpha per (p, regime), in units of kappa^2.
C_ALPHA_TABLE = {
    (1.5, "fixed"): 0.010,
    (4.0 / 3.0, "fixed"): 0.030,
    (2.0, "fixed"): 0.015,
    (1.5, "decreasing"): 0.3,
    (4.0 / 3.0, "decreasing"): 0.3,
    (2.0, "decreasing"): 0.5,
}

THEORETICAL_BETA = {"fixed": -1.0 / 3.0, "decreasing": -1.0}

# Child key separating calibration draws from evaluation draws.
CALIBRATION_KEY = 7_919

MAX_FAILURE_FRACTION = 0.05


def default_c_alpha(p: float, regime: str) -> float:
    for (pp, rr), c in C_ALPHA_TABLE.items():
        if rr == regime and abs(pp - p) < 1e-9:
            return c
    raise KeyError(f"no tabulated c_alpha for p={p}, regime={regime!r}; pass one explicitly")


@dataclass(frozen=True)
class NoiseRegime:
    """``kind`` is ``fixed`` or ``decreasing``; ``c_delta`` is relative to ``max|A f|``."""

    kind: str
    c_delta: float

    def __post_init__(self):
        if self.kind not in ("fixed", "decreasing"):
            raise ValueError(f"regime must be 'fixed' or 'decreasing', got {self.kind!r}")
        if not self.c_delta > 0:
            raise ValueError("c_delta must be positive")

    @classmethod
    def default(cls, kind: str, n0: int) -> "NoiseRegime":
        """0.01 for fixed noise, ``0.02 * n0`` for decreasing noise."""
        return cls(kind, 0.01 if kind == "fixed" else 0.02 * n0)

    def delta(self, n: int, sino_max: float) -> float:
        level = self.c_delta * sino_max
        return level if self.kind == "fixed" else level / n


@dataclass(frozen=True)
class AlphaSchedule:
    c_alpha: float
    exponent: float
    scale: float = 1.0

    def __post_init__(self):
        if not (self.c_alpha > 0 and self.scale > 0):
            raise ValueError("c_alpha and scale must be positive")

    @classmethod
    def for_regime(cls, kind: str, c_alpha: float, scale: float = 1.0) -> "AlphaSchedule":
        return cls(c_alpha, -1.0 / 3.0 if kind == "fixed" else -1.0, scale)

    def __call__(self, n: int) -> float:
        return self.c_alpha * self.scale * float(n) ** self.exponent


@dataclass(frozen=True)
class ExperimentPlan:
    p: float
    regime: NoiseRegime
    schedule: AlphaSchedule
    n_values: tuple
    realizations: int
    phantom: SourceConditionResult = field(repr=False, compare=False)
    base_seed: RngSeed
    n_theta: int
    side: int
    sino_max: float
    solver: SolverConfig = SolverConfig()

    def __post_init__(self):
        nv = tuple(int(n) for n in self.n_values)
        object.__setattr__(self, "n_values", nv)
        if len(nv) < 1 or any(b <= a for a, b in zip(nv, nv[1:])):
            raise ValueError("N values must be strictly increasing")
        if nv[0] < 1 or nv[-1] > self.n_theta:
            raise ValueError(f"N values must lie in [1, {self.n_theta}]")
        if self.realizations < 1:
            raise ValueError("need at least one realization")

    def describe(self) -> dict:
        """JSON-friendly summary (no arrays)."""
        return {
            "p": self.p,
            "regime": self.regime.kind,
            "c_delta": self.regime.c_delta,
            "c_alpha": self.schedule.c_alpha,
            "alpha_exponent": self.schedule.exponent,
            "alpha_scale_kappa_sq": self.schedule.scale,
            "n_values": list(self.n_values),
            "realizations": self.realizations,
            "seed": self.base_seed.seed,
            "seed_keys": list(self.base_seed.keys),
            "n_theta": self.n_theta,
            "side": self.side,
            "sino_max": self.sino_max,
            "lambda_sc": self.phantom.lam_sc,
            "solver": asdict(self.solver),
        }


@lru_cache(maxsize=4)
def radon_operator(side: int, n_theta: int) -> RadonOperator:
    """Per-process cache: building the matrix dominates small sweeps."""
    return RadonOperator(side, n_theta)


def plan_penalty(plan: ExperimentPlan) -> Penalty:
    return make_penalty(plan.p, plan.side)


def make_plan(p: float, regime: str, *, c_alpha=None, c_delta=None, side: int = 64,
              n_theta: int = 180, n_values=DESK_N_VALUES, realizations: int = 10,
              seed: int = 0, phantom="ellipses", lam_sc=None,
              solver: SolverConfig | None = None,
              source: SourceConditionResult | None = None) -> ExperimentPlan:
    """Build a plan, generating the ground truth through the source condition.

    ``phantom`` is a builtin name or an image array.  ``source`` skips the
    projection step when a prepared ground truth is already at hand.
    """
    op = radon_operator(side, n_theta)
    pen = make_penalty(p, side)
    if source is None:
        f0 = builtin_phantom(phantom, side) if isinstance(phantom, str) else phantom
        source = project_to_source_condition(f0, op, pen, lam_sc=lam_sc)
    n_values = tuple(int(n) for n in n_values)
    if c_delta is None:
        noise = NoiseRegime.default(regime, min(n_values))
    else:
        noise = NoiseRegime(regime, float(c_delta))
    if c_alpha is None:
        c_alpha = default_c_alpha(p, regime)
    kappa_sq = op.per_angle_norm_bound**2
    return ExperimentPlan(
        p=float(p),
        regime=noise,
        schedule=AlphaSchedule.for_regime(regime, float(c_alpha), kappa_sq),
        n_values=n_values,
        realizations=int(realizations),
        phantom=source,
        base_seed=RngSeed(int(seed)),
        n_theta=int(n_theta),
        side=int(side),
        sino_max=float(np.abs(op.apply(source.f_dagger)).max()),
        solver=solver or SolverConfig(),
    )


@dataclass
class RealizationRecord:
    p: float
    regime: str
    N: int
    realization: int
    seed: int
    delta: float
    alpha: float
    bregman: float = float("nan")
    objective: float = float("nan")
    iterations: int = 0
    converged: bool = False
    apriori_ok: bool = False
    failed: bool = False
    error: str = ""

    @property
    def key(self):
        return (self.N, self.realization)


class RealizationError(RuntimeError):
    """A single reconstruction failed; carries the seed provenance."""

    def __init__(self, message, seed, n, index):
        super().__init__(f"{message} (seed={seed}, N={n}, realization={index})")
        self.seed, self.n, self.index = seed, n, index


def _draw(plan: ExperimentPlan, n: int, index: int):
    key = plan.base_seed.child(n, index)
    angles = sample_angles(n, plan.n_theta, key.with_stream(ANGLE_STREAM))
    eps = gaussian_noise((n, radon_operator(plan.side, plan.n_theta).n_dtc),
                         key.with_stream(NOISE_STREAM))
    return angles, eps


def run_realization(plan: ExperimentPlan, n: int, index: int) -> RealizationRecord:
    """One reconstruction for ``(N, index)``; raises :class:`RealizationError` on failure."""
    if n not in plan.n_values:
        raise ValueError(f"N={n} is not part of the plan")
    if not 0 <= index < plan.realizations:
        raise ValueError(f"realization index {index} outside [0, {plan.realizations})")
    op = radon_operator(plan.side, plan.n_theta)
    pen = plan_penalty(plan)
    f_true = plan.phantom.f_dagger
    angles, eps = _draw(plan, n, index)
    sub = op.subsample(angles)
    delta = plan.regime.delta(n, plan.sino_max)
    alpha = plan.schedule(n)
    g = sub.apply(f_true) + delta * eps
    rec = RealizationRecord(plan.p, plan.regime.kind, n, index, plan.base_seed.seed, delta, alpha)
    try:
        res = pgd_solve(sub, g, pen, alpha, plan.solver)
    except (DivergenceError, ConvergenceError, FloatingPointError) as exc:
        raise RealizationError(str(exc), plan.base_seed.seed, n, index) from exc
    rec.bregman = bregman(pen, res.reconstruction, f_true)
    rec.objective = res.objective
    rec.iterations = res.iterations
    rec.converged = res.converged
    rec.apriori_ok = apriori_check(res, pen, f_true, delta, alpha, eps)
    return rec


def _safe_realization(plan, n, index) -> RealizationRecord:
    try:
        return run_realization(plan, n, index)
    except RealizationError as exc:
        log.warning("%s", exc)
        return RealizationRecord(plan.p, plan.regime.kind, n, index, plan.base_seed.seed,
                                 plan.regime.delta(n, plan.sino_max), plan.schedule(n),
                                 failed=True, error=str(exc))


_WORKER_PLAN = None


def _init_worker(plan):
    global _WORKER_PLAN
    _WORKER_PLAN = plan


def _worker_task(key):
    return _safe_realization(_WORKER_PLAN, *key)


@dataclass
class RateFitResult:
    c: float
    beta: float
    per_N_means: np.ndarray
    per_N_stddevs: np.ndarray
    r_squared: float
    n_values: np.ndarray = None


def fit_monomial(n_values, means, stddevs=None) -> RateFitResult:
    """Least-squares fit of ``log(mean) = log(c) + beta log(N)``."""
    n = np.asarray(n_values, dtype=np.float64)
    m = np.asarray(means, dtype=np.float64)
    if n.shape != m.shape or n.ndim != 1:
        raise ValueError("N values and means must be 1-D of equal length")
    if n.size < 2:
        raise ValueError("need at least two points to fit")
    if np.any(m <= 0) or np.any(n <= 0):
        raise ValueError("means and N values must be positive")
    x, y = np.log(n), np.log(m)
    beta, log_c = np.polyfit(x, y, 1)
    ss_res = float(np.sum((y - (log_c + beta * x)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    sd = np.zeros_like(m) if stddevs is None else np.asarray(stddevs, dtype=np.float64)
    return RateFitResult(float(np.exp(log_c)), float(beta), m, sd, r2, n)


class SweepFailure(RuntimeError):
    """Too many realizations failed; ``records`` holds everything that ran."""

    def __init__(self, message, records):
        super().__init__(message)
        self.records = records


@dataclass
class SweepResult:
    plan: ExperimentPlan
    fit: RateFitResult
    records: list

    @property
    def failures(self) -> int:
        return sum(r.failed for r in self.records)


def run_records(plan: ExperimentPlan, workers: int = 1) -> list:
    """All realization records, sorted by ``(N, index)``."""
    keys = [(n, i) for n in plan.n_values for i in range(plan.realizations)]
    if workers <= 1:
        records = [_safe_realization(plan, n, i) for n, i in keys]
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=(plan,)) as pool:
            records = list(pool.map(_worker_task, keys, chunksize=1))
    return sorted(records, key=lambda r: r.key)


def summarize(plan: ExperimentPlan, records) -> RateFitResult:
    means, sds = [], []
    for n in plan.n_values:
        vals = np.array([r.bregman for r in records if r.N == n and not r.failed])
        if vals.size == 0:
            raise SweepFailure(f"every realization failed at N={n}", records)
        means.append(vals.mean())
        sds.append(vals.std(ddof=1) if vals.size > 1 else 0.0)
    return fit_monomial(plan.n_values, means, sds)


def run_sweep(plan: ExperimentPlan, workers: int = 1) -> SweepResult:
    """Run every ``(N, index)`` task and fit the mean Bregman distance.

    Failed realizations are dropped if they make up less than 5% of the
    tasks; otherwise :class:`SweepFailure` is raised.
    """
    records = run_records(plan, workers)
    failed = sum(r.failed for r in records)
    if failed and failed >= MAX_FAILURE_FRACTION * len(records):
        raise SweepFailure(f"{failed} of {len(records)} realizations failed", records)
    return SweepResult(plan, summarize(plan, records), records)


@dataclass
class CalibrationResult:
    c_alpha: float
    beta: float
    target: float
    trials: list


def calibrate_c_alpha(plan: ExperimentPlan, target_beta: float | None = None,
                      realizations: int = 3, tol: float = 0.05, factor: float = 4.0,
                      max_expand: int = 8, max_bisect: int = 6,
                      workers: int = 1) -> CalibrationResult:
    """Pick ``c_alpha`` whose fitted decay is closest to ``target_beta``.

    Uses draws from a child seed that never overlaps the evaluation draws.
    Larger ``c_alpha`` flattens the decay, so the search first brackets the
    target by multiplying or dividing by ``factor`` and then bisects in
    ``log c_alpha``.
    """
    if target_beta is None:
        target_beta = THEORETICAL_BETA[plan.regime.kind]
    probe = replace(plan, realizations=realizations, base_seed=plan.base_seed.child(CALIBRATION_KEY))
    trials = []

    def beta_at(c):
        cand = replace(probe, schedule=replace(probe.schedule, c_alpha=c))
        try:
            b = run_sweep(cand, workers).fit.beta
        except SweepFailure:
            b = float("nan")
        trials.append((c, b))
        log.info("calibration p=%g %s: c_alpha=%.4g beta=%.3f", plan.p, plan.regime.kind, c, b)
        return b

    c = plan.schedule.c_alpha
    b = beta_at(c)
    lo = hi = None
    if not math.isnan(b) and abs(b - target_beta) <= tol:
        return CalibrationResult(c, b, target_beta, trials)
    if math.isnan(b) or b < target_beta:
        lo = c
        for _ in range(max_expand):
            c *= factor
            b = beta_at(c)
            if not math.isnan(b) and b >= target_beta:
                hi = c
                break
            lo = c
    else:
        hi = c
        for _ in range(max_expand):
            c /= factor
            b = beta_at(c)
            if math.isnan(b) or b < target_beta:
                lo = c
                break
            hi = c
    if lo is not None and hi is not None:
        for _ in range(max_bisect):
            if min(abs(tb - target_beta) for _, tb in trials if not math.isnan(tb)) <= tol:
                break
            mid = math.sqrt(lo * hi)
            b = beta_at(mid)
            if math.isnan(b) or b < target_beta:
                lo = mid
            else:
                hi = mid
    valid = [(c, b) for c, b in trials if not math.isnan(b)]
    if not valid:
        raise SweepFailure("calibration failed for every c_alpha tried", [])
    best_c, best_b = min(valid, key=lambda t: abs(t[1] - target_beta))
    return CalibrationResult(best_c, best_b, target_beta, trials)


# ---------------------------------------------------------------- output files

RAW_COLUMNS = ["p", "regime", "N", "realization", "seed", "delta", "alpha", "bregman",
               "objective", "iterations", "converged"]
SUMMARY_COLUMNS = ["N", "mean_bregman", "stddev", "fit_c", "fit_beta", "r_squared"]


def _num(x) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def write_raw_csv(path, records):
    """One row per realization.  Failed rows have ``converged = failed``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RAW_COLUMNS)
        for r in records:
            status = "failed" if r.failed else ("true" if r.converged else "false")
            w.writerow([repr(float(r.p)), r.regime, r.N, r.realization, r.seed, _num(r.delta),
                        _num(r.alpha), _num(r.bregman), _num(r.objective), r.iterations, status])


def read_raw_csv(path) -> list:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            flo = lambda k: float(row[k]) if row[k] else float("nan")  # noqa: E731
            out.append(RealizationRecord(
                p=float(row["p"]), regime=row["regime"], N=int(row["N"]),
                realization=int(row["realization"]), seed=int(row["seed"]),
                delta=flo("delta"), alpha=flo("alpha"), bregman=flo("bregman"),
                objective=flo("objective"), iterations=int(row["iterations"]),
                converged=row["converged"] == "true", failed=row["converged"] == "failed",
            ))
    return out


def write_summary_csv(path, fit: RateFitResult):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for n, m, s in zip(fit.n_values, fit.per_N_means, fit.per_N_stddevs):
            w.writerow([int(n), repr(float(m)), repr(float(s)), repr(fit.c), repr(fit.beta),
                        repr(fit.r_squared)])


def write_rate_plot(path, fit: RateFitResult, title: str = ""):
    """Log-log SVG: mean distance solid blue, fitted monomial dashed black."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "bregrates", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5, 4))
        n = np.asarray(fit.n_values, dtype=float)
        ax.loglog(n, fit.per_N_means, "-o", color="tab:blue", label="mean Bregman distance")
        ax.loglog(n, fit.c * n**fit.beta, "--", color="black",
                  label=f"{fit.c:.3g} N^{fit.beta:.3f}")
        ax.set_xlabel("N (sampled angles)")
        ax.set_ylabel("mean Bregman distance")
        if title:
            ax.set_title(title)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def p_tag(p: float) -> str:
    """File-name tag: ``p3-2``, ``p4-3``, ``p2`` or ``p1.7``."""
    for tag, val in (("p3-2", 1.5), ("p4-3", 4.0 / 3.0), ("p2", 2.0)):
        if abs(p - val) < 1e-9:
            return tag
    return f"p{p:g}"


def output_stem(p: float, regime: str) -> str:
    return f"{p_tag(p)}_{regime}"


def write_sweep_outputs(out_dir, result: SweepResult) -> dict:
    out_dir = Path(out_dir)
    stem = output_stem(result.plan.p, result.plan.regime.kind)
    paths = {
        "raw": out_dir / f"{stem}_raw.csv",
        "summary": out_dir / f"{stem}_summary.csv",
        "plot": out_dir / f"{stem}.svg",
    }
    write_raw_csv(paths["raw"], result.records)
    write_summary_csv(paths["summary"], result.fit)
    write_rate_plot(paths["plot"], result.fit, f"p = {result.plan.p:.4g}, {result.plan.regime.kind} noise")
    return {k: str(v) for k, v in paths.items()}


# ---------------------------------------------------------------- config files

def _exponent(v):
    if isinstance(v, list):
        return [_exponent(x) for x in v]
    return float(Fraction(str(v).strip()))


CONFIG_KEYS = {
    "p": _exponent,
    "regime": lambda v: [str(x) for x in v] if isinstance(v, list) else str(v),
    "c_alpha": float,
    "c_delta": float,
    "side": int,
    "n_theta": int,
    "n_values": lambda v: [int(x) for x in (v if isinstance(v, list) else str(v).split(","))],
    "realizations": int,
    "seed": int,
    "workers": int,
    "phantom": str,
    "lambda_sc": float,
    "max_iters": int,
    "rel_tol": float,
    "bb_variant": str,
    "calibrate": lambda v: v if isinstance(v, bool) else str(v).lower() in ("1", "true", "yes"),
    "paper_scale": lambda v: v if isinstance(v, bool) else str(v).lower() in ("1", "true", "yes"),
    "input": str,
}


def parse_config_text(text: str) -> dict:
    """JSON object, or ``key = value`` lines with ``#`` comments."""
    stripped = text.strip()
    if not stripped:
        return {}
    if stripped.startswith("{"):
        raw = json.loads(stripped)
    else:
        raw = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
            k, v = line.split("=", 1)
            raw[k.strip()] = v.strip()
    out = {}
    for k, v in raw.items():
        key = k.replace("-", "_")
        if key not in CONFIG_KEYS:
            raise ValueError(f"unknown config key {k!r}; known keys: {', '.join(sorted(CONFIG_KEYS))}")
        out[key] = CONFIG_KEYS[key](v)
    return out


def load_config(path) -> dict:
    return parse_config_text(Path(path).read_text())
