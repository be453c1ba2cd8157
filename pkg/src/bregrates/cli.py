"""Command-line front end: ``bregrates {phantom,reconstruct,experiment,fit,diagnose}``.

Settings are resolved as builtin defaults, then the ``--paper-scale`` preset,
then a ``--config`` file, then explicit flags.  Each run writes
``manifest.json`` (resolved settings, seeds, library versions, output files)
next to its outputs.

Exit codes: 0 success, 1 user error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import shutil
import sys
import tempfile
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .core import (
    CapabilityError,
    ConvergenceError,
    DimensionError,
    DivergenceError,
    gaussian_noise,
    sample_angles,
    ANGLE_STREAM,
    NOISE_STREAM,
)
from .diagnostics import (
    MAX_DENSE_COLUMNS,
    adjoint_mismatch,
    besov_assumption_sum,
    effective_dimension,
    mass_defect,
)
from .experiments import (
    DESK_N_VALUES,
    PAPER_N_VALUES,
    SweepFailure,
    calibrate_c_alpha,
    fit_monomial,
    load_config,
    make_plan,
    output_stem,
    p_tag,
    radon_operator,
    read_raw_csv,
    run_realization,
    run_sweep,
    write_raw_csv,
    write_rate_plot,
    write_summary_csv,
    write_sweep_outputs,
)
from .io import read_csv_matrix, read_image, write_csv_matrix, write_pgm
from .penalty import bregman, make_penalty
from .phantom import BUILTIN, builtin_phantom
from .solver import SolverConfig, apriori_check, pgd_solve
from .source_condition import project_to_source_condition
from .wavelet import analysis, synthesis

log = logging.getLogger("bregrates")

OUTPUT_ENV = "BREGRATES_OUTPUT_DIR"

DEFAULTS = {
    "p": [1.5],
    "regime": ["decreasing"],
    "c_alpha": None,
    "c_delta": None,
    "side": 64,
    "n_theta": 180,
    "n_values": list(DESK_N_VALUES),
    "realizations": 10,
    "seed": 0,
    "workers": 1,
    "phantom": "ellipses",
    "input": None,
    "lambda_sc": None,
    "max_iters": 2000,
    "rel_tol": 1e-7,
    "bb_variant": "BB2",
    "calibrate": False,
    "paper_scale": False,
}

PAPER_SCALE = {
    "side": 128,
    "n_theta": 360,
    "n_values": list(PAPER_N_VALUES),
    "realizations": 30,
}

EXPERIMENT_DEFAULTS = {"p": [1.5, 4.0 / 3.0, 2.0], "regime": ["decreasing", "fixed"]}


class UserError(Exception):
    """Bad input that the user can fix; mapped to exit code 1."""


def _parse_p(text: str) -> float:
    text = text.strip()
    try:
        if "/" in text:
            num, den = text.split("/", 1)
            return float(num) / float(den)
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number or fraction: {text!r}") from None


def _parse_int_list(text: str):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON or key=value settings file")
    common.add_argument("--output-dir", type=Path,
                        help=f"where outputs go (default: ${OUTPUT_ENV} or ./bregrates-out)")
    common.add_argument("--seed", type=int)
    common.add_argument("--side", type=int, help="pixels per image side")
    common.add_argument("--n-theta", type=int, help="size of the fine angle grid on [0, pi)")
    common.add_argument("--paper-scale", action="store_true", default=None,
                        help="128x128 images, 360 angles, N = 36..162, 30 realizations")
    common.add_argument("--phantom", help=f"builtin phantom ({', '.join(BUILTIN)})")
    common.add_argument("--input", type=Path, help="phantom image file (.csv or .pgm)")
    common.add_argument("--lambda-sc", type=float, help="source-condition ridge parameter")
    common.add_argument("-v", "--verbose", action="count", default=0)

    solve = argparse.ArgumentParser(add_help=False)
    solve.add_argument("--p", type=_parse_p, action="append",
                       help="penalty exponent in (1, 2]; fractions like 4/3 are accepted")
    solve.add_argument("--regime", choices=["fixed", "decreasing"], action="append")
    solve.add_argument("--c-alpha", type=float, help="alpha constant, in units of kappa^2")
    solve.add_argument("--c-delta", type=float, help="noise constant, relative to max|A f|")
    solve.add_argument("--max-iters", type=int)
    solve.add_argument("--rel-tol", type=float)
    solve.add_argument("--bb-variant", choices=["BB1", "BB2"])

    parser = argparse.ArgumentParser(prog="bregrates", description="Regularised sparse-angle reconstruction and convergence-rate experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("phantom", parents=[common, solve],
                   help="make a ground truth satisfying the source condition")

    rec = sub.add_parser("reconstruct", parents=[common, solve],
                         help="one noisy reconstruction from N random angles")
    rec.add_argument("--n-angles", type=int, required=True)
    rec.add_argument("--realization", type=int, default=0)

    exp = sub.add_parser("experiment", parents=[common, solve],
                         help="Monte-Carlo sweep over N with a rate fit")
    exp.add_argument("--n-values", type=_parse_int_list)
    exp.add_argument("--realizations", type=int)
    exp.add_argument("--workers", type=int)
    exp.add_argument("--calibrate", action="store_true", default=None,
                     help="re-tune c_alpha on separate seeds before the sweep")
    exp.add_argument("--dry-run", action="store_true",
                     help="resolve the plan and write the manifest without solving")

    fit = sub.add_parser("fit", parents=[common], help="fit c N^beta to a raw or summary CSV")
    fit.add_argument("table", type=Path, help="raw records CSV or a CSV with columns N,mean")

    diag = sub.add_parser("diagnose", parents=[common, solve],
                          help="operator and penalty diagnostics report")
    diag.add_argument("--n-values", type=_parse_int_list)
    return parser


def resolve_settings(args) -> dict:
    settings = dict(DEFAULTS)
    if args.command == "experiment":
        settings.update(EXPERIMENT_DEFAULTS)
    file_cfg = {}
    if args.config is not None:
        try:
            file_cfg = load_config(args.config)
        except FileNotFoundError:
            raise UserError(f"config file not found: {args.config}") from None
        except (ValueError, json.JSONDecodeError) as exc:
            raise UserError(f"bad config file {args.config}: {exc}") from None
    cli = {k: v for k, v in vars(args).items() if v is not None and k in DEFAULTS}
    paper = cli.get("paper_scale", file_cfg.get("paper_scale", False))
    if paper:
        settings.update(PAPER_SCALE)
    for src in (file_cfg, cli):
        for k, v in src.items():
            if k in ("p", "regime") and not isinstance(v, list):
                v = [v]
            settings[k] = v
    settings["paper_scale"] = bool(paper)
    return settings


def _validate(settings, need_pow2=True):
    for p in settings["p"]:
        if not 1.0 < p <= 2.0:
            raise UserError(f"p must lie in (1, 2], got {p}")
        side = settings["side"]
        if need_pow2 and p < 2 and side & (side - 1):
            raise UserError(
                f"side {side} is not a power of two, which the Haar transform used for p < 2 "
                "needs; resample the image to 32, 64, 128, ..."
            )
    if settings["side"] < 2 or settings["n_theta"] < 1:
        raise UserError("side must be >= 2 and n_theta >= 1")


def _solver(settings) -> SolverConfig:
    try:
        return SolverConfig(max_iters=settings["max_iters"], rel_tol=settings["rel_tol"],
                            bb_variant=settings["bb_variant"])
    except ValueError as exc:
        raise UserError(str(exc)) from None


def _phantom_image(settings) -> np.ndarray:
    if settings["input"] is not None:
        path = Path(settings["input"])
        if not path.is_file():
            raise UserError(f"input image not found: {path}")
        try:
            img = read_image(path)
        except (ValueError, OSError) as exc:
            raise UserError(f"cannot read {path}: {exc}") from None
        if img.shape[0] != img.shape[1]:
            raise UserError(f"{path}: image must be square, got {img.shape}")
        settings["side"] = int(img.shape[0])
        return img
    try:
        return builtin_phantom(settings["phantom"], settings["side"])
    except KeyError:
        raise UserError(f"unknown phantom {settings['phantom']!r}; builtins: {', '.join(BUILTIN)}") from None


class Staging:
    """Write into a scratch directory; publish into ``final`` only on success."""

    def __init__(self, final: Path):
        self.final = final
        self.created = not final.exists()
        final.mkdir(parents=True, exist_ok=True)
        self.dir = Path(tempfile.mkdtemp(prefix=".staging-", dir=final))
        self.files = []

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.dir / name

    def publish(self):
        for name in self.files:
            src = self.dir / name
            if src.exists():
                os.replace(src, self.final / name)
        shutil.rmtree(self.dir, ignore_errors=True)

    def discard(self, keep=()):
        for name in keep:
            src = self.dir / name
            if src.exists():
                os.replace(src, self.final / name)
        shutil.rmtree(self.dir, ignore_errors=True)
        if self.created and not any(self.final.iterdir()):
            self.final.rmdir()


def _versions() -> dict:
    import scipy

    out = {"bregrates": __version__, "python": platform.python_version(),
           "numpy": np.__version__, "scipy": scipy.__version__}
    try:
        import matplotlib

        out["matplotlib"] = matplotlib.__version__
    except ImportError:
        pass
    return out


def _json_default(o):
    if isinstance(o, Path):
        return str(o)
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _dump_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def write_manifest(stage: Staging, command: str, argv, settings, extra=None, status="ok"):
    manifest = {
        "command": command,
        "argv": list(argv),
        "settings": settings,
        "seeds": {"base_seed": settings["seed"], "angle_stream": ANGLE_STREAM,
                  "noise_stream": NOISE_STREAM, "task_keys": "(N, realization)"},
        "versions": _versions(),
        "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "status": status,
        "outputs": sorted(f for f in stage.files if f != "manifest.json"),
    }
    if extra:
        manifest.update(extra)
    _dump_json(stage.path("manifest.json"), manifest)


# ------------------------------------------------------------------ commands

def cmd_phantom(settings, stage, argv):
    _validate(settings)
    img = _phantom_image(settings)
    _validate(settings)
    op = radon_operator(settings["side"], settings["n_theta"])
    results = {}
    for p in settings["p"]:
        pen = make_penalty(p, settings["side"])
        sc = project_to_source_condition(img, op, pen, lam_sc=settings["lambda_sc"])
        stem = p_tag(p)
        write_csv_matrix(stage.path(f"{stem}_f_dagger.csv"), sc.f_dagger)
        write_pgm(stage.path(f"{stem}_f_dagger.pgm"), sc.f_dagger)
        write_csv_matrix(stage.path(f"{stem}_w.csv"), sc.w)
        prov = sc.provenance(pen)
        prov.update(side=settings["side"], n_theta=settings["n_theta"],
                    source=str(settings["input"] or settings["phantom"]))
        _dump_json(stage.path(f"{stem}_provenance.json"), prov)
        results[stem] = prov
        print(f"p={p:.4g}: rel_change={sc.rel_change:.4f} "
              f"sc_residual/|A^T w|={sc.relative_sc_residual:.2e}")
    write_manifest(stage, "phantom", argv, settings, {"results": results})
    return 0


def _plans(settings):
    img = _phantom_image(settings)
    _validate(settings)
    for p in settings["p"]:
        for regime in settings["regime"]:
            try:
                yield make_plan(
                    p, regime, c_alpha=settings["c_alpha"], c_delta=settings["c_delta"],
                    side=settings["side"], n_theta=settings["n_theta"],
                    n_values=settings["n_values"], realizations=settings["realizations"],
                    seed=settings["seed"], phantom=img, lam_sc=settings["lambda_sc"],
                    solver=_solver(settings),
                )
            except KeyError as exc:
                raise UserError(f"{exc.args[0]}") from None
            except ValueError as exc:
                raise UserError(str(exc)) from None


def cmd_reconstruct(settings, stage, argv, n_angles, index):
    _validate(settings)
    if not 1 <= n_angles <= settings["n_theta"]:
        raise UserError(f"--n-angles must lie in [1, {settings['n_theta']}]")
    settings = dict(settings, n_values=[n_angles], realizations=index + 1)
    report = {}
    for plan in _plans(settings):
        op = radon_operator(plan.side, plan.n_theta)
        pen = make_penalty(plan.p, plan.side)
        key = plan.base_seed.child(n_angles, index)
        angles = sample_angles(n_angles, plan.n_theta, key.with_stream(ANGLE_STREAM))
        eps = gaussian_noise((n_angles, op.n_dtc), key.with_stream(NOISE_STREAM))
        sub = op.subsample(angles)
        delta = plan.regime.delta(n_angles, plan.sino_max)
        alpha = plan.schedule(n_angles)
        stem = output_stem(plan.p, plan.regime.kind)
        res = pgd_solve(sub, sub.apply(plan.phantom.f_dagger) + delta * eps, pen, alpha,
                        plan.solver, trace_path=stage.path(f"{stem}_trace.csv"))
        write_csv_matrix(stage.path(f"{stem}_reconstruction.csv"), res.reconstruction)
        write_pgm(stage.path(f"{stem}_reconstruction.pgm"), res.reconstruction)
        entry = {
            "angles": list(angles.indices), "delta": delta, "alpha": alpha,
            "bregman": bregman(pen, res.reconstruction, plan.phantom.f_dagger),
            "objective": res.objective, "iterations": res.iterations,
            "converged": res.converged,
            "apriori_ok": apriori_check(res, pen, plan.phantom.f_dagger, delta, alpha, eps),
        }
        report[stem] = entry
        print(f"{stem}: bregman={entry['bregman']:.6g} iterations={res.iterations} "
              f"converged={res.converged}")
    _dump_json(stage.path("reconstruct.json"), report)
    write_manifest(stage, "reconstruct", argv, settings, {"results": report})
    return 0


def cmd_experiment(settings, stage, argv, dry_run):
    _validate(settings)
    if settings["workers"] < 1:
        raise UserError("--workers must be at least 1")
    plans = list(_plans(settings))
    described = [pl.describe() for pl in plans]
    if dry_run:
        write_manifest(stage, "experiment", argv, settings, {"plans": described, "dry_run": True})
        print(f"dry run: {len(plans)} plan(s), "
              f"{sum(len(pl.n_values) * pl.realizations for pl in plans)} solves, none run")
        return 0
    fits, calibrations = {}, {}
    for i, plan in enumerate(plans):
        stem = output_stem(plan.p, plan.regime.kind)
        if settings["calibrate"]:
            cal = calibrate_c_alpha(plan, workers=settings["workers"])
            calibrations[stem] = {"c_alpha": cal.c_alpha, "beta": cal.beta,
                                  "trials": cal.trials}
            plan = replace(plan, schedule=replace(plan.schedule, c_alpha=cal.c_alpha))
            described[i] = plan.describe()
        try:
            result = run_sweep(plan, workers=settings["workers"])
        except SweepFailure as exc:
            write_raw_csv(stage.path(f"{stem}_raw.csv"), exc.records)
            write_manifest(stage, "experiment", argv, settings,
                           {"plans": described, "failed_plan": stem, "fits": fits}, "failed")
            stage.discard(keep=stage.files)
            print(f"error: {stem}: {exc}; raw records kept in {stage.final}", file=sys.stderr)
            return 2
        for kind, path in write_sweep_outputs(stage.dir, result).items():
            stage.files.append(Path(path).name)
        fits[stem] = {"c": result.fit.c, "beta": result.fit.beta,
                      "r_squared": result.fit.r_squared, "failures": result.failures}
        print(f"{stem}: beta={result.fit.beta:.4f} c={result.fit.c:.4g} "
              f"r2={result.fit.r_squared:.4f} failures={result.failures}")
    extra = {"plans": described, "fits": fits}
    if calibrations:
        extra["calibration"] = calibrations
    write_manifest(stage, "experiment", argv, settings, extra)
    return 0


def _read_table(path: Path):
    if not path.is_file():
        raise UserError(f"table not found: {path}")
    header = path.read_text().splitlines()[0].split(",") if path.stat().st_size else []
    if "bregman" in header:
        records = [r for r in read_raw_csv(path) if not r.failed]
        ns = sorted({r.N for r in records})
        vals = [np.array([r.bregman for r in records if r.N == n]) for n in ns]
        means = [v.mean() for v in vals]
        sds = [v.std(ddof=1) if v.size > 1 else 0.0 for v in vals]
        return ns, means, sds
    if header and header[0].strip() == "N":
        import csv

        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        ns = [int(float(r[0])) for r in rows]
        means = [float(r[1]) for r in rows]
        sds = [float(r[2]) if len(r) > 2 and header[2].strip() == "stddev" else 0.0 for r in rows]
        return ns, means, sds
    try:
        mat = read_csv_matrix(path)
    except ValueError as exc:
        raise UserError(str(exc)) from None
    return mat[:, 0].astype(int).tolist(), mat[:, 1].tolist(), [0.0] * mat.shape[0]


def cmd_fit(settings, stage, argv, table: Path):
    ns, means, sds = _read_table(table)
    try:
        fit = fit_monomial(ns, means, sds)
    except ValueError as exc:
        raise UserError(f"{table}: {exc}") from None
    stem = table.stem.removesuffix("_raw").removesuffix("_summary") + "_fit"
    write_summary_csv(stage.path(f"{stem}_summary.csv"), fit)
    write_rate_plot(stage.path(f"{stem}.svg"), fit, table.stem)
    print(f"beta={fit.beta:.4f} c={fit.c:.4g} r2={fit.r_squared:.4f}")
    write_manifest(stage, "fit", argv, settings,
                   {"input": str(table), "fit": {"c": fit.c, "beta": fit.beta,
                                                 "r_squared": fit.r_squared}})
    return 0


def cmd_diagnose(settings, stage, argv):
    _validate(settings)
    side, n_theta = settings["side"], settings["n_theta"]
    op = radon_operator(side, n_theta)
    rng = np.random.default_rng(settings["seed"])
    img = _phantom_image(settings)
    values = {"side": side, "n_theta": n_theta, "n_dtc": op.n_dtc,
              "dense_cap_columns": MAX_DENSE_COLUMNS}
    values["adjoint_relative_error"] = adjoint_mismatch(op, 20, settings["seed"])
    values["mass_defect"] = mass_defect(op, img)
    values["operator_norm"] = op.norm_estimate
    values["kappa_per_angle_norm"] = op.per_angle_norm_bound

    if side & (side - 1) == 0:
        pen = make_penalty(1.5, side)
        x = rng.standard_normal((side, side))
        c = analysis(pen.transform, x)
        values["haar_roundtrip_error"] = float(np.abs(synthesis(pen.transform, c) - x).max())
        values["haar_parseval_error"] = float(abs(np.sum(c * c) - np.sum(x * x)) / np.sum(x * x))

    alphas = np.logspace(-2, 2, 9)
    try:
        ed = effective_dimension(op, alphas)
        values["effective_dimension"] = {"alpha": alphas.tolist(), "value": ed.tolist(),
                                         "strictly_decreasing": bool(np.all(np.diff(ed) < 0))}
    except CapabilityError as exc:
        values["effective_dimension"] = {"skipped": str(exc)}

    values["besov_sum"] = {}
    values["apriori"] = {}
    for p in settings["p"]:
        pen = make_penalty(p, side)
        tag = f"p={p:.4g}"
        if p < 2:
            bs = besov_assumption_sum(op, pen, side * side)
            values["besov_sum"][tag] = {"total": bs.total,
                                        "level_subtotals": bs.level_subtotals}
        for plan in _plans(dict(settings, p=[p], n_values=settings["n_values"][:1],
                                realizations=1)):
            rec = run_realization(plan, plan.n_values[0], 0)
            values["apriori"][f"{tag} {plan.regime.kind}"] = {
                "N": rec.N, "apriori_ok": rec.apriori_ok, "converged": rec.converged,
                "bregman": rec.bregman}

    lines = [f"bregrates diagnostics: side={side}, n_theta={n_theta}, n_dtc={op.n_dtc}",
             f"adjoint identity, worst relative gap: {values['adjoint_relative_error']:.3e}",
             f"per-angle mass defect (relative):     {values['mass_defect']:.3e}",
             f"operator norm:                        {values['operator_norm']:.6g}",
             f"largest single-angle block norm:      {values['kappa_per_angle_norm']:.6g}"]
    if "haar_roundtrip_error" in values:
        lines += [f"Haar round trip (max abs):            {values['haar_roundtrip_error']:.3e}",
                  f"Haar Parseval (relative):             {values['haar_parseval_error']:.3e}"]
    ed = values["effective_dimension"]
    if "skipped" in ed:
        lines.append(f"effective dimension: skipped ({ed['skipped']})")
    else:
        lines.append("effective dimension (alpha -> value):")
        lines += [f"  {a:10.4g}  {v:12.4f}" for a, v in zip(ed["alpha"], ed["value"])]
        lines.append(f"  strictly decreasing: {ed['strictly_decreasing']}")
    for tag, bs in values["besov_sum"].items():
        lines.append(f"wavelet summability sum ({tag}): {bs['total']:.6g}")
        lines += [f"  level {lev}: {v:.6g}" for lev, v in sorted(bs["level_subtotals"].items())]
    for tag, a in values["apriori"].items():
        lines.append(f"a-priori bound ({tag}, N={a['N']}): {'holds' if a['apriori_ok'] else 'VIOLATED'}")
    stage.path("diagnostics.txt").write_text("\n".join(lines) + "\n")
    _dump_json(stage.path("diagnostics.json"), values)
    print("\n".join(lines))
    write_manifest(stage, "diagnose", argv, settings)
    return 0


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and 1
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    stage = None
    try:
        settings = resolve_settings(args)
        out = args.output_dir or Path(os.environ.get(OUTPUT_ENV, "bregrates-out"))
        if args.command == "fit" and not args.table.is_file():
            raise UserError(f"table not found: {args.table}")
        if settings["input"] is not None and not Path(settings["input"]).is_file():
            raise UserError(f"input image not found: {settings['input']}")
        stage = Staging(Path(out))
        if args.command == "phantom":
            code = cmd_phantom(settings, stage, argv)
        elif args.command == "reconstruct":
            code = cmd_reconstruct(settings, stage, argv, args.n_angles, args.realization)
        elif args.command == "experiment":
            code = cmd_experiment(settings, stage, argv, args.dry_run)
            if code != 0:
                return code
        elif args.command == "fit":
            code = cmd_fit(settings, stage, argv, args.table)
        else:
            code = cmd_diagnose(settings, stage, argv)
        stage.publish()
        return code
    except (UserError, DimensionError, CapabilityError, FileNotFoundError) as exc:
        if stage is not None:
            stage.discard()
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DivergenceError, ConvergenceError, FloatingPointError, SweepFailure) as exc:
        if stage is not None:
            stage.discard()
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        if stage is not None:
            stage.discard()
        print(f"error: {exc}", file=sys.stderr)
        return 1
