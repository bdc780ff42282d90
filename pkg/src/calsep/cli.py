"""Command-line harness: gen, run, check, metrics subcommands."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__, metrics
from .bench import ExperimentConfig, rows_to_csv, run_experiment, summarize
from .matio import MatrixParseError, read_matrix, write_matrix
from .numerics import NotPositiveDefiniteError, SpdMatrix
from .objective import CovariancePair, spectral_feasibility
from .synth import gen_instance

log = logging.getLogger("calsep")

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging() -> None:
    raw = os.environ.get("CALSEP_LOG", "error").lower()
    if raw not in LOG_LEVELS:
        raise SystemExit(f"CALSEP_LOG must be one of {sorted(LOG_LEVELS)}, got {raw!r}")
    logging.basicConfig(level=LOG_LEVELS[raw], format="%(levelname)s %(name)s: %(message)s")


def _load_config(path: str) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SystemExit(f"{path}: invalid JSON config: {exc}") from exc
    try:
        return ExperimentConfig.from_dict(raw)
    except (ValueError, TypeError) as exc:
        raise SystemExit(f"{path}: {exc}") from exc


def cmd_gen(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    gt = gen_instance(args.l, args.h, args.seed)
    write_matrix(out_dir / "sigma_l.csv", gt.cov.sigma_l.mat)
    write_matrix(out_dir / "sigma_h.csv", gt.cov.sigma_h.mat)
    write_matrix(out_dir / "v_star.csv", gt.v_star.v)
    write_matrix(out_dir / "b_star.csv", gt.b_star)
    print(f"wrote sigma_l.csv sigma_h.csv v_star.csv b_star.csv to {out_dir}")
    return 0


def cmd_run(args) -> int:
    cfg = _load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, out=args.out)
    if cfg.out is None:
        raise SystemExit("no output path: set 'out' in the config or pass --out")
    rows, meta = run_experiment(cfg, jobs=args.jobs)
    out_path = Path(cfg.out)
    if out_path.parent != Path(""):
        out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(rows_to_csv(rows))
    meta["version"] = __version__
    sidecar = out_path.with_suffix(out_path.suffix + ".meta.json")
    sidecar.write_text(json.dumps(meta, indent=2, default=str) + "\n")
    summary = summarize(rows)
    print(json.dumps({"out": str(out_path), "summary": summary}, indent=2))
    return 0


def _cov_for_check(cfg: ExperimentConfig) -> CovariancePair:
    if cfg.sigma_l_file is not None:
        sigma_l = read_matrix(cfg.sigma_l_file)
        sigma_h = read_matrix(cfg.sigma_h_file)
        if sigma_l.shape[0] != sigma_l.shape[1] or sigma_h.shape[0] != sigma_h.shape[1]:
            raise MatrixParseError("covariance files must be square")
        return CovariancePair(SpdMatrix(sigma_l), SpdMatrix(sigma_h))
    from .bench import child_seed

    return gen_instance(cfg.l, cfg.h, child_seed(cfg.seed, 0, 0)).cov


def cmd_check(args) -> int:
    cfg = _load_config(args.config)
    try:
        cov = _cov_for_check(cfg)
    except (MatrixParseError, NotPositiveDefiniteError, ValueError) as exc:
        raise SystemExit(f"cannot load covariances: {exc}") from exc
    report = spectral_feasibility(cov)
    for i in range(cov.h):
        lo, hi = report.lam[i], report.lam[i + cov.l - cov.h]
        print(f"index {i}: {lo:.6g} <= {report.kappa[i]:.6g} <= {hi:.6g}")
    if report.feasible:
        print("feasible: interlacing holds")
        return 0
    for idx, kappa, lo, hi in report.violations:
        print(f"violation at index {idx}: {kappa:.6g} outside [{lo:.6g}, {hi:.6g}]")
    print("infeasible: no orthonormal map can align these covariances")
    return 1


def cmd_metrics(args) -> int:
    v_hat = read_matrix(args.v_hat)
    v_star = read_matrix(args.v_star)
    cov = None
    if args.sigma_l and args.sigma_h:
        cov = CovariancePair(SpdMatrix(read_matrix(args.sigma_l)), SpdMatrix(read_matrix(args.sigma_h)))
    rec = metrics.evaluate(v_hat, v_star, cov, threshold=args.threshold)
    print(json.dumps(asdict_record(rec), indent=2))
    return 0


def asdict_record(rec: metrics.MetricsRecord) -> dict:
    return {
        "constructive": bool(rec.constructive),
        "constr_score": rec.constr_score,
        "kl": rec.kl_value,
        "frob_abs_dist": rec.frob_abs_dist,
        "f1": rec.f1,
        "tpr": rec.tpr,
        "fdr": rec.fdr,
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="calsep",
        description="Learn linear causal abstractions between Gaussian models.",
    )
    parser.add_argument("--version", action="version", version=f"calsep {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate a synthetic instance as CSV files")
    p_gen.add_argument("--l", type=int, required=True)
    p_gen.add_argument("--h", type=int, required=True)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True, help="output directory")
    p_gen.set_defaults(func=cmd_gen)

    p_run = sub.add_parser("run", help="run a benchmark sweep from a JSON config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None, help="override the config output path")
    p_run.add_argument("--jobs", type=int, default=1)
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.set_defaults(func=cmd_run)

    p_check = sub.add_parser("check", help="spectral existence preflight")
    p_check.add_argument("--config", required=True)
    p_check.set_defaults(func=cmd_check)

    p_met = sub.add_parser("metrics", help="re-score a learned map against a ground truth")
    p_met.add_argument("--v-hat", required=True)
    p_met.add_argument("--v-star", required=True)
    p_met.add_argument("--sigma-l", default=None)
    p_met.add_argument("--sigma-h", default=None)
    p_met.add_argument("--threshold", type=float, default=metrics.DEFAULT_SUPPORT_THRESHOLD)
    p_met.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MatrixParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
