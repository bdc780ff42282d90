"""Benchmark sweeps: instances x restarts, best-of-restart selection, CSV rows.

Every number in a sweep is a pure function of the experiment config and the
master seed: instances, priors, and restart initializations are derived
through stable seed sequences keyed on (role, sim, restart), so results do
not depend on scheduling or worker count.
"""

from __future__ import annotations

import concurrent.futures
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import admm, constructive, metrics, proxgrad
from .matio import read_matrix
from .numerics import (
    DegenerateInputError,
    NotPositiveDefiniteError,
    NumericalFailureError,
    SpdMatrix,
)
from .objective import CovariancePair, PriorMask
from .qp import InfeasibleProblemError, QpConfig
from .smooth import SmoothSolverConfig
from .stiefel import random_point
from .synth import degrade_prior, gen_instance, sample_and_estimate

log = logging.getLogger("calsep")

METHODS = ("linsepal-admm", "linsepal-pg", "clinsepal", "clinsepal-full")
PRIOR_MODES = ("full", "partial")
BENCHMARK_FRACTIONS = (0.25, 0.5, 0.75)

CSV_COLUMNS = (
    "sim_id",
    "restart_id",
    "method",
    "l",
    "h",
    "prior_mode",
    "constructive",
    "kl",
    "frob_abs_dist",
    "f1",
    "iters",
    "converged",
    "wall_ms",
    "seed",
    "best",
)

_SOLVE_ERRORS = (
    NotPositiveDefiniteError,
    DegenerateInputError,
    NumericalFailureError,
    InfeasibleProblemError,
    constructive.StructuralInfeasibilityError,
    np.linalg.LinAlgError,
)


@dataclass(frozen=True)
class ExperimentConfig:
    method: str
    l: int
    h: int
    n_instances: int = 1
    n_restarts: int = 1
    prior_mode: str = "full"
    prior_fraction: float | None = None
    seed: int = 0
    out: str | None = None
    support_threshold: float = metrics.DEFAULT_SUPPORT_THRESHOLD
    n_samples: int = 0
    admm: dict = field(default_factory=dict)
    pg: dict = field(default_factory=dict)
    clinsepal: dict = field(default_factory=dict)
    sigma_l_file: str | None = None
    sigma_h_file: str | None = None
    v_star_file: str | None = None
    b_file: str | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.prior_mode not in PRIOR_MODES:
            raise ValueError(f"unknown prior_mode {self.prior_mode!r}")
        if self.prior_mode == "partial":
            if self.prior_fraction not in BENCHMARK_FRACTIONS:
                raise ValueError(f"prior_fraction must be one of {BENCHMARK_FRACTIONS}")
        elif self.prior_fraction is not None:
            raise ValueError("prior_fraction is only valid with prior_mode='partial'")
        if self.method == "clinsepal-full" and self.prior_mode != "full":
            raise ValueError("clinsepal-full requires prior_mode='full'")
        if self.n_instances < 1 or self.n_restarts < 1:
            raise ValueError("n_instances and n_restarts must be >= 1")
        if (self.sigma_l_file is None) != (self.sigma_h_file is None):
            raise ValueError("sigma_l_file and sigma_h_file must be given together")
        if self.sigma_l_file is not None and self.n_instances != 1:
            raise ValueError("file-based runs use exactly one instance")

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    @property
    def prior_label(self) -> str:
        if self.prior_mode == "full":
            return "full"
        return f"partial({self.prior_fraction:g})"


@dataclass
class RunRow:
    sim_id: int
    restart_id: int
    method: str
    l: int
    h: int
    prior_mode: str
    constructive: int
    kl: float
    frob_abs_dist: float
    f1: float
    iters: int
    converged: int
    wall_ms: float
    seed: int
    best: int = 0


def child_seed(master: int, *key: int) -> int:
    """Stable derived seed keyed on role/sim/restart indices."""
    ss = np.random.SeedSequence(entropy=master, spawn_key=tuple(key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _build(cls, overrides: dict, **defaults):
    known = {f.name for f in fields(cls)}
    unknown = set(overrides) - known
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    merged = {**defaults, **overrides}
    return cls(**merged)


def build_admm_config(over: dict) -> admm.AdmmConfig:
    over = dict(over)
    inner = over.pop("inner", None)
    if inner is not None:
        over["inner"] = _build(SmoothSolverConfig, inner)
    return _build(admm.AdmmConfig, over)


def build_pg_config(over: dict) -> proxgrad.PgConfig:
    over = dict(over)
    newton = over.pop("newton", None)
    if newton is not None:
        over["newton"] = _build(proxgrad.NewtonConfig, newton)
    return _build(proxgrad.PgConfig, over)


def build_clin_config(over: dict, prior_mode: str) -> constructive.CLinConfig:
    over = dict(over)
    qp_over = over.pop("qp", None)
    if qp_over is not None:
        over["qp"] = _build(QpConfig, qp_over)
    defaults = {"eps_step": 0.1 if prior_mode == "full" else 0.01}
    return _build(constructive.CLinConfig, over, **defaults)


def _load_files(cfg: ExperimentConfig):
    sigma_l = read_matrix(cfg.sigma_l_file)
    sigma_h = read_matrix(cfg.sigma_h_file)
    if sigma_l.shape != (cfg.l, cfg.l) or sigma_h.shape != (cfg.h, cfg.h):
        raise ValueError(
            f"covariance files have shapes {sigma_l.shape}/{sigma_h.shape}, "
            f"config says ({cfg.l},{cfg.l})/({cfg.h},{cfg.h})"
        )
    cov = CovariancePair(SpdMatrix(sigma_l), SpdMatrix(sigma_h))
    v_star = read_matrix(cfg.v_star_file) if cfg.v_star_file else None
    if cfg.b_file:
        prior = PriorMask(read_matrix(cfg.b_file))
    else:
        prior = PriorMask(np.ones((cfg.l, cfg.h)))
    return cov, v_star, prior


def instance_for(cfg: ExperimentConfig, sim_id: int):
    """Covariances, optional ground truth, and prior for one simulation."""
    if cfg.sigma_l_file is not None:
        return _load_files(cfg)
    gt = gen_instance(cfg.l, cfg.h, child_seed(cfg.seed, 0, sim_id))
    cov = gt.cov
    if cfg.n_samples > 0:
        cov = sample_and_estimate(cov, cfg.n_samples, child_seed(cfg.seed, 3, sim_id))
    if cfg.prior_mode == "full":
        prior = PriorMask(gt.b_star)
    else:
        prior = degrade_prior(gt.b_star, cfg.prior_fraction, child_seed(cfg.seed, 1, sim_id))
    return cov, gt.v_star.v, prior


def _solve_dispatch(cfg: ExperimentConfig, cov, prior, restart_seed: int):
    if cfg.method == "linsepal-admm":
        x0 = random_point(cfg.l, cfg.h, restart_seed)
        return admm.solve(cov, prior, build_admm_config(cfg.admm), x0)
    if cfg.method == "linsepal-pg":
        x0 = random_point(cfg.l, cfg.h, restart_seed)
        return proxgrad.solve(cov, prior, build_pg_config(cfg.pg), x0)
    clin_cfg = build_clin_config(cfg.clinsepal, cfg.prior_mode)
    v0 = np.random.default_rng(restart_seed).standard_normal((cfg.l, cfg.h))
    if cfg.method == "clinsepal":
        return constructive.solve(cov, prior, clin_cfg, v0)
    return constructive.solve_full_prior(cov, prior, clin_cfg, v0)


def run_one(cfg: ExperimentConfig, sim_id: int, restart_id: int) -> RunRow:
    """One (instance, restart) cell; failures become flagged rows."""
    cov, v_star, prior = instance_for(cfg, sim_id)
    restart_seed = child_seed(cfg.seed, 2, sim_id, restart_id)
    start = time.perf_counter()
    try:
        outcome = _solve_dispatch(cfg, cov, prior, restart_seed)
    except _SOLVE_ERRORS as exc:
        log.debug("sim %d restart %d failed: %s", sim_id, restart_id, exc)
        wall_ms = 1000.0 * (time.perf_counter() - start)
        return RunRow(
            sim_id, restart_id, cfg.method, cfg.l, cfg.h, cfg.prior_label,
            constructive=0, kl=float("nan"), frob_abs_dist=float("nan"),
            f1=float("nan"), iters=0, converged=0, wall_ms=wall_ms,
            seed=restart_seed,
        )
    wall_ms = 1000.0 * (time.perf_counter() - start)

    if v_star is not None:
        rec = metrics.evaluate(
            outcome.v_hat, v_star, cov,
            threshold=cfg.support_threshold, support=outcome.support,
        )
        constructive_flag, kl_value = rec.constructive, rec.kl_value
        frob, f1 = rec.frob_abs_dist, rec.f1
    else:
        sup = (
            outcome.support
            if outcome.support is not None
            else metrics.support_of(outcome.v_hat, cfg.support_threshold)
        )
        constructive_flag, _ = metrics.constructiveness(sup)
        from .objective import kl_of_matrix

        try:
            kl_value = kl_of_matrix(cov, outcome.v_hat)
        except (NotPositiveDefiniteError, np.linalg.LinAlgError):
            kl_value = float("inf")
        frob, f1 = float("nan"), float("nan")

    return RunRow(
        sim_id, restart_id, cfg.method, cfg.l, cfg.h, cfg.prior_label,
        constructive=int(constructive_flag), kl=kl_value, frob_abs_dist=frob,
        f1=f1, iters=outcome.iterations, converged=int(outcome.converged),
        wall_ms=wall_ms, seed=restart_seed,
    )


def _worker(args) -> RunRow:
    cfg, sim_id, restart_id = args
    return run_one(cfg, sim_id, restart_id)


def mark_best(rows: list[RunRow]) -> None:
    """Flag the minimum-KL restart of each instance (NaN never wins)."""
    by_sim: dict[int, list[RunRow]] = {}
    for row in rows:
        row.best = 0
        by_sim.setdefault(row.sim_id, []).append(row)
    for group in by_sim.values():
        keyed = [(np.inf if np.isnan(r.kl) else r.kl, r.restart_id) for r in group]
        winner = min(range(len(group)), key=lambda i: keyed[i])
        group[winner].best = 1


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> tuple[list[RunRow], dict]:
    """Execute the sweep; rows come back in (sim, restart) order."""
    start = time.perf_counter()
    tasks = [
        (cfg, sim, restart)
        for sim in range(cfg.n_instances)
        for restart in range(cfg.n_restarts)
    ]
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_worker, tasks, chunksize=1))
    else:
        rows = []
        for task in tasks:
            rows.append(_worker(task))
            log.debug("finished sim %d restart %d", task[1], task[2])
    mark_best(rows)
    meta = {
        "config": asdict(cfg),
        "jobs": jobs,
        "wall_clock_s": time.perf_counter() - start,
        "kl_includes_constant": True,
        "csv_columns": list(CSV_COLUMNS),
    }
    log.info(
        "%s: %d rows in %.1fs", cfg.method, len(rows), meta["wall_clock_s"]
    )
    return rows, meta


def _fmt(value) -> str:
    if isinstance(value, float):
        return "%.17g" % value
    return str(value)


def rows_to_csv(rows: list[RunRow]) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for row in rows:
        rec = asdict(row)
        rec["wall_ms"] = "%.3f" % rec["wall_ms"]
        lines.append(",".join(_fmt(rec[col]) for col in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def best_rows(rows: list[RunRow]) -> list[RunRow]:
    return [r for r in rows if r.best == 1]


def summarize(rows: list[RunRow]) -> dict:
    """Best-of-restart summary: constructive fraction, KL stats, F1 stats."""
    best = best_rows(rows)
    if not best:
        return {"n": 0}
    kls = np.array([r.kl for r in best])
    f1s = np.array([r.f1 for r in best])
    return {
        "n": len(best),
        "constructive_fraction": float(np.mean([r.constructive for r in best])),
        "median_kl": float(np.nanmedian(kls)) if not np.all(np.isnan(kls)) else float("nan"),
        "max_kl": float(np.nanmax(kls)) if not np.all(np.isnan(kls)) else float("nan"),
        "min_f1": float(np.nanmin(f1s)) if not np.all(np.isnan(f1s)) else float("nan"),
        "mean_f1": float(np.nanmean(f1s)) if not np.all(np.isnan(f1s)) else float("nan"),
        "converged_fraction": float(np.mean([r.converged for r in best])),
    }
