"""Evaluation of a learned map against the ground truth.

Constructiveness of the support, KL alignment, normalized absolute
Frobenius distance, and the F1 score of the recovered support. All support
metrics are invariant under a global sign flip of the learned map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import objective as obj
from .numerics import NotPositiveDefiniteError

# Default support threshold: far below the unit-column-norm scale of
# constructive maps, and provably above the masked-entry residue left by
# solvers stopping at absolute/relative tolerance 1e-4 (Frobenius floor
# tau_abs * sqrt(l h) < 1e-3 at desk scale).
DEFAULT_SUPPORT_THRESHOLD = 1e-3


@dataclass(frozen=True)
class MetricsRecord:
    constructive: bool
    constr_score: float
    kl_value: float
    frob_abs_dist: float
    f1: float
    tpr: float
    fdr: float


def support_of(v: np.ndarray, threshold: float) -> np.ndarray:
    """0/1 support of entries strictly larger than ``threshold`` in size."""
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    return (np.abs(np.asarray(v, float)) > threshold).astype(float)


def constructiveness(support: np.ndarray) -> tuple[bool, float]:
    """Score a support as a low-to-high clustering.

    The score averages the fraction of rows carrying exactly one entry and
    the fraction of columns carrying at least one; it reaches one exactly
    when the support is a valid clustering.
    """
    support = np.asarray(support)
    l, h = support.shape
    single_rows = int(np.sum(support.sum(axis=1) == 1))
    hit_cols = int(np.sum(support.sum(axis=0) >= 1))
    score = single_rows / (2.0 * l) + hit_cols / (2.0 * h)
    return (single_rows == l and hit_cols == h), score


def _harmonic(a: float, b: float) -> float:
    return 2.0 * a * b / (a + b) if a + b > 0 else 0.0


def evaluate(
    v_hat: np.ndarray,
    v_star: np.ndarray,
    cov: obj.CovariancePair | None,
    threshold: float = DEFAULT_SUPPORT_THRESHOLD,
    support: np.ndarray | None = None,
) -> MetricsRecord:
    """Full metrics record for a learned map.

    ``support`` overrides thresholding for solvers that report an explicit
    learned support. ``cov`` may be ``None`` when no covariances are
    available, in which case the KL value is NaN.
    """
    v_hat = np.asarray(v_hat, float)
    v_star = np.asarray(v_star, float)
    if v_hat.shape != v_star.shape:
        raise ValueError(f"shape mismatch: {v_hat.shape} vs {v_star.shape}")

    sup_hat = support_of(v_hat, threshold) if support is None else np.asarray(support, float)
    sup_star = support_of(v_star, 0.0)
    constructive, score = constructiveness(sup_hat)

    tp = float(np.sum((sup_hat == 1) & (sup_star == 1)))
    fp = float(np.sum((sup_hat == 1) & (sup_star == 0)))
    nnz_star = float(np.sum(sup_star))
    tpr = tp / nnz_star if nnz_star > 0 else 0.0
    fdr = fp / (tp + fp) if (tp + fp) > 0 else 0.0
    f1 = _harmonic(tpr, 1.0 - fdr)

    if cov is None:
        kl_value = float("nan")
    else:
        try:
            kl_value = obj.kl_of_matrix(cov, v_hat)
        except (NotPositiveDefiniteError, np.linalg.LinAlgError):
            kl_value = float("inf")

    denom = np.linalg.norm(v_star)
    frob = float(np.linalg.norm(np.abs(v_star) - np.abs(v_hat)) / denom) if denom > 0 else 0.0
    return MetricsRecord(
        constructive=constructive,
        constr_score=score,
        kl_value=kl_value,
        frob_abs_dist=frob,
        f1=f1,
        tpr=tpr,
        fdr=fdr,
    )
