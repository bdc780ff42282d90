"""Synthetic instance generation for the benchmark protocol.

Ground-truth constructive maps with disjoint column supports, well
conditioned low-level covariances, exactly consistent high-level
covariances (so a kernel point exists by construction), prior degradation,
and an optional sampling path that estimates both covariances from
independently drawn data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import NotPositiveDefiniteError, SpdMatrix
from .objective import CovariancePair, PriorMask
from .stiefel import StiefelPoint

SAMPLE_RIDGE = 1e-8


@dataclass(frozen=True)
class GroundTruth:
    v_star: StiefelPoint
    b_star: np.ndarray
    cov: CovariancePair
    seed: int


def gen_constructive_map(l: int, h: int, seed) -> tuple[np.ndarray, StiefelPoint]:
    """Random constructive map: one nonzero per row, every column hit.

    The first ``h`` rows take distinct columns so coverage holds; the rest
    are assigned uniformly. Values are standard normal on the support with
    columns normalized, which makes the columns orthonormal because their
    supports are disjoint.
    """
    if not l >= h >= 1:
        raise ValueError(f"need rows >= cols >= 1, got ({l}, {h})")
    rng = np.random.default_rng(seed)
    cols = np.empty(l, dtype=int)
    cols[:h] = rng.permutation(h)
    if l > h:
        cols[h:] = rng.integers(0, h, size=l - h)
    b = np.zeros((l, h))
    b[np.arange(l), cols] = 1.0
    v = b * rng.standard_normal((l, h))
    v /= np.linalg.norm(v, axis=0, keepdims=True)
    return b, StiefelPoint(v)


def gen_instance(l: int, h: int, seed: int) -> GroundTruth:
    """Exactly consistent instance with a known kernel point.

    The low-level covariance is a shifted Wishart draw rescaled to unit
    Frobenius norm; the high-level one is its compression through the
    ground-truth map, so the KL value at that map is zero. The alignment
    objective and its gradient are invariant to this joint rescaling, and
    the unit norm keeps the covariance-derived proximal stepsize at a
    scale the iteration budget can use.
    """
    if l <= h:
        raise ValueError(f"need rows > cols, got ({l}, {h})")
    b, v_star = gen_constructive_map(l, h, seed)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(1,)))
    g = rng.standard_normal((l, l))
    sigma_l = g @ g.T + l * np.eye(l)
    sigma_l /= np.linalg.norm(sigma_l)
    sigma_h = v_star.v.T @ sigma_l @ v_star.v
    cov = CovariancePair(SpdMatrix(sigma_l), SpdMatrix(sigma_h))
    return GroundTruth(v_star=v_star, b_star=b, cov=cov, seed=seed)


def degrade_prior(b_star: np.ndarray, fraction: float, seed) -> PriorMask:
    """Blank out structural knowledge for a fraction of the rows.

    A uniformly chosen subset of ``floor(fraction * l)`` rows (at least one
    when the fraction is positive) is replaced with all-ones, the rest keep
    the ground-truth assignment. The result always contains the true
    support entrywise.
    """
    b_star = np.asarray(b_star, dtype=float)
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    l = b_star.shape[0]
    n_rows = int(np.floor(fraction * l))
    if fraction > 0:
        n_rows = max(1, n_rows)
    mask = b_star.copy()
    if n_rows:
        rows = np.random.default_rng(seed).choice(l, size=n_rows, replace=False)
        mask[rows] = 1.0
    return PriorMask(mask)


def sample_and_estimate(cov: CovariancePair, n_samples: int, seed) -> CovariancePair:
    """Misaligned-data path: independent draws per level, ridge-restored.

    The two sample sets come from separately seeded streams, matching a
    setting where the low- and high-level observations are never paired.
    """
    l, h = cov.l, cov.h
    if n_samples <= max(l, h):
        raise ValueError("need more samples than the larger dimension")

    def estimate(sigma, rng, dim):
        chol = np.linalg.cholesky(sigma)
        x = rng.standard_normal((n_samples, dim)) @ chol.T
        return x.T @ x / n_samples + SAMPLE_RIDGE * np.eye(dim)

    rng_l = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0,)))
    rng_h = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(1,)))
    est_l = estimate(cov.sigma_l.mat, rng_l, l)
    est_h = estimate(cov.sigma_h.mat, rng_h, h)
    try:
        return CovariancePair(SpdMatrix(est_l), SpdMatrix(est_h))
    except NotPositiveDefiniteError as exc:
        raise NotPositiveDefiniteError("sample covariance singular even after ridge") from exc
