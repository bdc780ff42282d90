"""Dense linear-algebra kernels shared by every solver.

Symmetric eigendecomposition, SVD-based polar decomposition, sign-fixed QR,
and SPD solves. All operations are pure functions of their inputs and safe
to call concurrently.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

SYM_REL_TOL = 1e-8
COND_WARN_THRESHOLD = 1e12


class NumericalFailureError(RuntimeError):
    """An iterative factorization failed to converge."""

    def __init__(self, message: str, dim: int):
        super().__init__(f"{message} (dim={dim})")
        self.dim = dim


class DegenerateInputError(ValueError):
    """Input matrix is rank deficient where full rank is required."""


class NotPositiveDefiniteError(ValueError):
    """Matrix is not symmetric positive definite."""


class IllConditioningWarning(RuntimeWarning):
    """Condition number is large enough that the solve may lose digits."""


def _as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


@dataclass(frozen=True)
class SpdMatrix:
    """Symmetric positive definite matrix.

    The stored array is the exact symmetric part of the input; relative
    asymmetry above ``SYM_REL_TOL`` is rejected rather than silently fixed.
    """

    mat: np.ndarray

    def __post_init__(self):
        m = _as_matrix(self.mat)
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"SPD matrix must be square, got {m.shape}")
        scale = max(np.abs(m).max(), 1.0)
        if np.abs(m - m.T).max() > SYM_REL_TOL * scale:
            raise NotPositiveDefiniteError("matrix is not symmetric")
        m = 0.5 * (m + m.T)
        try:
            np.linalg.cholesky(m)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError("matrix is not positive definite") from exc
        object.__setattr__(self, "mat", m)

    @property
    def dim(self) -> int:
        return self.mat.shape[0]


@dataclass(frozen=True)
class PolarFactors:
    """Orthogonal-times-PSD factorization ``a = orthogonal @ psd``."""

    orthogonal: np.ndarray
    psd: SpdMatrix


def sym_eig(m: SpdMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of an SPD matrix, eigenvalues ascending.

    Returns ``(w, u)`` with ``m.mat == u @ diag(w) @ u.T`` to roundoff.
    """
    try:
        w, u = np.linalg.eigh(m.mat)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError("eigensolver did not converge", m.dim) from exc
    return w, u


def polar(a: np.ndarray) -> PolarFactors:
    """Polar decomposition of a full-column-rank tall matrix via SVD.

    The orthogonal factor ``u @ wt`` is the unique closest matrix with
    orthonormal columns in the Frobenius norm.
    """
    a = _as_matrix(a)
    l, h = a.shape
    if l < h:
        raise ValueError(f"need rows >= cols, got {a.shape}")
    try:
        u, s, wt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError("SVD did not converge", max(a.shape)) from exc
    if s[-1] <= s[0] * np.finfo(float).eps * max(a.shape) or s[-1] == 0.0:
        raise DegenerateInputError("matrix is rank deficient; polar factor not unique")
    orth = u @ wt
    psd = SpdMatrix(wt.T @ (s[:, None] * wt))
    return PolarFactors(orthogonal=orth, psd=psd)


def qr_q(a: np.ndarray) -> np.ndarray:
    """Q factor of the thin QR with the diagonal of R made positive.

    The sign fix makes the factor unique, hence deterministic across
    BLAS/LAPACK builds.
    """
    a = _as_matrix(a)
    q, r = np.linalg.qr(a)
    d = np.diagonal(r)
    if np.any(np.abs(d) <= np.finfo(float).eps * max(a.shape) * max(np.abs(a).max(), 1.0)):
        raise DegenerateInputError("matrix is rank deficient; QR factor not unique")
    signs = np.where(d < 0, -1.0, 1.0)
    return q * signs


def spd_solve(m: SpdMatrix, rhs: np.ndarray) -> np.ndarray:
    """Solve ``m x = rhs`` by Cholesky.

    Emits :class:`IllConditioningWarning` when the 2-norm condition number
    exceeds ``COND_WARN_THRESHOLD``.
    """
    rhs = np.asarray(rhs, dtype=float)
    w = np.linalg.eigvalsh(m.mat)
    if w[0] <= 0:
        raise NotPositiveDefiniteError("matrix is not positive definite")
    cond = w[-1] / w[0]
    if cond > COND_WARN_THRESHOLD:
        warnings.warn(
            f"condition number {cond:.3e} exceeds {COND_WARN_THRESHOLD:.0e}",
            IllConditioningWarning,
            stacklevel=2,
        )
    c, low = scipy.linalg.cho_factor(m.mat, lower=True)
    return scipy.linalg.cho_solve((c, low), rhs)
