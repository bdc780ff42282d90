"""Alignment objective between low- and high-level Gaussian models.

The smooth objective is ``Tr(M^-1 sigma_h) + logdet M`` with
``M = A' sigma_l A``; adding the instance constant turns it into the KL
divergence from the high-level Gaussian to the projected low-level one,
which vanishes exactly on kernel points. Masked variants compose the map
as ``B (.) S (.) V`` for structured priors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import NotPositiveDefiniteError, SpdMatrix
from .stiefel import StiefelPoint

FEASIBILITY_SLACK = 1e-10


@dataclass(frozen=True)
class CovariancePair:
    """The two SPD covariances defining a learning instance."""

    sigma_l: SpdMatrix
    sigma_h: SpdMatrix
    c_const: float = field(init=False)

    def __post_init__(self):
        if self.sigma_l.dim <= self.sigma_h.dim:
            raise ValueError(
                f"low-level dim {self.sigma_l.dim} must exceed high-level dim {self.sigma_h.dim}"
            )
        sign, logdet = np.linalg.slogdet(self.sigma_h.mat)
        if sign <= 0:
            raise NotPositiveDefiniteError("high-level covariance is not PD")
        object.__setattr__(self, "c_const", -logdet - self.sigma_h.dim)

    @property
    def l(self) -> int:
        return self.sigma_l.dim

    @property
    def h(self) -> int:
        return self.sigma_h.dim


@dataclass(frozen=True)
class PriorMask:
    """0/1 structural prior ``b`` and its complement ``d = 1 - b``."""

    b: np.ndarray
    d: np.ndarray = field(init=False)

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float)
        if b.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {b.shape}")
        if not np.all((b == 0.0) | (b == 1.0)):
            raise ValueError("mask entries must be 0 or 1")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "d", 1.0 - b)

    @property
    def shape(self) -> tuple[int, int]:
        return self.b.shape


@dataclass(frozen=True)
class SpectralReport:
    """Interlacing check of the two spectra; feasible iff no violations."""

    lam: np.ndarray
    kappa: np.ndarray
    feasible: bool
    violations: tuple


def _gram(cov: CovariancePair, a: np.ndarray) -> np.ndarray:
    m = a.T @ cov.sigma_l.mat @ a
    return 0.5 * (m + m.T)


def _chol_logdet(m: np.ndarray) -> tuple[np.ndarray, float]:
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("projected covariance is not PD") from exc
    return chol, 2.0 * float(np.sum(np.log(np.diagonal(chol))))


def f_smooth(cov: CovariancePair, a: np.ndarray) -> float:
    """Smooth objective ``Tr(M^-1 sigma_h) + logdet M`` at a full-rank map."""
    a = np.asarray(a, dtype=float)
    m = _gram(cov, a)
    _, logdet = _chol_logdet(m)
    trace_term = float(np.trace(np.linalg.solve(m, cov.sigma_h.mat)))
    return trace_term + logdet


def kl_of_matrix(cov: CovariancePair, a: np.ndarray) -> float:
    """KL value ``f_smooth + C`` for an arbitrary full-rank map.

    Nonnegative for any map with PD projected covariance, on-manifold
    or not.
    """
    return f_smooth(cov, a) + cov.c_const


def kl(cov: CovariancePair, v: StiefelPoint) -> float:
    """KL divergence at an on-manifold candidate abstraction."""
    return kl_of_matrix(cov, v.v)


def _grad_core(cov: CovariancePair, a: np.ndarray) -> np.ndarray:
    """Common factor ``2 (sigma_l A M^-1)(I - sigma_h M^-1)``."""
    m = _gram(cov, a)
    h = m.shape[0]
    try:
        m_inv = np.linalg.solve(m, np.eye(h))
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("projected covariance is singular") from exc
    return 2.0 * (cov.sigma_l.mat @ a @ m_inv) @ (np.eye(h) - cov.sigma_h.mat @ m_inv)


def egrad_smooth(cov: CovariancePair, a: np.ndarray) -> np.ndarray:
    """Euclidean gradient of :func:`f_smooth`."""
    return _grad_core(cov, np.asarray(a, dtype=float))


def f_and_egrad_smooth(cov: CovariancePair, a: np.ndarray) -> tuple[float, np.ndarray]:
    """Objective and gradient sharing one factorization of the Gram matrix."""
    a = np.asarray(a, dtype=float)
    m = _gram(cov, a)
    _, logdet = _chol_logdet(m)
    h = m.shape[0]
    m_inv = np.linalg.solve(m, np.eye(h))
    value = float(np.sum(m_inv * cov.sigma_h.mat)) + logdet
    grad = 2.0 * (cov.sigma_l.mat @ a @ m_inv) @ (np.eye(h) - cov.sigma_h.mat @ m_inv)
    return value, grad


def _masked_map(mask: PriorMask, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    return mask.b * s * v


def f_masked(cov: CovariancePair, mask: PriorMask, s: np.ndarray, v: np.ndarray) -> float:
    """Objective at the composed map ``B (.) S (.) V``."""
    return f_smooth(cov, _masked_map(mask, np.asarray(s, float), np.asarray(v, float)))


def egrad_masked_v(cov: CovariancePair, mask: PriorMask, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Partial derivative of :func:`f_masked` in the coefficient block."""
    s = np.asarray(s, float)
    v = np.asarray(v, float)
    core = _grad_core(cov, _masked_map(mask, s, v))
    return (mask.b * s) * core


def egrad_masked_s(cov: CovariancePair, mask: PriorMask, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Partial derivative of :func:`f_masked` in the support block."""
    s = np.asarray(s, float)
    v = np.asarray(v, float)
    core = _grad_core(cov, _masked_map(mask, s, v))
    return (mask.b * v) * core


def spectral_feasibility(cov: CovariancePair) -> SpectralReport:
    """Necessary interlacing condition for a kernel point to exist.

    Feasible iff ``lam[i] <= kappa[i] <= lam[i + l - h]`` for every
    high-level index, with an absolute slack absorbing eigenvalue roundoff
    on exactly-constructed instances.
    """
    lam = np.linalg.eigvalsh(cov.sigma_l.mat)
    kappa = np.linalg.eigvalsh(cov.sigma_h.mat)
    l, h = cov.l, cov.h
    violations = []
    for i in range(h):
        lo = lam[i]
        hi = lam[i + l - h]
        if kappa[i] < lo - FEASIBILITY_SLACK or kappa[i] > hi + FEASIBILITY_SLACK:
            violations.append((i, float(kappa[i]), float(lo), float(hi)))
    return SpectralReport(
        lam=lam, kappa=kappa, feasible=not violations, violations=tuple(violations)
    )


def penalty_l1(mask: PriorMask, v: np.ndarray) -> float:
    """Sum of absolute values over the complement of the prior support."""
    return float(np.sum(np.abs(mask.d * np.asarray(v, float))))
