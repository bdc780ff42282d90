"""Geometry of the manifold of tall matrices with orthonormal columns.

Membership, tangent projection, QR/polar/Cayley retractions, the normal-space
basis used by the proximal-gradient solver, and seeded random frames.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import DegenerateInputError, polar, qr_q

ON_MANIFOLD_TOL = 1e-8
TANGENT_ACCEPT_TOL = 1e-8
TANGENT_REPAIR_TOL = 1e-6

RETRACTION_KINDS = ("qr", "polar", "cayley")


@dataclass(frozen=True)
class StiefelPoint:
    """A point on the manifold: ``v.T @ v = I`` within ``ON_MANIFOLD_TOL``."""

    v: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        if v.ndim != 2 or v.shape[0] < v.shape[1] or v.shape[1] < 1:
            raise ValueError(f"expected a tall matrix with rows >= cols >= 1, got {v.shape}")
        h = v.shape[1]
        err = np.linalg.norm(v.T @ v - np.eye(h))
        if err > ON_MANIFOLD_TOL:
            raise ValueError(f"columns are not orthonormal: residual {err:.3e}")
        object.__setattr__(self, "v", v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.v.shape


@dataclass(frozen=True)
class TangentVector:
    """Tangent direction at ``base``: ``v.T @ g`` is skew-symmetric.

    Constraint residuals up to ``TANGENT_REPAIR_TOL`` are re-projected so
    that accumulated drift does not abort a solve; larger residuals are a
    bug in the caller and are rejected.
    """

    base: StiefelPoint
    g: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float)
        if g.shape != self.base.shape:
            raise ValueError(f"direction shape {g.shape} != point shape {self.base.shape}")
        res = _tangency_residual(self.base.v, g)
        if res > TANGENT_REPAIR_TOL:
            raise ValueError(f"direction is not tangent: residual {res:.3e}")
        if res > TANGENT_ACCEPT_TOL:
            g = _project_tangent_array(self.base.v, g)
        object.__setattr__(self, "g", g)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.g))


@dataclass(frozen=True)
class NormalBasis:
    """Normal-space basis at a point: one element per symmetric index pair."""

    base: StiefelPoint
    elements: tuple

    def __len__(self) -> int:
        return len(self.elements)


def _unsafe_point(v: np.ndarray) -> StiefelPoint:
    """Wrap an array known to be orthonormal, skipping validation.

    Only for solver hot loops whose iterates are orthonormal by
    construction (QR/polar outputs).
    """
    point = object.__new__(StiefelPoint)
    object.__setattr__(point, "v", v)
    return point


def _qr_retract_raw(w: np.ndarray) -> np.ndarray:
    """Sign-fixed thin-QR factor of ``w`` without wrapper overhead."""
    q, r = np.linalg.qr(w)
    d = np.diagonal(r)
    if np.any(d == 0.0):
        raise DegenerateInputError("matrix is rank deficient; QR factor not unique")
    return q * np.where(d < 0, -1.0, 1.0)


def _tangency_residual(v: np.ndarray, g: np.ndarray) -> float:
    vg = v.T @ g
    return float(np.linalg.norm(vg + vg.T))


def _project_tangent_array(v: np.ndarray, g: np.ndarray) -> np.ndarray:
    vg = v.T @ g
    return g - v @ (0.5 * (vg + vg.T))


def project_tangent(point: StiefelPoint, g: np.ndarray) -> TangentVector:
    """Orthogonal projection of an ambient matrix onto the tangent space.

    Equivalent to ``(I - V V') G + V (V'G - G'V)/2``; the residual
    ``g - proj`` is of the form ``V S`` with ``S`` symmetric.
    """
    g = np.asarray(g, dtype=float)
    if g.shape != point.shape:
        raise ValueError(f"shape mismatch: {g.shape} vs {point.shape}")
    return TangentVector(base=point, g=_project_tangent_array(point.v, g))


def riemannian_grad(point: StiefelPoint, egrad: np.ndarray) -> TangentVector:
    """Riemannian gradient: tangent projection of the Euclidean gradient."""
    return project_tangent(point, egrad)


def retract(point: StiefelPoint, direction: TangentVector, kind: str = "qr") -> StiefelPoint:
    """Map a tangent step back to the manifold.

    ``kind`` is one of ``qr`` (sign-fixed Q factor), ``polar`` (closest
    frame), or ``cayley`` (rational approximation of the matrix exponential).
    All three fix the zero direction and agree with ``V + G`` to first order.
    """
    if direction.base is not point and direction.base.v is not point.v:
        if not np.array_equal(direction.base.v, point.v):
            raise ValueError("direction is not based at the given point")
    v, g = point.v, direction.g
    if kind == "qr":
        return StiefelPoint(qr_q(v + g))
    if kind == "polar":
        return StiefelPoint(polar(v + g).orthogonal)
    if kind == "cayley":
        l = v.shape[0]
        pg = g - 0.5 * v @ (v.T @ g)
        w = pg @ v.T - v @ pg.T
        lhs = np.eye(l) - 0.5 * w
        rhs = (np.eye(l) + 0.5 * w) @ v
        try:
            out = np.linalg.solve(lhs, rhs)
        except np.linalg.LinAlgError as exc:
            raise DegenerateInputError("Cayley system is singular") from exc
        return StiefelPoint(out)
    raise ValueError(f"unknown retraction kind {kind!r}; expected one of {RETRACTION_KINDS}")


def normal_basis(point: StiefelPoint) -> NormalBasis:
    """Basis of the normal space at a point.

    Element ``(i, j)`` with ``i <= j`` is ``V E_ij`` where ``E_ij`` has ones
    at ``(i, j)`` and ``(j, i)``; there are ``h (h + 1) / 2`` of them,
    ordered lexicographically by ``(i, j)``.
    """
    v = point.v
    h = v.shape[1]
    elems = []
    for i, j in zip(*np.triu_indices(h)):
        e = np.zeros((h, h))
        e[i, j] = 1.0
        e[j, i] = 1.0
        elems.append(v @ e)
    return NormalBasis(base=point, elements=tuple(elems))


def random_point(l: int, h: int, seed) -> StiefelPoint:
    """Seeded random frame: Q factor of an iid standard-normal matrix."""
    if l <= h:
        raise ValueError(f"need rows > cols, got ({l}, {h})")
    rng = np.random.default_rng(seed)
    gauss = rng.standard_normal((l, h))
    try:
        return StiefelPoint(qr_q(gauss))
    except DegenerateInputError:
        # probability-zero event; one retry with fresh draws
        return StiefelPoint(qr_q(rng.standard_normal((l, h))))
