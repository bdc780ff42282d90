"""Abstraction learning with guaranteed constructive support.

Splitting scheme with two orthonormal-frame copies of the masked map, a
column-assignment copy of the learned support, inner successive convex
approximation loops for the coefficient and support blocks (closed form and
QP respectively), polar projections, and scaled dual ascent. A reduced
recursion handles the fully specified prior, where the support needs no
learning.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import objective as obj
from .numerics import polar
from .outcome import SolverOutcome
from .qp import QpConfig, QpWorkspace
from .stiefel import StiefelPoint


class StructuralInfeasibilityError(ValueError):
    """A high-level column of the prior admits no support at all."""

    def __init__(self, column: int):
        super().__init__(f"prior column {column} has no admissible entries")
        self.column = column


@dataclass(frozen=True)
class CLinConfig:
    rho: float = 1.0
    tau_sca: float = 1e-3
    eps_step: float = 0.1
    tau_inner: float = 1e-3
    tau_abs: float = 1e-4
    tau_rel: float = 1e-4
    max_outer: int = 3000
    max_sca_iters: int = 200
    qp: QpConfig = field(default_factory=QpConfig)

    def __post_init__(self):
        if min(self.rho, self.tau_sca, self.tau_inner, self.tau_abs, self.tau_rel) <= 0:
            raise ValueError("rho and tolerances must be positive")
        if not 0.0 < self.eps_step < 1.0:
            raise ValueError("eps_step must lie in (0, 1)")
        if self.max_outer <= 0 or self.max_sca_iters <= 0:
            raise ValueError("iteration caps must be positive")


@dataclass(frozen=True)
class CLinState:
    v: np.ndarray
    s: np.ndarray
    y1: StiefelPoint
    y2: StiefelPoint
    x: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    w: np.ndarray
    iter: int = 0
    d_p: tuple = (np.inf, np.inf, np.inf)
    d_d: tuple = (np.inf, np.inf, np.inf)


def project_stiefel(a: np.ndarray) -> StiefelPoint:
    """Closest orthonormal frame to a full-column-rank matrix."""
    return StiefelPoint(polar(np.asarray(a, float)).orthogonal)


def project_assignment(a: np.ndarray) -> np.ndarray:
    """Round each column to a single one at the entry nearest to one.

    Ties pick the smallest row index, which keeps the rounding
    deterministic.
    """
    a = np.asarray(a, dtype=float)
    out = np.zeros_like(a)
    rows = np.argmin(np.abs(a - 1.0), axis=0)
    out[rows, np.arange(a.shape[1])] = 1.0
    return out


def _sca_step_weights(gamma: float, eps: float) -> float:
    return gamma * (1.0 - eps * gamma)


def sca_v_step(state: CLinState, cov: obj.CovariancePair, mask: obj.PriorMask, cfg: CLinConfig) -> np.ndarray:
    """Inner loop for the coefficient block at a fixed support iterate."""
    bs = mask.b * state.s
    denom = cfg.tau_sca + cfg.rho * bs * bs
    target = cfg.rho * bs * (state.y1.v - state.u1)
    v = state.v
    gamma = 1.0
    for _ in range(cfg.max_sca_iters):
        grad = obj.egrad_masked_v(cov, mask, state.s, v)
        v_surrogate = (target + cfg.tau_sca * v - grad) / denom
        v_next = v + gamma * (v_surrogate - v)
        gamma = _sca_step_weights(gamma, cfg.eps_step)
        shift = float(np.linalg.norm(v_next - v))
        v = v_next
        if shift <= cfg.tau_inner:
            break
    return v


def sca_s_step(
    state: CLinState,
    v_new: np.ndarray,
    cov: obj.CovariancePair,
    mask: obj.PriorMask,
    cfg: CLinConfig,
) -> np.ndarray:
    """Inner loop for the support block at the refreshed coefficients.

    Each pass solves one QP with a diagonal quadratic term, masked row-sum
    inequalities keeping every high-level variable covered, and the unit
    box.
    """
    b = mask.b
    l, h = b.shape
    col_support = b.sum(axis=0)
    empty = np.where(col_support < 1)[0]
    if empty.size:
        raise StructuralInfeasibilityError(int(empty[0]))

    vec_b = b.ravel(order="F")
    vec_v = v_new.ravel(order="F")
    bv = vec_b * vec_v
    q_diag = cfg.tau_sca + cfg.rho * bv * bv + cfg.rho * vec_b
    g_rows = np.zeros((h, l * h))
    for j in range(h):
        g_rows[j, j * l : (j + 1) * l] = b[:, j]
    ws = QpWorkspace(
        q_diag, ineq=(g_rows, np.ones(h)), bounds=(np.zeros(l * h), np.ones(l * h)), cfg=cfg.qp
    )

    y2u2 = (state.y2.v - state.u2).ravel(order="F")
    xw = ((state.x - state.w).T).ravel(order="F")
    s = state.s
    gamma = 1.0
    for _ in range(cfg.max_sca_iters):
        grad = obj.egrad_masked_s(cov, mask, s, v_new)
        c = (
            grad.ravel(order="F")
            - cfg.tau_sca * s.ravel(order="F")
            - cfg.rho * y2u2 * bv
            - cfg.rho * vec_b * xw
        )
        s_surrogate = ws.solve(c).reshape((l, h), order="F")
        s_next = s + gamma * (s_surrogate - s)
        gamma = _sca_step_weights(gamma, cfg.eps_step)
        shift = float(np.linalg.norm(s_next - s))
        s = s_next
        if shift <= cfg.tau_inner:
            break
    return np.clip(s, 0.0, 1.0)


def step(state: CLinState, cov: obj.CovariancePair, mask: obj.PriorMask, cfg: CLinConfig) -> CLinState:
    """One outer iteration of the partial-prior recursion.

    The first frame copy and its dual are tied to the pre-update support,
    the second to the refreshed one; the assignment copy follows the
    refreshed support.
    """
    b, rho = mask.b, cfg.rho
    s_k = state.s
    v_new = sca_v_step(state, cov, mask, cfg)
    s_new = sca_s_step(state, v_new, cov, mask, cfg)

    map_old_s = b * s_k * v_new
    map_new_s = b * v_new * s_new
    y1_new = project_stiefel(map_old_s + state.u1)
    y2_new = project_stiefel(map_new_s + state.u2)
    x_new = project_assignment((b * s_new).T + state.w)

    u1_new = state.u1 + map_old_s - y1_new.v
    u2_new = state.u2 + map_new_s - y2_new.v
    w_new = state.w + (b * s_new).T - x_new

    d_p = (
        float(np.linalg.norm(y1_new.v - map_old_s)),
        float(np.linalg.norm(y2_new.v - map_new_s)),
        float(np.linalg.norm(x_new - (b * s_new).T)),
    )
    d_d = (
        float(np.linalg.norm(rho * b * s_k * (y1_new.v - state.y1.v))),
        float(np.linalg.norm(rho * b * v_new * (y2_new.v - state.y2.v))),
        float(np.linalg.norm(rho * b * (x_new - state.x).T)),
    )
    return CLinState(
        v=v_new,
        s=s_new,
        y1=y1_new,
        y2=y2_new,
        x=x_new,
        u1=u1_new,
        u2=u2_new,
        w=w_new,
        iter=state.iter + 1,
        d_p=d_p,
        d_d=d_d,
    )


def _partial_stop(state: CLinState, mask: obj.PriorMask, cfg: CLinConfig) -> bool:
    b, rho = mask.b, cfg.rho
    l, h = b.shape
    floor = cfg.tau_abs * np.sqrt(l * h)
    tr = cfg.tau_rel
    scale_p = (
        max(np.linalg.norm(state.y1.v), np.linalg.norm(b * state.s * state.v)),
        max(np.linalg.norm(state.y2.v), np.linalg.norm(b * state.v * state.s)),
        max(np.linalg.norm(state.x), np.linalg.norm(b * state.s)),
    )
    scale_d = (
        rho * np.linalg.norm(b * state.s * state.u1),
        rho * np.linalg.norm(b * state.v * state.u2),
        rho * np.linalg.norm(b.T * state.w),
    )
    primal_ok = all(d <= floor + tr * sc for d, sc in zip(state.d_p, scale_p))
    dual_ok = all(d <= floor + tr * sc for d, sc in zip(state.d_d, scale_d))
    return primal_ok and dual_ok


def init_state(x0_v: np.ndarray, mask: obj.PriorMask, s0: np.ndarray | None = None) -> CLinState:
    s0 = mask.b.copy() if s0 is None else np.asarray(s0, dtype=float)
    x0 = project_assignment(mask.b.T)
    w0 = (mask.b * s0).T - x0
    product = mask.b * s0 * np.asarray(x0_v, float)
    y0 = project_stiefel(product)
    return CLinState(
        v=np.asarray(x0_v, float),
        s=s0,
        y1=y0,
        y2=y0,
        x=x0,
        u1=product - y0.v,
        u2=product - y0.v,
        w=w0,
    )


def _trace_kl(cov: obj.CovariancePair, a: np.ndarray) -> float:
    try:
        return obj.kl_of_matrix(cov, a)
    except (obj.NotPositiveDefiniteError, np.linalg.LinAlgError):
        return np.inf


def solve(
    cov: obj.CovariancePair,
    mask: obj.PriorMask,
    cfg: CLinConfig,
    x0: np.ndarray,
    s0: np.ndarray | None = None,
) -> SolverOutcome:
    """Partial-prior solve; the reported support is the assignment copy.

    The effective learned map is the masked triple product; the rounding
    disagreement between the assignment copy and the continuous support is
    logged in the flags.
    """
    state = init_state(x0, mask, s0=s0)
    kl_trace = []
    primal_traces: list[tuple] = []
    dual_traces: list[tuple] = []
    converged = False
    for _ in range(cfg.max_outer):
        state = step(state, cov, mask, cfg)
        kl_trace.append(_trace_kl(cov, mask.b * state.s * state.v))
        primal_traces.append(state.d_p)
        dual_traces.append(state.d_d)
        if _partial_stop(state, mask, cfg):
            converged = True
            break
    v_eff = mask.b * state.s * state.v
    support = state.x.T.copy()
    return SolverOutcome(
        v_hat=v_eff,
        converged=converged,
        iterations=state.iter,
        kl_trace=kl_trace,
        traces={"primal": primal_traces, "dual": dual_traces},
        s_hat=state.s,
        x_hat=state.x,
        support=support,
        flags={"support_disagreement": float(np.linalg.norm(state.x - (mask.b * state.s).T))},
    )


def _check_full_prior(mask: obj.PriorMask) -> None:
    b = mask.b
    if not np.all(b.sum(axis=1) == 1):
        raise ValueError("full-prior mask needs exactly one entry per row")
    if np.any(b.sum(axis=0) < 1):
        raise ValueError("full-prior mask needs a nonempty support in every column")


def solve_full_prior(
    cov: obj.CovariancePair,
    mask: obj.PriorMask,
    cfg: CLinConfig,
    x0: np.ndarray,
) -> SolverOutcome:
    """Reduced recursion when the prior pins the support completely."""
    _check_full_prior(mask)
    b, rho = mask.b, cfg.rho
    l, h = b.shape
    ones = np.ones_like(b)
    v = np.asarray(x0, dtype=float)
    y = project_stiefel(b * v)
    u = b * v - y.v
    denom = cfg.tau_sca + rho * b
    floor = cfg.tau_abs * np.sqrt(l * h)

    kl_trace, primal_trace, dual_trace = [], [], []
    converged = False
    iters = 0
    for _ in range(cfg.max_outer):
        target = rho * b * (y.v - u)
        gamma = 1.0
        for _ in range(cfg.max_sca_iters):
            grad = obj.egrad_masked_v(cov, mask, ones, v)
            v_surrogate = (target + cfg.tau_sca * v - grad) / denom
            v_next = v + gamma * (v_surrogate - v)
            gamma = _sca_step_weights(gamma, cfg.eps_step)
            shift = float(np.linalg.norm(v_next - v))
            v = v_next
            if shift <= cfg.tau_inner:
                break
        y_old = y
        y = project_stiefel(b * v + u)
        u = u + b * v - y.v
        iters += 1
        d_p = float(np.linalg.norm(y.v - b * v))
        d_d = float(np.linalg.norm(rho * b * (y.v - y_old.v)))
        kl_trace.append(_trace_kl(cov, b * v))
        primal_trace.append(d_p)
        dual_trace.append(d_d)
        p_ok = d_p <= floor + cfg.tau_rel * max(np.linalg.norm(y.v), np.linalg.norm(b * v))
        d_ok = d_d <= floor + cfg.tau_rel * rho * np.linalg.norm(b * u)
        if p_ok and d_ok:
            converged = True
            break
    return SolverOutcome(
        v_hat=b * v,
        converged=converged,
        iterations=iters,
        kl_trace=kl_trace,
        traces={"primal": primal_trace, "dual": dual_trace},
        s_hat=None,
        x_hat=None,
        support=None,
        flags={},
    )
