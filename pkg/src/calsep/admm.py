"""Nonsmooth abstraction learning by manifold ADMM.

The L1-penalized objective is split into a manifold block (solved inexactly
by the smooth Riemannian engine, warm-started) and a soft-thresholding
block, with a scaled dual update and the usual primal/dual stopping rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import objective as obj
from .outcome import SolverOutcome
from .smooth import SmoothSolverConfig, minimize
from .stiefel import StiefelPoint


@dataclass(frozen=True)
class AdmmConfig:
    rho: float = 1.0
    lam: float = 1.0
    tau_abs: float = 1e-4
    tau_rel: float = 1e-4
    max_outer_iters: int = 2000
    inner: SmoothSolverConfig = field(
        default_factory=lambda: SmoothSolverConfig(max_iters=100, grad_tol=1e-6, direction="cg")
    )

    def __post_init__(self):
        if self.rho <= 0 or self.lam < 0:
            raise ValueError("rho must be positive and lam nonnegative")
        if self.tau_abs <= 0 or self.tau_rel <= 0 or self.max_outer_iters <= 0:
            raise ValueError("tolerances and iteration cap must be positive")


@dataclass(frozen=True)
class AdmmState:
    v: StiefelPoint
    y: np.ndarray
    u: np.ndarray
    iter: int = 0
    primal_norm: float = np.inf
    dual_norm: float = np.inf
    inner_stalled: bool = False


def soft_threshold(x, delta):
    """Shrink toward zero: ``sign(x) * max(|x| - delta, 0)``."""
    x = np.asarray(x, dtype=float)
    out = np.sign(x) * np.maximum(np.abs(x) - delta, 0.0)
    return out if out.ndim else float(out)


def init_state(x0: StiefelPoint, mask: obj.PriorMask) -> AdmmState:
    y0 = mask.d * x0.v
    u0 = np.zeros_like(y0)
    return AdmmState(v=x0, y=y0, u=u0)


def step(state: AdmmState, cov: obj.CovariancePair, mask: obj.PriorMask, cfg: AdmmConfig) -> AdmmState:
    """One outer iteration: manifold block, shrinkage block, dual ascent."""
    d, rho = mask.d, cfg.rho
    y_k, u_k = state.y, state.u

    def aug_obj(p: StiefelPoint) -> float:
        pen = d * p.v - y_k + u_k
        return obj.f_smooth(cov, p.v) + 0.5 * rho * float(np.sum(pen * pen))

    def aug_grad(p: StiefelPoint) -> np.ndarray:
        return obj.egrad_smooth(cov, p.v) + rho * d * (d * p.v - y_k + u_k)

    def aug_both(p: StiefelPoint):
        value, grad = obj.f_and_egrad_smooth(cov, p.v)
        pen = d * p.v - y_k + u_k
        return value + 0.5 * rho * float(np.sum(pen * pen)), grad + rho * d * pen

    v_new, trace = minimize(aug_obj, aug_grad, state.v, cfg.inner, value_and_grad=aug_both)

    y_new = soft_threshold(d * v_new.v + u_k, cfg.lam / rho)
    u_new = u_k + d * v_new.v - y_new

    primal = y_new - d * v_new.v
    dual = rho * d * (y_new - y_k)
    return AdmmState(
        v=v_new,
        y=y_new,
        u=u_new,
        iter=state.iter + 1,
        primal_norm=float(np.linalg.norm(primal)),
        dual_norm=float(np.linalg.norm(dual)),
        inner_stalled=trace.stalled,
    )


def _stop(state: AdmmState, mask: obj.PriorMask, cfg: AdmmConfig) -> bool:
    l, h = mask.shape
    floor = cfg.tau_abs * np.sqrt(l * h)
    dv = mask.d * state.v.v
    primal_ok = state.primal_norm <= floor + cfg.tau_rel * max(
        np.linalg.norm(state.y), np.linalg.norm(dv)
    )
    dual_ok = state.dual_norm <= floor + cfg.tau_rel * cfg.rho * np.linalg.norm(mask.d * state.u)
    return primal_ok and dual_ok


def solve(
    cov: obj.CovariancePair,
    mask: obj.PriorMask,
    cfg: AdmmConfig,
    x0: StiefelPoint,
) -> SolverOutcome:
    """Run the outer loop until the primal/dual rule fires or the cap hits.

    Non-convergence is reported through the ``converged`` flag, never as an
    exception; in that case the iterate with the best KL seen is returned
    to guard against oscillation of the unproven outer recursion.
    """
    state = init_state(x0, mask)
    kl_trace, primal_trace, dual_trace = [], [], []
    best_v, best_kl = state.v, obj.kl(cov, state.v)
    converged = False
    for _ in range(cfg.max_outer_iters):
        state = step(state, cov, mask, cfg)
        kl_now = obj.kl(cov, state.v)
        kl_trace.append(kl_now)
        primal_trace.append(state.primal_norm)
        dual_trace.append(state.dual_norm)
        if kl_now < best_kl:
            best_v, best_kl = state.v, kl_now
        if _stop(state, mask, cfg):
            converged = True
            break
    v_hat = state.v if converged else best_v
    return SolverOutcome(
        v_hat=v_hat.v,
        converged=converged,
        iterations=state.iter,
        kl_trace=kl_trace,
        traces={"primal": primal_trace, "dual": dual_trace},
        flags={"inner_stalled_last": state.inner_stalled, "best_kl": best_kl},
    )
