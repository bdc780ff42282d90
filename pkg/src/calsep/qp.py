"""Operator-splitting solver for diagonal quadratic programs.

Minimizes ``0.5 x' diag(q) x + c'x`` under row inequalities ``G x >= rhs``
and box bounds. The diagonal quadratic term is preconditioned to the
identity before splitting, which keeps the iteration count independent of
the spread of ``q``; an active-set polish then solves the KKT equalities
exactly, so returned points satisfy stationarity, feasibility, and
complementarity to near machine precision. Everything is deterministic:
fixed initialization, no randomness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .numerics import NumericalFailureError


class InfeasibleProblemError(ValueError):
    """The constraint system has no point inside the box."""


@dataclass(frozen=True)
class QpConfig:
    max_qp_iters: int = 20000
    qp_rho: float = 1.0
    tol_primal: float = 1e-10
    tol_dual: float = 1e-10
    tol_kkt: float = 1e-8
    polish_every: int = 25

    def __post_init__(self):
        if self.max_qp_iters <= 0 or self.qp_rho <= 0:
            raise ValueError("iteration cap and penalty must be positive")
        if min(self.tol_primal, self.tol_dual, self.tol_kkt) <= 0:
            raise ValueError("tolerances must be positive")


def _kkt_residuals(q, c, a_mat, lo, hi, x, y):
    stat = float(np.max(np.abs(q * x + c + a_mat.T @ y)))
    ax = a_mat @ x
    below = np.where(np.isfinite(lo), lo - ax, -np.inf)
    above = np.where(np.isfinite(hi), ax - hi, -np.inf)
    prim = float(max(below.max(initial=0.0), above.max(initial=0.0), 0.0))
    slack_lo = np.where(np.isfinite(lo), np.maximum(ax - lo, 0.0), np.inf)
    slack_hi = np.where(np.isfinite(hi), np.maximum(hi - ax, 0.0), np.inf)
    comp_terms = np.where(y < 0, -y * slack_lo, np.where(y > 0, y * slack_hi, 0.0))
    comp = float(np.max(comp_terms, initial=0.0))
    return stat, prim, comp


class QpWorkspace:
    """Reusable solver for a fixed (q, G, bounds) and varying linear term."""

    def __init__(self, q_diag, ineq=None, bounds=None, cfg: QpConfig | None = None):
        self.cfg = cfg or QpConfig()
        self.q = np.asarray(q_diag, dtype=float)
        if np.any(self.q <= 0):
            raise ValueError("diagonal of the quadratic term must be positive")
        n = self.q.size

        if bounds is None:
            self.lb = np.full(n, -np.inf)
            self.ub = np.full(n, np.inf)
        else:
            self.lb = np.broadcast_to(np.asarray(bounds[0], float), (n,)).copy()
            self.ub = np.broadcast_to(np.asarray(bounds[1], float), (n,)).copy()
            if np.any(self.lb > self.ub):
                raise InfeasibleProblemError("box is empty")

        if ineq is None:
            self.g_mat = np.zeros((0, n))
            self.rhs = np.zeros(0)
        else:
            self.g_mat = np.atleast_2d(np.asarray(ineq[0], float))
            self.rhs = np.atleast_1d(np.asarray(ineq[1], float))
            # certificate over the box: a row whose best value misses rhs is infeasible
            best = np.where(self.g_mat > 0, self.g_mat * self.ub, self.g_mat * self.lb)
            best = np.where(self.g_mat == 0, 0.0, best).sum(axis=1)
            bad = np.where(best < self.rhs - 1e-12)[0]
            if bad.size:
                raise InfeasibleProblemError(
                    f"inequality rows {bad.tolist()} unreachable inside the box"
                )

        m = self.g_mat.shape[0]
        self.separable = m == 0
        if not self.separable:
            # precondition x = scale * xt so the quadratic term becomes I
            self.scale = 1.0 / np.sqrt(self.q)
            g_t = self.g_mat * self.scale
            has_box = np.any(np.isfinite(self.lb)) or np.any(np.isfinite(self.ub))
            blocks = [g_t] + ([np.eye(n)] if has_box else [])
            self.a_t = np.vstack(blocks)
            self.lo_t = np.concatenate([self.rhs, self.lb / self.scale] if has_box else [self.rhs])
            self.hi_t = np.concatenate(
                [np.full(m, np.inf), self.ub / self.scale] if has_box else [np.full(m, np.inf)]
            )
            k = np.eye(n) + self.cfg.qp_rho * self.a_t.T @ self.a_t
            self.k_factor = scipy.linalg.cho_factor(k, lower=True)
            # original-space constraint system for KKT checks
            self.a_mat = np.vstack([self.g_mat] + ([np.eye(n)] if has_box else []))
            self.lo = np.concatenate([self.rhs, self.lb] if has_box else [self.rhs])
            self.hi = np.concatenate(
                [np.full(m, np.inf), self.ub] if has_box else [np.full(m, np.inf)]
            )
            self.z = None
            self.w = None

    def solve(self, c) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        if self.separable:
            return np.clip(-c / self.q, self.lb, self.ub)
        return self._splitting(c)

    def _splitting(self, c) -> np.ndarray:
        cfg = self.cfg
        rho = cfg.qp_rho
        a_t, lo_t, hi_t = self.a_t, self.lo_t, self.hi_t
        c_t = c * self.scale
        if self.z is None:
            self.z = np.clip(a_t @ (-c_t), lo_t, hi_t)
            self.w = np.zeros(a_t.shape[0])
        z, w = self.z, self.w

        for it in range(cfg.max_qp_iters):
            xt = scipy.linalg.cho_solve(self.k_factor, -c_t + rho * a_t.T @ (z - w))
            ax = a_t @ xt
            z_old = z
            z = np.clip(ax + w, lo_t, hi_t)
            w = w + ax - z
            r_p = float(np.max(np.abs(ax - z)))
            r_d = float(np.max(np.abs(rho * a_t.T @ (z - z_old))))
            settled = r_p <= cfg.tol_primal and r_d <= cfg.tol_dual
            if settled or (it + 1) % cfg.polish_every == 0:
                x = xt * self.scale
                polished = self._polish(c, x, z, rho * w)
                if polished is not None:
                    self.z, self.w = z, w
                    return polished
                if settled:
                    m = self.g_mat.shape[0]
                    y = rho * w.copy()
                    if self.a_mat.shape[0] > m:
                        y[m:] /= self.scale
                    stat, prim, comp = _kkt_residuals(
                        self.q, c, self.a_mat, self.lo, self.hi, x, y
                    )
                    if max(stat, prim, comp) <= cfg.tol_kkt:
                        self.z, self.w = z, w
                        return x
        raise NumericalFailureError("splitting QP did not reach KKT tolerance", self.q.size)

    def _polish(self, c, x, z, y_t) -> np.ndarray | None:
        """Solve the KKT equalities on the detected active set.

        Activity is detected primally (projected iterate at its bound)
        with the dual sign as a tie-breaker; near-degenerate multipliers
        are kept and only hard sign inconsistencies rejected.
        """
        n = self.q.size
        atol = 1e-7
        at_lo = (z <= self.lo_t + atol) & np.isfinite(self.lo_t)
        at_hi = (z >= self.hi_t - atol) & np.isfinite(self.hi_t)
        act_lo = np.where(at_lo & (y_t <= 1e-9))[0]
        act_hi = np.where(at_hi & (y_t >= -1e-9))[0]
        rows = np.concatenate([act_lo, act_hi])
        y_full = np.zeros(self.a_mat.shape[0])
        if rows.size == 0:
            x_new = -c / self.q
            stat, prim, comp = _kkt_residuals(
                self.q, c, self.a_mat, self.lo, self.hi, x_new, y_full
            )
            return x_new if max(stat, prim, comp) <= self.cfg.tol_kkt else None
        a_act = self.a_mat[rows]
        b_act = np.concatenate([self.lo[act_lo], self.hi[act_hi]])
        k = rows.size
        kkt = np.zeros((n + k, n + k))
        kkt[:n, :n] = np.diag(self.q)
        kkt[:n, n:] = a_act.T
        kkt[n:, :n] = a_act
        rhs = np.concatenate([-c, b_act])
        sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
        x_new = sol[:n]
        y_full[rows] = sol[n:]
        if np.any(y_full[act_lo] > 1e-8) or np.any(y_full[act_hi] < -1e-8):
            return None
        # clamp tiny wrong-signed multipliers from the least-squares solve
        y_full[act_lo] = np.minimum(y_full[act_lo], 0.0)
        y_full[act_hi] = np.maximum(y_full[act_hi], 0.0)
        stat, prim, comp = _kkt_residuals(self.q, c, self.a_mat, self.lo, self.hi, x_new, y_full)
        return x_new if max(stat, prim, comp) <= self.cfg.tol_kkt else None


def qp_solve(q_diag, c, ineq=None, bounds=None, cfg: QpConfig | None = None) -> np.ndarray:
    """One-shot solve; see :class:`QpWorkspace` for the reusable form."""
    return QpWorkspace(q_diag, ineq=ineq, bounds=bounds, cfg=cfg).solve(c)
