"""First-order smooth minimization over orthonormal frames.

Riemannian gradient descent with Armijo backtracking; an optional
Fletcher-Reeves conjugate direction reuses the previous direction through
tangent re-projection instead of a vector transport.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .stiefel import (
    RETRACTION_KINDS,
    StiefelPoint,
    TangentVector,
    _project_tangent_array,
    _qr_retract_raw,
    _unsafe_point,
    retract,
)

MAX_HALVINGS = 50


@dataclass(frozen=True)
class SmoothSolverConfig:
    max_iters: int = 500
    grad_tol: float = 1e-6
    armijo_shrink: float = 0.5
    armijo_slope: float = 1e-4
    retraction: str = "qr"
    direction: str = "steepest"

    def __post_init__(self):
        if self.max_iters <= 0 or self.grad_tol <= 0:
            raise ValueError("max_iters and grad_tol must be positive")
        if not 0.0 < self.armijo_shrink < 1.0 or not 0.0 < self.armijo_slope < 1.0:
            raise ValueError("armijo parameters must lie in (0, 1)")
        if self.retraction not in RETRACTION_KINDS:
            raise ValueError(f"unknown retraction {self.retraction!r}")
        if self.direction not in ("steepest", "cg"):
            raise ValueError(f"unknown direction rule {self.direction!r}")


@dataclass
class SmoothTrace:
    objective: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    stalled: bool = False


def _retract_raw(v: np.ndarray, step: np.ndarray, kind: str) -> np.ndarray:
    if kind == "qr":
        return _qr_retract_raw(v + step)
    moved = retract(_unsafe_point(v), TangentVector(_unsafe_point(v), step), kind)
    return moved.v


def minimize(
    objective,
    egrad,
    x0: StiefelPoint,
    cfg: SmoothSolverConfig | None = None,
    value_and_grad=None,
):
    """Minimize a smooth function over the manifold from a given frame.

    ``objective`` maps a StiefelPoint to a float and ``egrad`` maps it to
    the ambient-space gradient matrix; ``value_and_grad``, when given,
    fuses both for the accepted-point evaluations. Returns
    ``(point, trace)``; the point is the best iterate seen if the line
    search stalls.
    """
    cfg = cfg or SmoothSolverConfig()
    x = np.asarray(x0.v, dtype=float)
    trace = SmoothTrace()

    if value_and_grad is None:
        fx = objective(_unsafe_point(x))
        raw_grad = egrad(_unsafe_point(x))
    else:
        fx, raw_grad = value_and_grad(_unsafe_point(x))
    best_x, best_f = x, fx

    grad = _project_tangent_array(x, raw_grad)
    gnorm = float(np.linalg.norm(grad))
    direction = -grad
    prev_gnorm_sq = gnorm * gnorm
    step = 1.0
    restart_every = x.shape[0] * x.shape[1]

    for it in range(cfg.max_iters):
        trace.objective.append(fx)
        trace.grad_norm.append(gnorm)
        trace.iterations = it
        if gnorm <= cfg.grad_tol:
            trace.converged = True
            break

        slope = float(np.sum(grad * direction))
        if slope >= 0.0:
            direction = -grad
            slope = -prev_gnorm_sq

        # fresh trial step grows from the last accepted one
        t = min(1.0, step / cfg.armijo_shrink)
        accepted = False
        for _ in range(MAX_HALVINGS):
            candidate = _retract_raw(x, t * direction, cfg.retraction)
            fc = objective(_unsafe_point(candidate))
            if fc <= fx + cfg.armijo_slope * t * slope:
                accepted = True
                break
            t *= cfg.armijo_shrink
        if not accepted:
            trace.stalled = True
            x, fx = best_x, best_f
            break

        x, fx, step = candidate, fc, t
        if fx < best_f:
            best_x, best_f = x, fx

        if value_and_grad is None:
            raw_grad = egrad(_unsafe_point(x))
        else:
            fx, raw_grad = value_and_grad(_unsafe_point(x))
        new_grad = _project_tangent_array(x, raw_grad)
        new_gnorm = float(np.linalg.norm(new_grad))
        if cfg.direction == "cg" and (it + 1) % restart_every != 0 and prev_gnorm_sq > 0:
            beta = (new_gnorm * new_gnorm) / prev_gnorm_sq
            direction = -new_grad + beta * _project_tangent_array(x, direction)
        else:
            direction = -new_grad
        grad, gnorm = new_grad, new_gnorm
        prev_gnorm_sq = gnorm * gnorm
    else:
        trace.iterations = cfg.max_iters
        trace.objective.append(fx)
        trace.grad_norm.append(gnorm)

    if not trace.objective:
        trace.objective.append(fx)
        trace.grad_norm.append(gnorm)
    return StiefelPoint(x), trace
