"""Common result record returned by every solver."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class SolverOutcome:
    """What a solve produced.

    ``v_hat`` is the effective learned map (already composed with any
    structural mask), so the abstraction itself is its transpose. Solvers
    that learn a support report it in ``support`` as a 0/1 matrix of the
    same shape; others leave it ``None`` and downstream scoring thresholds
    ``v_hat``.
    """

    v_hat: np.ndarray
    converged: bool
    iterations: int
    kl_trace: list = field(default_factory=list)
    traces: dict = field(default_factory=dict)
    s_hat: np.ndarray | None = None
    x_hat: np.ndarray | None = None
    support: np.ndarray | None = None
    flags: dict = field(default_factory=dict)
