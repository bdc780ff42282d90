"""Linear causal abstraction learning between Gaussian structural models.

Learns an orthonormal-column map aligning a low-level covariance with a
high-level one by minimizing a KL objective over the manifold of frames,
with three solvers covering penalized, proximal, and constructive
formulations, plus a reproducible synthetic benchmark harness.
"""

__version__ = "0.1.0"

from .numerics import PolarFactors, SpdMatrix, polar, qr_q, spd_solve, sym_eig
from .objective import (
    CovariancePair,
    PriorMask,
    SpectralReport,
    egrad_masked_s,
    egrad_masked_v,
    egrad_smooth,
    f_masked,
    f_smooth,
    kl,
    kl_of_matrix,
    penalty_l1,
    spectral_feasibility,
)
from .outcome import SolverOutcome
from .stiefel import (
    NormalBasis,
    StiefelPoint,
    TangentVector,
    normal_basis,
    project_tangent,
    random_point,
    retract,
    riemannian_grad,
)

__all__ = [
    "CovariancePair",
    "NormalBasis",
    "PolarFactors",
    "PriorMask",
    "SolverOutcome",
    "SpdMatrix",
    "SpectralReport",
    "StiefelPoint",
    "TangentVector",
    "__version__",
    "egrad_masked_s",
    "egrad_masked_v",
    "egrad_smooth",
    "f_masked",
    "f_smooth",
    "kl",
    "kl_of_matrix",
    "normal_basis",
    "penalty_l1",
    "polar",
    "project_tangent",
    "qr_q",
    "random_point",
    "retract",
    "riemannian_grad",
    "spd_solve",
    "spectral_feasibility",
    "sym_eig",
]
