from .admm import (
    ConvergenceTrace,
    ReconError,
    ReconProblem,
    SolverConfig,
    admm_solve,
    data_gradient,
    data_objective,
    least_squares_solution,
    objective,
)
from .tv import prox_tv_iso, tv_iso
from .wavelet import dwt2, idwt2, prox_wavelet_cyclespin, soft_threshold
from .weights import WlsWeights, weights_full, weights_prediction, weights_undersampled

__all__ = [
    "ConvergenceTrace",
    "ReconError",
    "ReconProblem",
    "SolverConfig",
    "WlsWeights",
    "admm_solve",
    "data_gradient",
    "data_objective",
    "dwt2",
    "idwt2",
    "least_squares_solution",
    "objective",
    "prox_tv_iso",
    "prox_wavelet_cyclespin",
    "soft_threshold",
    "tv_iso",
    "weights_full",
    "weights_prediction",
    "weights_undersampled",
]
