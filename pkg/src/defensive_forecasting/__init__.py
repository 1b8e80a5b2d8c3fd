"""Kernel defensive forecasting: neutral probability forecasts, decision
making on top of them, capital processes that test them, and evaluation."""

from .decision import DecisionConfig, LossSpec, MasterPredictor, choice, choice_batch, expected_loss
from .forecaster import ForecastState
from .kernel import (
    Constant,
    Gaussian,
    InfPoly,
    Kernel,
    Kronecker,
    Linear,
    OneHotGaussian,
    Product,
    Scaled,
    WeightedSum,
    direct_sum,
    eval_kernel,
    gram_matrix,
    imbedding_constant,
    unit_residual_kernel,
    kernel_from_dict,
)
from .metrics import calibration_bins, hoeffding_band, kernel_discrepancy, regret, regret_bound
from .points import DomainError, ForecastPoint, InputError, PointBatch
from .skeptic import MixtureSkeptic, QuadraticSkeptic, SLLNSkeptic, make_skeptic
from .solvers import SolverFailure, binary_root, simplex_root
from .transcript import Round, Transcript

__version__ = "0.1.0"

__all__ = [
    "Constant",
    "DecisionConfig",
    "DomainError",
    "ForecastPoint",
    "ForecastState",
    "Gaussian",
    "InfPoly",
    "InputError",
    "Kernel",
    "Kronecker",
    "Linear",
    "LossSpec",
    "MasterPredictor",
    "MixtureSkeptic",
    "OneHotGaussian",
    "PointBatch",
    "Product",
    "QuadraticSkeptic",
    "Round",
    "SLLNSkeptic",
    "Scaled",
    "SolverFailure",
    "Transcript",
    "WeightedSum",
    "binary_root",
    "calibration_bins",
    "choice",
    "choice_batch",
    "direct_sum",
    "eval_kernel",
    "expected_loss",
    "gram_matrix",
    "hoeffding_band",
    "imbedding_constant",
    "unit_residual_kernel",
    "kernel_discrepancy",
    "kernel_from_dict",
    "make_skeptic",
    "regret",
    "regret_bound",
    "simplex_root",
]
