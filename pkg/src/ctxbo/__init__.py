"""Contextual black-box controller tuning with learned solution maps.

The package couples an inner Bayesian-optimization loop over controller
parameters with an outer adaptive-sampling loop over operating contexts,
learns the context-to-solution map with (multi-output) Gaussian
processes, and ships an intersection-crossing MPC benchmark as the
black-box objective.
"""

from .benchmarks import AnalyticBenchmark, AnalyticEvaluator, get_benchmark
from .bo import (AcquisitionConfig, ObjectiveEvaluator, SurrogateModel,
                 inner_bo, manage_dataset, optimize_acquisition, ucb)
from .domain import BoxDomain
from .errors import ConfigError, EvaluationError, NotFittedError, NumericalError
from .gp import (Dataset, GPRegressor, TrainConfig, gp_fit, gp_predict,
                 log_marginal_likelihood)
from .kernels import (KernelFactor, KernelSpec, kernel_eval, kernel_matrix,
                      matern32, product_kernel, squared_exponential)
from .mogp import (CoregionalizationMatrix, MOGPRegressor, mogp_fit,
                   mogp_predict)
from .solution import (OuterLoopConfig, SolutionModel, adapt, next_context,
                       outer_loop)

__all__ = [
    "AnalyticBenchmark", "AnalyticEvaluator", "get_benchmark",
    "AcquisitionConfig", "ObjectiveEvaluator", "SurrogateModel",
    "inner_bo", "manage_dataset", "optimize_acquisition", "ucb",
    "BoxDomain",
    "ConfigError", "EvaluationError", "NotFittedError", "NumericalError",
    "Dataset", "GPRegressor", "TrainConfig", "gp_fit", "gp_predict",
    "log_marginal_likelihood",
    "KernelFactor", "KernelSpec", "kernel_eval", "kernel_matrix",
    "matern32", "product_kernel", "squared_exponential",
    "CoregionalizationMatrix", "MOGPRegressor", "mogp_fit", "mogp_predict",
    "OuterLoopConfig", "SolutionModel", "adapt", "next_context", "outer_loop",
]

__version__ = "0.1.0"
