"""Near-optimal experimental design by convex relaxation and swap rounding."""

from .core import ConfigurationError, InfeasibleError, InputError, SingularityError
from .criteria import Criterion, evaluate, grad_sigma, t_optimal_exact
from .relaxation import FractionalDesign, MdConfig, project_box_simplex, solve_relaxation
from .rounding import IntegralDesign, find_constant, round_design, round_fractional, select, whiten

__all__ = [
    "ConfigurationError", "InfeasibleError", "InputError", "SingularityError",
    "Criterion", "evaluate", "grad_sigma", "t_optimal_exact",
    "FractionalDesign", "MdConfig", "project_box_simplex", "solve_relaxation",
    "IntegralDesign", "find_constant", "round_design", "round_fractional", "select", "whiten",
]
