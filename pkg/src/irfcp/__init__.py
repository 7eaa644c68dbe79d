"""Sequential Bayesian change-point detection as iterated random functions."""

from .approx import algorithm1_step, approx_step_full, lipschitz_bound_tap, t_ap, tap_operator
from .classic import ClassicModel, GaussianSpec, posterior_path, shiryayev_run
from .config import ExperimentConfig, load_config, preset_network
from .errors import (
    ArgumentError,
    BoundUndefinedError,
    ConfigError,
    DegenerateObservationError,
    DegenerateUpdateError,
    EnumerationBudgetError,
    ExactConvergence,
    IrfcpError,
    UnsupportedTopologyError,
)
from .exact import brute_force_posterior, build_tex, exact_step, lipschitz_bound_tex, tex_operator
from .irf import IrfOperator, iterate, rate_fit, theorem1_bound
from .network import Network, gaussian_network
from .simplex import BernoulliPair, ProbVec, WeightVec, bayes_update, marginal, tensor_product

__all__ = [
    "ArgumentError", "BernoulliPair", "BoundUndefinedError", "ClassicModel", "ConfigError",
    "DegenerateObservationError", "DegenerateUpdateError", "EnumerationBudgetError",
    "ExactConvergence", "ExperimentConfig", "GaussianSpec", "IrfOperator", "IrfcpError",
    "Network", "ProbVec", "UnsupportedTopologyError", "WeightVec", "algorithm1_step",
    "approx_step_full", "bayes_update", "brute_force_posterior", "build_tex", "exact_step",
    "gaussian_network", "iterate", "lipschitz_bound_tap", "lipschitz_bound_tex", "load_config",
    "marginal", "posterior_path", "preset_network", "rate_fit", "shiryayev_run", "t_ap",
    "tap_operator", "tensor_product", "tex_operator", "theorem1_bound",
]
