"""Horseshoe-like shrinkage toolkit: prior math, EM/LLA point estimates and MCMC."""
from .em import EmConfig, EmSolution, em_normal_means, em_regression, woodbury_solve
from .errors import (ConvergenceWarning, DegenerateStateError, DomainError, HsLikeError, NumericalError,
                     QuadratureError, SingularSystemError)
from .harness import (MeansDesign, RegressionDesign, SelectionMetrics, generate_means, generate_regression,
                      run_comparison, score)
from .lla import LlaConfig, WeightedL1Problem, lasso_baseline, one_step_hslike, solve_weighted_l1
from .mcmc import McmcChain, McmcConfig, run_chain, run_chain_regression
from .prior import (
    MixtureKind,
    PenaltySpec,
    QuadratureConfig,
    horseshoe_density_quadrature,
    hs_bounds,
    hslike_density,
    hslike_penalty,
    hslike_penalty_deriv,
    marginal_density,
    mixture_check,
    sample_slash_normal,
)
from .problems import NormalMeansProblem, RegressionProblem

__version__ = "0.1.0"
