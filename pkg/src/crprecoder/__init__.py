"""Zero-forcing precoder design for cognitive-radio MIMO downlinks.

The secondary BS serves its users with zero-forcing precoders that maximize
the sum rate under per-antenna (or sum) power limits and interference limits
at primary receivers. The design is computed on the dual uplink problem with
a barrier method and mapped back to downlink precoders.
"""

from .baselines import naive_newton_oracle, scheme1_full_zf, scheme2_svd_zf
from .channels import ChannelSet, Scenario, exp_correlation_matrix, generate_channels
from .duality import (PrecoderSolution, bc_sum_rate, design_precoders, factor_precoder,
                      recover_precoders)
from .errors import (ConfigError, FailureBudgetExceeded, IllConditioned, InfeasibleZf,
                     InvalidScenario, LineSearchStalled, MaxIterations, NotPositiveDefinite,
                     PrecoderError, SingularKkt, SizeGuard)
from .saddle import (ConvergenceTrace, DualIterate, NewtonStep, SolverOptions,
                     assemble_newton, build_spc_context, kkt_residual, line_search,
                     mac_objective, solve_saddle)
from .stein import SteinFactor, stein_factorize, stein_solve
from .zf import ZfContext, build_zf_context, null_space_basis, stack_other_channels

__version__ = "0.1.0"

__all__ = [
    "Scenario", "ChannelSet", "exp_correlation_matrix", "generate_channels",
    "ZfContext", "build_zf_context", "null_space_basis", "stack_other_channels",
    "SteinFactor", "stein_factorize", "stein_solve",
    "SolverOptions", "DualIterate", "NewtonStep", "ConvergenceTrace",
    "mac_objective", "kkt_residual", "assemble_newton", "line_search", "solve_saddle",
    "build_spc_context",
    "PrecoderSolution", "recover_precoders", "bc_sum_rate", "factor_precoder",
    "design_precoders",
    "scheme1_full_zf", "scheme2_svd_zf", "naive_newton_oracle",
    "PrecoderError", "InvalidScenario", "InfeasibleZf", "NotPositiveDefinite",
    "IllConditioned", "SingularKkt", "LineSearchStalled", "MaxIterations", "SizeGuard",
    "FailureBudgetExceeded", "ConfigError",
]
