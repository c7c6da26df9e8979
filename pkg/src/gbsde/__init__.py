"""Numerical solvers for backward equations under volatility uncertainty.

The package solves terminal-value problems for the sublinear heat operator
G(a) = (sigma_hi^2 a+ - sigma_lo^2 a-)/2 with Lipschitz drivers, evaluates
sublinear expectations of path-increment payoffs by lattice recursion with
dual Monte Carlo lower bounds, extracts the solution triple (Y, Z, K) along
simulated paths, and verifies the structural properties the triple must
satisfy (K decreasing with zero tolerance, martingale gap, regularity, a
priori estimates).

Hot kernels run on a compiled backend when available, with a pure-numpy
fallback producing bit-identical values; select with GBSDE_KERNEL
(auto, c, python).
"""

__version__ = "0.1.0"

from ._kernels import available_backends, backend_name
from .core import (
    BudgetError,
    CFLError,
    DEFAULT_WIDTH_MULT,
    DomainError,
    GBSDEError,
    Generator,
    Grids,
    NumericalError,
    Payoff,
    VolatilityBand,
    g_function,
    gamma_argmax,
    song_constant,
    spot_check_lipschitz,
    worker_count,
)
from .exprlang import (
    Expression,
    ExpressionError,
    evaluate,
    parse_expression,
    to_source,
)
from .pde import (
    ValueSurface,
    advance_terminal,
    first_derivative,
    second_derivative,
    solve_gheat,
    write_surface_csv,
)
from .expectation import (
    AdaptiveCurvatureControl,
    IncrementPayoff,
    PathBundle,
    TabulatedConditional,
    VolControl,
    conditional_g_expectation,
    evaluate_controls,
    g_expectation,
    mc_bound,
    random_controls,
    simulate_paths,
    sup_over_controls,
)
from .bsde import (
    SolutionTriple,
    SurfaceTriple,
    TwoEpochProblem,
    TwoEpochSolution,
    bsde_residual,
    extract_triple,
    residual_profile,
    solve_markovian,
    solve_two_epoch,
)
from .verify import (
    VerifyReport,
    check_decreasing,
    check_estimate_Y,
    check_estimate_ZK,
    check_lipschitz,
    check_martingale_K,
    check_stability,
)

__all__ = [
    "__version__",
    "available_backends",
    "backend_name",
    "GBSDEError",
    "DomainError",
    "CFLError",
    "BudgetError",
    "NumericalError",
    "VolatilityBand",
    "Grids",
    "Payoff",
    "Generator",
    "g_function",
    "gamma_argmax",
    "song_constant",
    "spot_check_lipschitz",
    "worker_count",
    "DEFAULT_WIDTH_MULT",
    "Expression",
    "ExpressionError",
    "parse_expression",
    "evaluate",
    "to_source",
    "ValueSurface",
    "solve_gheat",
    "advance_terminal",
    "first_derivative",
    "second_derivative",
    "write_surface_csv",
    "VolControl",
    "AdaptiveCurvatureControl",
    "IncrementPayoff",
    "PathBundle",
    "TabulatedConditional",
    "simulate_paths",
    "g_expectation",
    "conditional_g_expectation",
    "mc_bound",
    "evaluate_controls",
    "random_controls",
    "sup_over_controls",
    "SurfaceTriple",
    "SolutionTriple",
    "solve_markovian",
    "extract_triple",
    "residual_profile",
    "bsde_residual",
    "TwoEpochProblem",
    "TwoEpochSolution",
    "solve_two_epoch",
    "VerifyReport",
    "check_decreasing",
    "check_martingale_K",
    "check_lipschitz",
    "check_estimate_Y",
    "check_estimate_ZK",
    "check_stability",
]
