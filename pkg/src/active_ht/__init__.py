"""Active M-ary hypothesis testing: models, policies, bounds, simulation."""

from .belief import Belief, bayes_update, log_odds, map_hypothesis
from .bounds import (
    BinaryReport,
    BoundsReport,
    DiscriminationOptimum,
    ErrorExponents,
    Gains,
    LeadingOrderBounds,
    binary_specialize,
    compute_bounds,
    d_hat,
    dominance_check,
    gains_from_values,
    harmonic_reliability,
    kl_matrix,
    max_harmonic_reliability,
    max_reliability,
    maxmin_reliability,
    minmax_reliability,
    reliability,
    report_at_penalty,
    simplex_grid,
)
from .divergences import AlphaOptimum, Gaussian, alpha_max, kl, renyi, tilted_exponent
from .exceptions import (
    ActiveHTError,
    AssumptionError,
    BudgetError,
    DomainError,
    HorizonError,
    ImpossibleObservationError,
    ModelValidationError,
    UndefinedOddsError,
    UsageError,
)
from .model import (
    FiniteKernel,
    GaussianKernel,
    ObservationModel,
    RandomizedRule,
    ValidationReport,
    likelihood_ratio_bound,
    load_model,
    sample,
    save_model,
    validate,
)
from .oracle import (
    ExactEvaluation,
    OracleBudget,
    PairSandwich,
    PairwiseExact,
    backward_eval,
    exact_eval,
    exact_pairwise,
)
from .policies import (
    FixedRulePolicy,
    Policy,
    TwoPhasePolicy,
    build_policy,
    fixed_lambda_policy,
    nn_policy,
    sa_policy,
    sn_policy,
)
from .simulator import (
    BudgetPoint,
    ExponentEstimate,
    SimulationSummary,
    SweepPoint,
    TrialRecord,
    estimate_error_exponent,
    pairwise_error_rates,
    run_trials,
    stratified_hypotheses,
    sweep_L,
)

__version__ = "0.1.0"

__all__ = [
    "ActiveHTError",
    "AlphaOptimum",
    "AssumptionError",
    "Belief",
    "BinaryReport",
    "BoundsReport",
    "BudgetError",
    "BudgetPoint",
    "DiscriminationOptimum",
    "DomainError",
    "ErrorExponents",
    "ExactEvaluation",
    "ExponentEstimate",
    "FiniteKernel",
    "FixedRulePolicy",
    "Gains",
    "Gaussian",
    "GaussianKernel",
    "HorizonError",
    "ImpossibleObservationError",
    "ModelValidationError",
    "ObservationModel",
    "OracleBudget",
    "PairSandwich",
    "PairwiseExact",
    "Policy",
    "RandomizedRule",
    "SimulationSummary",
    "SweepPoint",
    "LeadingOrderBounds",
    "TrialRecord",
    "TwoPhasePolicy",
    "UndefinedOddsError",
    "UsageError",
    "ValidationReport",
    "alpha_max",
    "backward_eval",
    "bayes_update",
    "binary_specialize",
    "build_policy",
    "compute_bounds",
    "d_hat",
    "dominance_check",
    "estimate_error_exponent",
    "exact_eval",
    "exact_pairwise",
    "fixed_lambda_policy",
    "gains_from_values",
    "harmonic_reliability",
    "kl",
    "kl_matrix",
    "likelihood_ratio_bound",
    "load_model",
    "log_odds",
    "map_hypothesis",
    "max_harmonic_reliability",
    "max_reliability",
    "maxmin_reliability",
    "minmax_reliability",
    "nn_policy",
    "pairwise_error_rates",
    "reliability",
    "renyi",
    "report_at_penalty",
    "run_trials",
    "sa_policy",
    "sample",
    "save_model",
    "simplex_grid",
    "sn_policy",
    "stratified_hypotheses",
    "sweep_L",
    "tilted_exponent",
    "validate",
]
