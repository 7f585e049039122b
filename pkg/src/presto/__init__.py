"""Fused-difference relaxation of the proportional odds model for rare ordinal classes."""

from .estimators import (
    CvReport,
    Standardizer,
    cross_validate_presto,
    fit_logistic_rare,
    fit_presto,
    fit_proportional_odds,
)
from .evaluation import (
    binned_calibration_mse,
    brier_score,
    paired_t_test_one_tailed,
    rare_prob_mse,
)
from .exceptions import (
    DegenerateData,
    DidNotConverge,
    ExperimentAborted,
    FeasibilityRetriesExhausted,
    FoldAssignmentError,
    InfeasibleProbabilities,
    InfeasibleStart,
    NoValidLambda,
    NotDifferentiable,
    PrestoError,
    Separation,
    SplitRetriesExhausted,
)
from .fisher import (
    ConditionReport,
    FisherBlocks,
    fisher_blocks_plugin,
    gen_truncated_gaussian_design,
    logistic_fisher,
    theorem3_condition,
)
from .harness import ExperimentSpec, SummaryTable, run_fisher_study, run_split_sample, run_synthetic
from .ordinal import (
    CoefficientSet,
    Dataset,
    class_probabilities,
    logistic_cdf,
    negative_log_likelihood,
    nll_gradient,
    probability_table,
    rare_class_probability,
    theta_to_beta,
    beta_to_theta,
)
from .solver import FitResult, PenaltySpec, SolverOptions, fit_penalized, kkt_check, lambda_path, soft_threshold
from .synthgen import GroundTruth, ScenarioConfig, generate_scenario, replication_seed

__version__ = "0.1.0"
