"""Joint architecture + training-recipe search toolkit."""

from .space import (
    ArchConfig,
    Candidate,
    RecipeConfig,
    SearchSpaceDef,
    StageConfig,
    cardinality,
    compound_scale,
    load_space,
    validate_candidate,
)
from .encoding import CandidateEncoder, EncodingLayout, build_layout, encode, encode_batch
from .sampling import sample_qmc_pool, sample_uniform, sobol_sequence
from .cost import Constraint, CostReport, check_constraints, cost
from .predictor import FitReport, TwoHeadPredictor, gradient_check, huber
from .oracle import SyntheticEvaluator, reference_candidates, synthetic_oracle, true_accuracy
from .engine import (
    SearchState,
    Stage2Config,
    Stage3Config,
    determine_early_stop,
    mutate,
    run_nars,
    select_batch,
    spearman,
    stage2_run,
    stage3_evolve,
)
from .protocol import EvalRequest, EvalResult, ExternalEvaluator

__all__ = [
    "ArchConfig",
    "Candidate",
    "CandidateEncoder",
    "Constraint",
    "CostReport",
    "EncodingLayout",
    "EvalRequest",
    "EvalResult",
    "ExternalEvaluator",
    "FitReport",
    "RecipeConfig",
    "SearchSpaceDef",
    "SearchState",
    "Stage2Config",
    "Stage3Config",
    "StageConfig",
    "SyntheticEvaluator",
    "TwoHeadPredictor",
    "build_layout",
    "cardinality",
    "check_constraints",
    "compound_scale",
    "cost",
    "determine_early_stop",
    "encode",
    "encode_batch",
    "gradient_check",
    "huber",
    "load_space",
    "mutate",
    "reference_candidates",
    "run_nars",
    "sample_qmc_pool",
    "sample_uniform",
    "select_batch",
    "sobol_sequence",
    "spearman",
    "stage2_run",
    "stage3_evolve",
    "synthetic_oracle",
    "true_accuracy",
    "validate_candidate",
]
