"""predpower: how well do LM surprisal and contextual entropy predict human
reading times, and how do per-subject psychometric scores modulate that?

The package quantifies predictive power as the cross-validated held-out
log-likelihood gain of a mixed-effects regression over a baseline, and ships
four hypothesis pipelines (baseline PP, interaction PP, full-data effect
sizes, median-split group differences) plus a seeded synthetic-corpus
generator for calibration studies.
"""

from .analysis import (
    HypothesisReport,
    run_baseline_pp,
    run_effect_size_table,
    run_group_split_pp,
    run_interaction_pp,
    score_correlation_matrix,
)
from .errors import PipelineError
from .ingest import AnalysisTable, IngestConfig, build_analysis_table
from .lmm import LmmFit, ModelSpec, fit_random_intercept_lmm
from .ngram import BigramLM, score_tokens, train_bigram
from .stats import (
    DeltaLLResult,
    FoldAssignment,
    InferenceConfig,
    cross_validated_delta_ll,
    make_item_folds,
    paired_sign_flip_test,
)

__version__ = "0.1.0"

__all__ = [
    "AnalysisTable",
    "BigramLM",
    "DeltaLLResult",
    "FoldAssignment",
    "HypothesisReport",
    "IngestConfig",
    "InferenceConfig",
    "LmmFit",
    "ModelSpec",
    "PipelineError",
    "build_analysis_table",
    "cross_validated_delta_ll",
    "fit_random_intercept_lmm",
    "make_item_folds",
    "paired_sign_flip_test",
    "run_baseline_pp",
    "run_effect_size_table",
    "run_group_split_pp",
    "run_interaction_pp",
    "score_correlation_matrix",
    "score_tokens",
    "train_bigram",
]
