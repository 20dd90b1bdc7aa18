"""Decoupled conformal optimisation: tune structure on one split, calibrate on another."""

from .conformal import CalibratedRule, calibrate, conformal_quantile, k_alpha, parse_alpha, predict_set
from .harness import ExperimentConfig, ExperimentReport, make_splits, run_experiment, run_trial
from .riskcontrol import BqConfig, bq_calibrate, bq_threshold
from .scores import (
    Candidate,
    PrecomputedTask,
    SyntheticTask,
    classification_candidates,
    fit_candidate,
    load_precomputed,
    regression_candidates,
    score,
    set_size_at,
)
from .tuning import GridPolicy, ThresholdGrid, dco_tune, direct_tune, tuning_sample_size

__version__ = "0.1.0"
