"""Active learning of utility landscapes from preferences and ordinal labels,
restricted to a learned region of interest."""

from .acquisition import (
    OutcomeTable,
    RoiConfig,
    backend,
    draw_subset,
    info_gain,
    outcome_probs,
    roi_mask,
    select_action,
)
from .config import ConfigError, ExperimentConfig, config_from_dict, config_hash, load_config
from .engine import (
    Query,
    Session,
    SessionError,
    select_validation_actions,
    session_summary,
    start_session,
    submit_feedback,
)
from .likelihoods import (
    FeedbackDataset,
    OrdinalScale,
    PreferenceModel,
    link,
    neg_log_likelihood,
    ordinal_prob,
    preference_prob,
)
from .posterior import (
    KernelConfig,
    PosteriorState,
    laplace_fit,
    predict,
    prior_covariance,
    sample,
)
from .space import ActionSpace, DimensionSpec, build_grid
from .truth import SyntheticTruth, hartmann3, make_synthetic_truth, simulated_feedback

__version__ = "0.1.0"

__all__ = [
    "ActionSpace",
    "ConfigError",
    "DimensionSpec",
    "ExperimentConfig",
    "FeedbackDataset",
    "KernelConfig",
    "OrdinalScale",
    "OutcomeTable",
    "PosteriorState",
    "PreferenceModel",
    "Query",
    "RoiConfig",
    "Session",
    "SessionError",
    "SyntheticTruth",
    "backend",
    "build_grid",
    "config_from_dict",
    "config_hash",
    "draw_subset",
    "hartmann3",
    "info_gain",
    "laplace_fit",
    "link",
    "load_config",
    "make_synthetic_truth",
    "neg_log_likelihood",
    "ordinal_prob",
    "outcome_probs",
    "predict",
    "preference_prob",
    "prior_covariance",
    "roi_mask",
    "sample",
    "select_action",
    "select_validation_actions",
    "session_summary",
    "simulated_feedback",
    "start_session",
    "submit_feedback",
]
