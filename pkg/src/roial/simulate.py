"""Headless sessions driven by a simulated user."""

from __future__ import annotations

from .config import ExperimentConfig
from .engine import Session, rng_stream, start_session, submit_feedback
from .truth import SyntheticTruth, simulated_feedback, truth_from_config


def effective_config(config: ExperimentConfig, truth: SyntheticTruth) -> ExperimentConfig:
    """Engine config actually used for a simulated run; with
    `thresholds_from_truth` the model shares the truth's category boundaries."""
    if config.simulation is not None and config.simulation.thresholds_from_truth:
        return config.replace(thresholds=tuple(float(b) for b in truth.thresholds))
    return config


def run_simulated_session(
    config: ExperimentConfig,
    truth: SyntheticTruth | None = None,
    on_trial=None,
    session: Session | None = None,
) -> Session:
    """Run a full session (training + validation) against a simulated user.

    The user's randomness comes from the config seed's "simulated-user"
    stream, one substream per trial, so transcripts are exactly reproducible.
    `on_trial(session, query, label, preference)` is called after each
    submission when given. Passing a `session` (e.g. one reloaded from a
    snapshot) resumes it instead of starting fresh; the config must then be
    the session's effective config.
    """
    if truth is None:
        truth = truth_from_config(config.space(), config.kernel, config)
    if session is None:
        cfg = effective_config(config, truth)
        session, query = start_session(cfg)
    else:
        cfg = session.config
        query = session.pending
    while query is not None:
        rng = rng_stream(cfg.seed, "simulated-user", query.trial)
        previous = session.previous_action if query.request_preference else None
        label, choice = simulated_feedback(truth, query.action, previous, rng)
        session, next_query = submit_feedback(session, label, choice)
        if on_trial is not None:
            on_trial(session, query, label, choice)
        query = next_query
    return session
