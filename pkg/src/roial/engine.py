"""Session engine: the trial loop, feedback ingestion, posterior refresh, and
the training/validation protocol.

A session alternates strictly between a pending query and a feedback
submission. Each submission appends the ordinal label (and optional
preference against the previous action) to the dataset, refits the Laplace
posterior over all queried actions plus a fresh random candidate subset, and
selects the next action by information gain within the estimated region of
interest. The first action is uniform random; preferences are requested from
trial 2 on.

All randomness derives from the config's master seed through named,
per-trial substreams, so a session is exactly replayable from its feedback
transcript, including across snapshot save/load boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .acquisition import RoiConfig, draw_subset, select_action
from .config import ExperimentConfig
from .likelihoods import FeedbackDataset, ordinal_probs
from .posterior import PosteriorState, laplace_fit, predict, restrict, sample
from .space import ActionSpace

# Named substreams: one component's draw count never perturbs another's.
_STREAMS = {
    "first-action": 0,
    "subset": 1,
    "posterior-samples": 2,
    "tie-break": 3,
    "simulated-user": 4,
    "validation": 5,
    "evaluation": 6,
}

PREF_CHOICES = ("current", "previous", "skip")


def rng_stream(master_seed: int, stream: str, iteration: int = 0) -> np.random.Generator:
    """Deterministic generator for one (stream, iteration) pair."""
    key = (_STREAMS[stream], int(iteration))
    return np.random.default_rng(np.random.SeedSequence(entropy=int(master_seed), spawn_key=key))


class SessionError(ValueError):
    pass


@dataclass(frozen=True)
class Query:
    """One action to execute and rate."""

    trial: int
    action: int
    coords: np.ndarray
    request_preference: bool
    phase: str

    def to_dict(self, names: list[str]) -> dict:
        return {
            "trial": self.trial,
            "action": int(self.action),
            "coords": {n: float(c) for n, c in zip(names, self.coords)},
            "request_preference": self.request_preference,
            "phase": self.phase,
        }


@dataclass
class FullGridCache:
    """Full-grid predictive means/sigmas, stamped with the trial count of the
    dataset it was computed from."""

    trial: int
    means: np.ndarray
    sigmas: np.ndarray


@dataclass
class ValidationPlan:
    """Validation actions chosen at the end of training, with the predicted
    label recorded at selection time and any per-category shortfall."""

    actions: list[int]
    predicted: list[int]
    shortfall: dict[str, int] = field(default_factory=dict)


@dataclass
class Session:
    """Mutable state of one elicitation session (one actor at a time)."""

    config: ExperimentConfig
    space: ActionSpace
    trial: int = 0  # completed trials
    phase: str = "training"  # training | validation | finished
    dataset: FeedbackDataset = field(default_factory=FeedbackDataset)
    transcript: list[dict] = field(default_factory=list)
    training_actions: list[int] = field(default_factory=list)
    queried_actions: list[int] = field(default_factory=list)
    pending: Query | None = None
    posterior: PosteriorState | None = None
    full_grid: FullGridCache | None = None
    validation_plan: ValidationPlan | None = None

    @property
    def previous_action(self) -> int | None:
        return self.transcript[-1]["action"] if self.transcript else None

    @property
    def finished(self) -> bool:
        return self.phase == "finished"

    def seed_for(self, stream: str, iteration: int = 0) -> np.random.Generator:
        return rng_stream(self.config.seed, stream, iteration)


def start_session(config: ExperimentConfig) -> tuple[Session, Query]:
    """Open a session; the first query is a uniform-random action with no
    preference requested."""
    space = config.space()
    session = Session(config=config, space=space)
    rng = session.seed_for("first-action")
    action = int(rng.integers(space.size))
    session.pending = Query(
        trial=1,
        action=action,
        coords=space.index_to_action(action),
        request_preference=False,
        phase="training",
    )
    return session, session.pending


def submit_feedback(
    session: Session,
    label: int,
    preference: str | None = None,
    refresh: str = "auto",
) -> tuple[Session, Query | None]:
    """Ingest one trial's feedback and compute the next query.

    `preference` is "current", "previous", "skip", or None (same as skip);
    it must be absent on trial 1. Returns (session, next query), with None
    once the session is finished. `refresh="defer"` skips the throttled
    full-grid recomputation (a host may run it in the background); the
    refresh required at the training/validation boundary always happens.
    """
    if session.finished:
        raise SessionError("session is finished")
    if session.pending is None:
        raise SessionError("no pending query")
    cfg = session.config
    if not isinstance(label, (int, np.integer)) or not 1 <= int(label) <= cfg.r:
        raise SessionError(f"ordinal label must be in 1..{cfg.r}, got {label!r}")
    if preference is not None and preference not in PREF_CHOICES:
        raise SessionError(f"preference must be one of {PREF_CHOICES}, got {preference!r}")
    if preference in ("current", "previous") and session.pending.trial == 1:
        raise SessionError("no previous action exists on trial 1")

    action = session.pending.action
    previous = session.previous_action
    session.dataset.add_ordinal(action, int(label))
    if preference == "current":
        session.dataset.add_preference(action, previous)
    elif preference == "previous":
        session.dataset.add_preference(previous, action)
    session.transcript.append(
        {"trial": session.pending.trial, "action": int(action), "label": int(label), "preference": preference}
    )

    session.trial += 1
    session.queried_actions.append(int(action))
    if session.phase == "training":
        session.training_actions.append(int(action))

    if session.phase == "training":
        if session.trial >= cfg.training_trials:
            return session, _enter_validation(session)
        session.pending = _algorithm_step(session)
        if refresh != "defer" and session.trial % cfg.refresh_every == 0:
            # the step's posterior is conditioned on exactly the current
            # dataset, so the throttled view extends it instead of refitting
            refresh_full_grid(session, state=session.posterior)
        return session, session.pending

    # validation phase: queries come from the fixed plan
    done = session.trial - cfg.training_trials
    plan = session.validation_plan
    if plan is None or done >= len(plan.actions):
        return session, _finish(session)
    return session, _next_validation_query(session, done)


def _algorithm_step(session: Session) -> Query:
    """One acquisition step: subset, posterior refit, ROI filter, argmax."""
    cfg = session.config
    it = session.trial + 1  # upcoming trial number
    subset = draw_subset(session.space, cfg.subset_size, session.seed_for("subset", it))
    inference = np.union1d(np.asarray(session.queried_actions, dtype=int), subset)
    state = laplace_fit(
        session.space,
        session.dataset,
        inference,
        cfg.kernel,
        cfg.scale(),
        cfg.preference_model(),
        tol=cfg.newton_tol,
        max_iter=cfg.newton_max_iter,
    )
    session.posterior = state
    # candidate scoring only needs the joint law over the subset and the
    # previous action, so sample the marginal rather than the whole set
    previous = session.previous_action
    sample_set = subset if previous is None else np.union1d(subset, [previous])
    marginal = restrict(state, session.space, cfg.kernel, sample_set)
    samples = sample(marginal, cfg.n_samples, session.seed_for("posterior-samples", it))
    roi = RoiConfig(confidence=cfg.confidence, threshold=cfg.thresholds[0])
    action = select_action(
        subset,
        previous,
        marginal,
        samples,
        roi,
        cfg.scale(),
        cfg.preference_model(),
        tie_rng=session.seed_for("tie-break", it),
    )
    return Query(
        trial=it,
        action=action,
        coords=session.space.index_to_action(action),
        request_preference=True,
        phase=session.phase,
    )


def dataset_from_transcript(transcript: list[dict]) -> FeedbackDataset:
    """Rebuild the feedback dataset from a (prefix of a) session transcript."""
    dataset = FeedbackDataset()
    previous = None
    for entry in transcript:
        action = int(entry["action"])
        dataset.add_ordinal(action, int(entry["label"]))
        choice = entry.get("preference")
        if choice == "current":
            dataset.add_preference(action, previous)
        elif choice == "previous":
            dataset.add_preference(previous, action)
        previous = action
    return dataset


def compute_full_grid(session: Session, at_trial: int | None = None) -> FullGridCache:
    """Full-grid predictive means/sigmas (pure; deterministic given the
    dataset). `at_trial` computes the view from a transcript prefix, which is
    how a reloaded snapshot reproduces an earlier refresh exactly."""
    cfg = session.config
    if at_trial is None or at_trial >= session.trial:
        at_trial = session.trial
        dataset = session.dataset
        queried = session.queried_actions
    else:
        prefix = session.transcript[:at_trial]
        dataset = dataset_from_transcript(prefix)
        queried = [entry["action"] for entry in prefix]
    state = laplace_fit(
        session.space,
        dataset,
        np.unique(np.asarray(queried, dtype=int)),
        cfg.kernel,
        cfg.scale(),
        cfg.preference_model(),
        tol=cfg.newton_tol,
        max_iter=cfg.newton_max_iter,
    )
    means, variances = predict(state, session.space, cfg.kernel, np.arange(session.space.size))
    return FullGridCache(trial=at_trial, means=means, sigmas=np.sqrt(variances))


def refresh_full_grid(session: Session, state: PosteriorState | None = None) -> FullGridCache:
    """Recompute the full-grid view, from `state` when one fitted on the
    current dataset is at hand (the extension depends only on the data-bearing
    block, so this matches a fresh fit bit-for-bit)."""
    if state is None:
        session.full_grid = compute_full_grid(session)
    else:
        cfg = session.config
        means, variances = predict(state, session.space, cfg.kernel, np.arange(session.space.size))
        session.full_grid = FullGridCache(
            trial=session.trial, means=means, sigmas=np.sqrt(variances)
        )
    return session.full_grid


def predicted_labels(means: np.ndarray, config: ExperimentConfig) -> np.ndarray:
    """Most probable ordinal category under the model likelihood at each mean."""
    probs = ordinal_probs(np.asarray(means), config.scale())
    return probs.argmax(axis=-1) + 1


def select_validation_actions(session: Session, total: int, per_category: int) -> ValidationPlan:
    """Pick validation actions covering every category above the lowest.

    At least `per_category` actions are taken from each predicted category
    2..r, the rest uniformly at random; actions queried during training and
    actions predicted in the lowest category are excluded. Exhausted
    categories are backfilled from the random pool and reported as shortfall.
    """
    if session.full_grid is None:
        refresh_full_grid(session)
    cfg = session.config
    labels = predicted_labels(session.full_grid.means, cfg)
    rng = session.seed_for("validation")

    excluded = np.zeros(session.space.size, dtype=bool)
    excluded[np.asarray(session.training_actions, dtype=int)] = True
    eligible = ~excluded & (labels != 1)

    chosen: list[int] = []
    shortfall: dict[str, int] = {}
    for category in range(2, cfg.r + 1):
        pool = np.flatnonzero(eligible & (labels == category))
        take = min(per_category, pool.size, total - len(chosen))
        if take > 0:
            picked = rng.choice(pool, size=take, replace=False)
            chosen.extend(int(a) for a in picked)
            eligible[picked] = False
        if take < per_category:
            shortfall[f"category_{category}"] = per_category - take

    remaining = total - len(chosen)
    if remaining > 0:
        pool = np.flatnonzero(eligible)
        take = min(remaining, pool.size)
        if take > 0:
            picked = rng.choice(pool, size=take, replace=False)
            chosen.extend(int(a) for a in picked)
        if take < remaining:
            shortfall["random"] = remaining - take

    order = rng.permutation(len(chosen))
    actions = [chosen[k] for k in order]
    return ValidationPlan(
        actions=actions,
        predicted=[int(labels[a]) for a in actions],
        shortfall=shortfall,
    )


def _enter_validation(session: Session) -> Query | None:
    refresh_full_grid(session)
    cfg = session.config
    if cfg.validation_trials == 0:
        return _finish(session)
    session.phase = "validation"
    session.validation_plan = select_validation_actions(
        session, cfg.validation_trials, cfg.validation_per_category
    )
    if not session.validation_plan.actions:
        return _finish(session)
    return _next_validation_query(session, 0)


def _next_validation_query(session: Session, done: int) -> Query:
    action = session.validation_plan.actions[done]
    session.pending = Query(
        trial=session.trial + 1,
        action=action,
        coords=session.space.index_to_action(action),
        request_preference=True,
        phase="validation",
    )
    return session.pending


def _finish(session: Session) -> None:
    session.phase = "finished"
    session.pending = None
    if session.full_grid is None or session.full_grid.trial != session.trial:
        refresh_full_grid(session)
    return None


def validation_confusion(session: Session) -> np.ndarray:
    """r x r counts: rows are labels reported during validation, columns the
    categories predicted at selection time. The predicted-lowest column stays
    empty because such actions are never selected."""
    r = session.config.r
    counts = np.zeros((r, r), dtype=int)
    plan = session.validation_plan
    if plan is None:
        return counts
    start = session.config.training_trials
    validation_entries = session.transcript[start : start + len(plan.actions)]
    for entry, predicted in zip(validation_entries, plan.predicted):
        counts[entry["label"] - 1, predicted - 1] += 1
    return counts


def session_summary(session: Session) -> dict:
    """Completion summary: sizes, phase, validation confusion counts."""
    out = {
        "trial": session.trial,
        "phase": session.phase,
        "n_ordinal": session.dataset.n_ord,
        "n_preference": session.dataset.n_pref,
        "training_trials": session.config.training_trials,
        "validation_trials": session.config.validation_trials,
    }
    if session.validation_plan is not None:
        out["validation_confusion"] = validation_confusion(session).tolist()
        out["validation_shortfall"] = session.validation_plan.shortfall
    return out
