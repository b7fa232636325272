"""Candidate subsets, region-of-interest filtering, and information-gain
action selection.

Each iteration draws M uniformly random candidate actions, keeps those whose
optimistic utility bound clears the lowest ordinal threshold (the region of
interest), and picks the candidate maximizing the mutual information between
the utilities and the joint (preference, ordinal) outcome of querying it.

The per-candidate scoring loop is the hot path of the whole system; it runs
on a compiled backend when the extension built, with a vectorized numpy
fallback. Set ROIAL_BACKEND=python or =compiled to force one of them.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _scores
from .likelihoods import OrdinalScale, PreferenceModel, ordinal_probs
from .posterior import PosteriorState
from .space import ActionSpace

try:
    from . import _core
except ImportError:
    _core = None

_BACKEND_ENV = os.environ.get("ROIAL_BACKEND", "auto").lower()
if _BACKEND_ENV not in ("auto", "compiled", "python"):
    raise RuntimeError(f"ROIAL_BACKEND must be auto, compiled or python, not {_BACKEND_ENV!r}")
if _BACKEND_ENV == "compiled" and _core is None:
    raise RuntimeError("ROIAL_BACKEND=compiled but the extension is not built")

BACKEND = "python" if _BACKEND_ENV == "python" or _core is None else "compiled"
_score_impl = _scores.score_candidates if BACKEND == "python" else _core.score_candidates


def backend() -> str:
    """Name of the scoring backend selected at import ('compiled' or 'python')."""
    return BACKEND


@dataclass(frozen=True)
class RoiConfig:
    """Confidence test for region-of-interest membership.

    An action passes when mean + confidence * sigma exceeds the first ordinal
    threshold. Positive confidence is optimistic, negative conservative;
    +inf disables the restriction entirely.
    """

    confidence: float  # lambda
    threshold: float  # b_1

    @property
    def unrestricted(self) -> bool:
        return np.isposinf(self.confidence)


def draw_subset(space: ActionSpace, m: int, seed) -> np.ndarray:
    """m distinct action indices uniformly without replacement; the full index
    set when m >= space.size. Deterministic per seed."""
    if m < 1:
        raise ValueError(f"subset size must be >= 1, got {m}")
    if m >= space.size:
        return np.arange(space.size)
    rng = np.random.default_rng(seed)
    return rng.choice(space.size, size=m, replace=False)


def roi_mask(means, sigmas, cfg: RoiConfig) -> np.ndarray:
    """Boolean inclusion vector; strict inequality at the boundary."""
    means = np.asarray(means, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    if means.shape != sigmas.shape:
        raise ValueError("means and sigmas must have the same length")
    if cfg.unrestricted:
        return np.ones(means.shape, dtype=bool)
    return means + cfg.confidence * sigmas > cfg.threshold


@dataclass(frozen=True)
class OutcomeTable:
    """Joint outcome distribution for one candidate query.

    `probs` has shape (2, r) -- rows are (candidate wins, previous wins) --
    or (r,) on the first trial when there is no previous action.
    """

    probs: np.ndarray

    def entropy(self) -> float:
        p = self.probs[self.probs > 0]
        return float(-np.sum(p * np.log(p)))

    def total(self) -> float:
        return float(np.sum(self.probs))


def outcome_probs(
    candidate: int,
    previous: int | None,
    samples: np.ndarray,
    scale: OrdinalScale,
    pref: PreferenceModel,
) -> OutcomeTable:
    """Monte-Carlo outcome distribution, averaging the per-sample product of
    preference and ordinal probabilities over posterior samples.

    `samples` is (L, n); `candidate`/`previous` are column positions.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[0] < 1:
        raise ValueError("samples must be a (L, n) array with L >= 1")
    f_c = samples[:, candidate]
    ord_p = ordinal_probs(f_c, scale)  # (L, r)
    if previous is None:
        return OutcomeTable(probs=ord_p.mean(axis=0))
    f_p = samples[:, previous]
    p_win = pref.link.g((f_c - f_p) / pref.noise)
    win = (p_win[:, None] * ord_p).mean(axis=0)
    lose = ((1.0 - p_win)[:, None] * ord_p).mean(axis=0)
    return OutcomeTable(probs=np.stack([win, lose]))


def info_gain(
    candidate: int,
    previous: int | None,
    samples: np.ndarray,
    scale: OrdinalScale,
    pref: PreferenceModel,
) -> float:
    """Mutual information (nats) between utilities and the candidate's joint
    outcome; >= 0 after clipping Monte-Carlo noise, <= ln(2r)."""
    samples = np.asarray(samples, dtype=float)
    f_c = samples[:, candidate : candidate + 1]
    f_p = None if previous is None else samples[:, previous]
    gains = _score_impl(f_c, f_p, np.asarray(scale.thresholds), pref.noise, scale.noise)
    return float(gains[0])


def score_candidates(
    candidates: np.ndarray,
    previous: int | None,
    samples: np.ndarray,
    scale: OrdinalScale,
    pref: PreferenceModel,
) -> np.ndarray:
    """Information gain for every candidate column position at once."""
    samples = np.asarray(samples, dtype=float)
    f_c = np.ascontiguousarray(samples[:, candidates])
    f_p = None if previous is None else np.ascontiguousarray(samples[:, previous])
    return _score_impl(f_c, f_p, np.asarray(scale.thresholds), pref.noise, scale.noise)


def select_action(
    subset: np.ndarray,
    previous: int | None,
    state: PosteriorState,
    samples: np.ndarray,
    roi: RoiConfig,
    scale: OrdinalScale,
    pref: PreferenceModel,
    tie_rng: np.random.Generator,
) -> int:
    """Argmax of information gain over the subset's region of interest.

    `samples` are posterior draws aligned with `state.indices`. When no
    subset action passes the confidence test, the filter is ignored for this
    call rather than deadlocking the session. Exact score ties are broken
    uniformly at random with `tie_rng`.
    """
    subset = np.asarray(subset, dtype=int)
    if subset.size == 0:
        raise ValueError("empty candidate subset")
    pos = state.positions_of(subset)
    mask = roi_mask(state.mean[pos], state.sigma[pos], roi)
    if not np.any(mask):
        mask = np.ones(subset.size, dtype=bool)
    cand_pos = pos[mask]
    prev_pos = None if previous is None else int(state.positions_of([previous])[0])
    gains = score_candidates(cand_pos, prev_pos, samples, scale, pref)
    best = np.flatnonzero(gains == gains.max())
    choice = best[0] if best.size == 1 else tie_rng.choice(best)
    return int(subset[mask][choice])
