"""Prediction-quality metrics, pairwise heatmaps, and feature importance.

These operate on full-grid predictive means (and, where relevant, a known
synthetic truth), so they are shared by the simulation studies, the session
service, and the acceptance checks.
"""

from __future__ import annotations

import numpy as np

from .config import ExperimentConfig
from .engine import predicted_labels
from .space import ActionSpace
from .truth import SyntheticTruth


def error_metrics(
    means: np.ndarray,
    truth: SyntheticTruth,
    config: ExperimentConfig,
    eval_indices: np.ndarray | None = None,
) -> dict:
    """Prediction errors of a posterior against a known truth.

    - error_weighted: sum over true-ROI actions of |f - f_hat| (full grid)
    - ordinal_error: mean |predicted - true| label over the eval points
    - preference_error: fraction of consecutive eval-point pairs whose
      predicted ordering disagrees with the true ordering
    - ordinal_within_one: full-grid fraction with |predicted - true| <= 1
    - confusion: r x r counts over eval points (rows true, columns predicted)
    - roi_confusion: 2 x 2 counts (rows true in-ROI, columns predicted in-ROI)
    """
    means = np.asarray(means, dtype=float)
    if means.shape[0] != truth.utilities.shape[0]:
        raise ValueError("means and truth must cover the same grid")
    if eval_indices is None:
        eval_indices = np.arange(means.shape[0])
    eval_indices = np.asarray(eval_indices, dtype=int)

    pred_all = predicted_labels(means, config)
    true_all = truth.categories
    r = config.r

    pred = pred_all[eval_indices]
    true = true_all[eval_indices]

    f_pred = means[eval_indices]
    f_true = truth.utilities[eval_indices]
    pref_pred = f_pred[:-1] > f_pred[1:]
    pref_true = f_true[:-1] > f_true[1:]

    confusion = np.zeros((r, r), dtype=int)
    np.add.at(confusion, (true - 1, pred - 1), 1)

    roi_confusion = np.zeros((2, 2), dtype=int)
    true_roi = (true != 1).astype(int)
    pred_roi = (pred != 1).astype(int)
    np.add.at(roi_confusion, (true_roi, pred_roi), 1)

    return {
        "error_weighted": float(np.sum(np.abs(truth.utilities - means)[truth.roi_mask])),
        "ordinal_error": float(np.mean(np.abs(pred - true))),
        "preference_error": float(np.mean(pref_pred != pref_true)) if eval_indices.size > 1 else 0.0,
        "ordinal_within_one": float(np.mean(np.abs(pred_all - true_all) <= 1)),
        "roi_accuracy": float(np.mean(true_roi == pred_roi)),
        "confusion": confusion,
        "roi_confusion": roi_confusion,
    }


def pair_heatmap(
    means: np.ndarray,
    roi: np.ndarray,
    space: ActionSpace,
    dim_a: int,
    dim_b: int,
) -> dict:
    """2-D view of a full-grid posterior: means averaged over the remaining
    dimensions, normalized to [0, 1] per panel (an all-equal panel maps to
    0.5), plus the fraction of in-ROI actions per cell."""
    if dim_a == dim_b:
        raise ValueError("heatmap needs two distinct dimensions")
    grid = np.asarray(means, dtype=float).reshape(space.shape)
    roi_grid = np.asarray(roi, dtype=float).reshape(space.shape)
    other = tuple(d for d in range(space.ndim) if d not in (dim_a, dim_b))
    values = grid.mean(axis=other) if other else grid
    fraction = roi_grid.mean(axis=other) if other else roi_grid
    if dim_a > dim_b:
        values = values.T
        fraction = fraction.T
    lo, hi = float(values.min()), float(values.max())
    if hi > lo:
        normalized = (values - lo) / (hi - lo)
    else:
        normalized = np.full(values.shape, 0.5)
    return {
        "dims": [space.dims[dim_a].name, space.dims[dim_b].name],
        "values": normalized.tolist(),
        "roi_fraction": fraction.tolist(),
        "row_ticks": space.dims[dim_a].values.tolist(),
        "col_ticks": space.dims[dim_b].values.tolist(),
        "normalization": {"min": lo, "max": hi},
    }


def all_pair_heatmaps(means, roi, space: ActionSpace) -> list[dict]:
    """One panel per unordered dimension pair (6 panels for a 4-D space)."""
    panels = []
    for a in range(space.ndim):
        for b in range(a + 1, space.ndim):
            panels.append(pair_heatmap(means, roi, space, a, b))
    return panels


def permutation_importance(
    means: np.ndarray,
    space: ActionSpace,
    seed,
    repeats: int = 10,
) -> np.ndarray:
    """Per-dimension sensitivity of the predicted utility.

    For each dimension, randomly permute that coordinate across all actions
    and measure the mean absolute change in predicted utility at the permuted
    points; average over `repeats` permutations. Deterministic per seed.
    """
    means = np.asarray(means, dtype=float)
    if means.shape[0] != space.size:
        raise ValueError("means must cover the full grid")
    rng = np.random.default_rng(seed)
    base_pos = space.grid_positions(np.arange(space.size))
    scores = np.zeros(space.ndim)
    for _ in range(repeats):
        for d in range(space.ndim):
            perm = rng.permutation(space.size)
            pos = base_pos.copy()
            pos[:, d] = base_pos[perm, d]
            idx = np.ravel_multi_index(tuple(pos.T), space.shape)
            scores[d] += np.mean(np.abs(means[idx] - means))
    return scores / repeats
