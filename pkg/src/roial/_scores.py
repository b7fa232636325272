"""Numpy implementation of the acquisition scoring kernel.

Computes, for a batch of candidate actions, the mutual information between
the utilities and the next trial's joint (preference, ordinal) outcome:

    gain(a) = H( E_l[table_l(a)] ) - (1/L) sum_l H(table_l(a))

where table_l is the outcome distribution under posterior sample l. Because
each per-sample table is a product of its preference and ordinal marginals,
its entropy is the sum of the marginal entropies, which this implementation
exploits. A compiled twin lives in `roial._core`; both must agree to float
precision (see tests).
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

# gains below this are floating-point residue of the two entropy terms (they
# coincide mathematically for L = 1 or identical samples) and snap to 0 so
# zero-information candidates tie exactly
GAIN_FLOOR = 1e-10


def _entropy(p: np.ndarray, axis=-1) -> np.ndarray:
    """Shannon entropy in nats with 0 log 0 = 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0.0, p * np.log(p), 0.0)
    return -np.sum(terms, axis=axis)


def score_candidates(
    f_cand: np.ndarray,
    f_prev: np.ndarray | None,
    thresholds: np.ndarray,
    c_p: float,
    c_o: float,
) -> np.ndarray:
    """Information gain for each candidate column of `f_cand`.

    f_cand: (L, m) utilities of m candidates under L posterior samples.
    f_prev: (L,) utilities of the previous action, or None on the first
        trial (ordinal-only outcome space).
    thresholds: (r-1,) ordinal thresholds; c_p, c_o: noise scales.
    Returns (m,) gains in nats, clipped below at 0.
    """
    f_cand = np.asarray(f_cand, dtype=float)
    L, m = f_cand.shape
    thresholds = np.asarray(thresholds, dtype=float)

    # ordinal category probabilities per (sample, candidate): (L, m, r)
    g = expit((thresholds[None, None, :] - f_cand[:, :, None]) / c_o)
    pad_lo = np.zeros((L, m, 1))
    pad_hi = np.ones((L, m, 1))
    ord_p = np.diff(np.concatenate([pad_lo, g, pad_hi], axis=2), axis=2)
    h_ord = _entropy(ord_p, axis=2)  # (L, m)

    if f_prev is None:
        mean_table = ord_p.mean(axis=0)  # (m, r)
        cond = h_ord.mean(axis=0)
    else:
        f_prev = np.asarray(f_prev, dtype=float)
        p_win = expit((f_cand - f_prev[:, None]) / c_p)  # (L, m)
        h_pref = _entropy(np.stack([p_win, 1.0 - p_win], axis=2), axis=2)
        win_table = (p_win[:, :, None] * ord_p).mean(axis=0)  # (m, r)
        lose_table = ((1.0 - p_win)[:, :, None] * ord_p).mean(axis=0)
        mean_table = np.concatenate([win_table, lose_table], axis=1)  # (m, 2r)
        cond = (h_pref + h_ord).mean(axis=0)

    gains = _entropy(mean_table, axis=1) - cond
    gains[gains < GAIN_FLOOR] = 0.0
    return gains
