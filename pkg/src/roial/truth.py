"""Synthetic ground-truth utilities and simulated noisy users.

Simulation studies need a known utility landscape: either a draw from the
same kind of GP prior the engine assumes, or the Hartmann-3 benchmark
(negated and rescaled so higher is better). True ordinal thresholds are
placed at equal-mass quantiles of the sampled utilities so every category is
represented on the grid.

A simulated user answers queries by sampling the ordinal and preference
likelihoods at the true utilities with its own noise scales; zero noise means
deterministic answers (and a skipped preference on exact ties).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .config import ExperimentConfig
from .posterior import KernelConfig
from .space import ActionSpace

_H3_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
_H3_A = np.array(
    [[3.0, 10.0, 30.0], [0.1, 10.0, 35.0], [3.0, 10.0, 30.0], [0.1, 10.0, 35.0]]
)
_H3_P = 1e-4 * np.array(
    [[3689, 1170, 2673], [4699, 4387, 7470], [1091, 8732, 5547], [381, 5743, 8828]]
)


def hartmann3(x):
    """Standard 3-D Hartmann function (minimization form) on [0, 1]^3.

    Global minimum of about -3.86278 at (0.1146, 0.5556, 0.8525). A single
    3-vector yields a float; an (n, 3) array yields n values.
    """
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    pts = np.atleast_2d(arr)
    if pts.shape[-1] != 3:
        raise ValueError("hartmann3 expects 3-component inputs")
    if np.any(pts < 0.0) or np.any(pts > 1.0):
        raise ValueError("hartmann3 domain is [0, 1]^3")
    inner = np.einsum("ij,kij->ki", _H3_A, (pts[:, None, :] - _H3_P[None, :, :]) ** 2)
    vals = -(np.exp(-inner) @ _H3_ALPHA)
    return float(vals[0]) if single else vals


@dataclass(frozen=True)
class SyntheticTruth:
    """Known utilities plus the noisy-user parameters that generate feedback."""

    utilities: np.ndarray  # (A,)
    thresholds: np.ndarray  # (r-1,) true category boundaries
    ordinal_noise: float  # 0 = noiseless labels
    preference_noise: float  # 0 = noiseless preferences
    categories: np.ndarray = field(init=False)  # (A,) noise-free labels

    def __post_init__(self):
        cats = np.searchsorted(self.thresholds, self.utilities, side="right") + 1
        object.__setattr__(self, "categories", cats)

    @property
    def r(self) -> int:
        return len(self.thresholds) + 1

    @property
    def roi_mask(self) -> np.ndarray:
        """True for actions outside the lowest (avoid) category."""
        return self.categories != 1


def quantile_thresholds(values: np.ndarray, r: int) -> np.ndarray:
    """r-1 thresholds splitting `values` into r equal-mass categories.

    Thresholds sit midway between consecutive order statistics, so category
    sizes are exact up to integer rounding.
    """
    if r < 1:
        raise ValueError("need at least one category")
    srt = np.sort(np.asarray(values, dtype=float))
    n = srt.size
    cuts = []
    for j in range(1, r):
        k = int(round(j * n / r))
        k = min(max(k, 1), n - 1)
        cuts.append(0.5 * (srt[k - 1] + srt[k]))
    return np.asarray(cuts)


def sample_gp_grid(space: ActionSpace, kernel: KernelConfig, seed) -> np.ndarray:
    """One exact draw from the separable squared-exponential prior on the full
    grid, via per-dimension Cholesky factors (the product kernel factorizes
    over dimensions on a regular grid, so no full-size covariance is formed).
    """
    rng = np.random.default_rng(seed)
    scales = kernel.lengthscales(space.ndim)
    factors = []
    for d, spec in enumerate(space.dims):
        pos = np.linspace(0.0, 1.0, spec.bins) if spec.bins > 1 else np.zeros(1)
        diff = (pos[:, None] - pos[None, :]) / scales[d]
        k1 = np.exp(-0.5 * diff**2)
        k1[np.diag_indices_from(k1)] += kernel.jitter
        factors.append(np.linalg.cholesky(k1))
    draw = rng.standard_normal(space.shape)
    for axis, chol in enumerate(factors):
        draw = np.moveaxis(np.tensordot(chol, draw, axes=(1, axis)), 0, axis)
    return np.sqrt(kernel.variance) * draw.reshape(-1)


def make_synthetic_truth(
    space: ActionSpace,
    kernel: KernelConfig,
    r: int,
    seed,
    ordinal_noise: float = 0.1,
    preference_noise: float = 0.02,
) -> SyntheticTruth:
    """GP-prior utilities with equal-mass quantile thresholds."""
    f = sample_gp_grid(space, kernel, seed)
    return SyntheticTruth(
        utilities=f,
        thresholds=quantile_thresholds(f, r),
        ordinal_noise=ordinal_noise,
        preference_noise=preference_noise,
    )


def make_hartmann_truth(
    space: ActionSpace,
    r: int,
    ordinal_noise: float = 0.1,
    preference_noise: float = 0.02,
) -> SyntheticTruth:
    """Hartmann-3 utilities, negated and rescaled to [0, 1] over the grid so
    higher is better, with quantile thresholds."""
    if space.ndim != 3:
        raise ValueError("hartmann3 truth needs a 3-dimensional space")
    coords = space.index_to_action(np.arange(space.size))
    vals = -hartmann3(coords)
    span = vals.max() - vals.min()
    f = (vals - vals.min()) / span if span > 0 else np.full(vals.shape, 0.5)
    return SyntheticTruth(
        utilities=f,
        thresholds=quantile_thresholds(f, r),
        ordinal_noise=ordinal_noise,
        preference_noise=preference_noise,
    )


def truth_from_config(space: ActionSpace, kernel: KernelConfig, config: ExperimentConfig) -> SyntheticTruth:
    sim = config.simulation
    if sim is None:
        raise ValueError("config has no simulation section")
    if sim.truth == "hartmann3":
        return make_hartmann_truth(space, config.r, sim.ordinal_noise, sim.preference_noise)
    return make_synthetic_truth(
        space, kernel, config.r, sim.truth_seed, sim.ordinal_noise, sim.preference_noise
    )


def simulated_feedback(
    truth: SyntheticTruth,
    current: int,
    previous: int | None,
    rng: np.random.Generator,
) -> tuple[int, str | None]:
    """One trial's feedback: (ordinal label, preference choice).

    The preference choice is "current", "previous", or None (skipped); it is
    None on the first trial and on exact-tie noiseless comparisons.
    """
    f_c = float(truth.utilities[current])
    if truth.ordinal_noise == 0.0:
        label = int(truth.categories[current])
    else:
        g = expit((truth.thresholds - f_c) / truth.ordinal_noise)
        probs = np.diff(np.concatenate(([0.0], g, [1.0])))
        label = int(rng.choice(truth.r, p=probs / probs.sum())) + 1

    choice: str | None = None
    if previous is not None:
        f_p = float(truth.utilities[previous])
        if truth.preference_noise == 0.0:
            if f_c > f_p:
                choice = "current"
            elif f_c < f_p:
                choice = "previous"
        else:
            p_cur = expit((f_c - f_p) / truth.preference_noise)
            choice = "current" if rng.random() < p_cur else "previous"
    return label, choice
