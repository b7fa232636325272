"""Preference and ordinal feedback likelihoods.

A latent utility vector f scores every action. Pairwise preferences are
modeled as a noisy comparison of two utilities through a monotone link g:

    P(a_w beats a_l | f) = g((f_w - f_l) / c_p)

Ordinal labels place an action into one of r ordered categories separated by
thresholds b_1 < ... < b_{r-1} (b_0 = -inf, b_r = +inf implicit):

    P(y | f) = g((b_y - f) / c_o) - g((b_{y-1} - f) / c_o)

Everything is evaluated in the log domain: with noise scales as small as
0.02 the link arguments reach magnitudes of several hundred, and the linear
domain underflows to exact zeros. Gradients and second derivatives use ratio
identities (g'/p, g''/p) that stay finite even when p itself underflows.

The link is replaceable; `SigmoidLink` is the default, `ProbitLink` is the
Gaussian-CDF alternative. Both are symmetric (1 - g(x) = g(-x)), which the
ordinal edge-category handling relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit
from scipy.stats import norm


class LikelihoodError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Link functions


class SigmoidLink:
    """Logistic link g(x) = 1 / (1 + exp(-x))."""

    name = "sigmoid"

    def g(self, x):
        return expit(x)

    def log_g(self, x):
        # log g(x) = -softplus(-x); exact at +-inf
        return log_expit(x)

    def log_dg(self, x):
        # g'(x) = g(x) g(-x)
        x = np.asarray(x, dtype=float)
        return log_expit(x) + log_expit(-x)

    def ddg_over_dg(self, x):
        # g''(x) / g'(x) = 1 - 2 g(x), bounded in [-1, 1]
        return 1.0 - 2.0 * expit(x)


class ProbitLink:
    """Gaussian CDF link, the classical ordinal/preference regression choice."""

    name = "probit"

    def g(self, x):
        return norm.cdf(x)

    def log_g(self, x):
        return norm.logcdf(x)

    def log_dg(self, x):
        return norm.logpdf(x)

    def ddg_over_dg(self, x):
        # phi'(x) / phi(x) = -x
        return -np.asarray(x, dtype=float)


SIGMOID = SigmoidLink()
PROBIT = ProbitLink()

_LINKS = {"sigmoid": SIGMOID, "probit": PROBIT}


def get_link(name: str):
    try:
        return _LINKS[name]
    except KeyError:
        raise LikelihoodError(f"unknown link {name!r}; expected one of {sorted(_LINKS)}")


def link(x):
    """Default sigmoid link as a plain function; handles +-inf limits."""
    return expit(x)


# ---------------------------------------------------------------------------
# Models


@dataclass(frozen=True)
class PreferenceModel:
    """Noisy-comparison model; `noise` is the scale c_p of utility differences."""

    noise: float = 0.02
    link: object = SIGMOID

    def __post_init__(self):
        if not self.noise > 0:
            raise LikelihoodError(f"preference noise must be > 0, got {self.noise}")


@dataclass(frozen=True)
class OrdinalScale:
    """r ordered categories split by strictly increasing thresholds.

    `thresholds` has r-1 entries; `noise` is the scale c_o. r = 1 (no
    thresholds) is the degenerate single-category scale.
    """

    thresholds: tuple[float, ...]
    noise: float = 0.1
    link: object = SIGMOID

    def __post_init__(self):
        object.__setattr__(self, "thresholds", tuple(float(b) for b in self.thresholds))
        if not self.noise > 0:
            raise LikelihoodError(f"ordinal noise must be > 0, got {self.noise}")
        if any(b2 <= b1 for b1, b2 in zip(self.thresholds, self.thresholds[1:])):
            raise LikelihoodError("thresholds must be strictly increasing")

    @property
    def r(self) -> int:
        return len(self.thresholds) + 1

    def edges(self) -> np.ndarray:
        """Thresholds padded with the implicit -inf / +inf boundaries."""
        return np.concatenate(([-np.inf], self.thresholds, [np.inf]))

    def true_category(self, f) -> np.ndarray:
        """Noise-free category of utility values: b_{j} <= f < b_{j+1} -> j+1."""
        return np.searchsorted(np.asarray(self.thresholds), np.asarray(f), side="right") + 1


@dataclass
class FeedbackDataset:
    """Accumulated preference pairs and ordinal labels.

    Entries reference actions by index; the meaning of the index (grid index
    vs. position in some utility vector) is the caller's choice and just has
    to be consistent within one dataset.
    """

    preferences: list[tuple[int, int]] = field(default_factory=list)  # (winner, loser)
    ordinals: list[tuple[int, int]] = field(default_factory=list)  # (action, label)
    _arrays: tuple | None = field(default=None, repr=False, compare=False)

    def add_preference(self, winner: int, loser: int):
        self.preferences.append((int(winner), int(loser)))
        self._arrays = None

    def add_ordinal(self, action: int, label: int):
        self.ordinals.append((int(action), int(label)))
        self._arrays = None

    @property
    def n_pref(self) -> int:
        return len(self.preferences)

    @property
    def n_ord(self) -> int:
        return len(self.ordinals)

    def touched_indices(self) -> np.ndarray:
        """Sorted unique action indices referenced by any observation."""
        idx = [i for pair in self.preferences for i in pair]
        idx += [a for a, _ in self.ordinals]
        return np.unique(np.asarray(idx, dtype=int)) if idx else np.empty(0, dtype=int)

    def remapped(self, index_map: dict[int, int]) -> "FeedbackDataset":
        """Dataset with every action index replaced via `index_map`."""
        return FeedbackDataset(
            preferences=[(index_map[w], index_map[l]) for w, l in self.preferences],
            ordinals=[(index_map[a], y) for a, y in self.ordinals],
        )

    def arrays(self):
        if self._arrays is None:
            pref = np.asarray(self.preferences, dtype=int).reshape(-1, 2)
            ords = np.asarray(self.ordinals, dtype=int).reshape(-1, 2)
            self._arrays = (pref[:, 0], pref[:, 1], ords[:, 0], ords[:, 1])
        return self._arrays


# ---------------------------------------------------------------------------
# Pointwise probabilities


def preference_prob(f_winner, f_loser, model: PreferenceModel):
    """P(winner beats loser); the two orderings sum to one."""
    z = (np.asarray(f_winner, dtype=float) - f_loser) / model.noise
    return model.link.g(z)


def ordinal_prob(f, y: int, scale: OrdinalScale):
    """P(label = y | utility f); y in 1..r. Sums to 1 over y by telescoping."""
    if not 1 <= y <= scale.r:
        raise LikelihoodError(f"ordinal label {y} outside 1..{scale.r}")
    edges = scale.edges()
    f = np.asarray(f, dtype=float)
    hi = scale.link.g((edges[y] - f) / scale.noise) if y < scale.r else np.ones_like(f)
    lo = scale.link.g((edges[y - 1] - f) / scale.noise) if y > 1 else np.zeros_like(f)
    return hi - lo


def ordinal_probs(f, scale: OrdinalScale) -> np.ndarray:
    """All category probabilities at once; shape f.shape + (r,)."""
    f = np.asarray(f, dtype=float)
    b = np.asarray(scale.thresholds)
    g = scale.link.g((b - f[..., None]) / scale.noise)
    ones = np.ones(f.shape + (1,))
    zeros = np.zeros(f.shape + (1,))
    cum = np.concatenate([zeros, g, ones], axis=-1)
    return np.diff(cum, axis=-1)


# ---------------------------------------------------------------------------
# Log-domain terms and derivatives
#
# For one ordinal observation let z1 = (b_y - f)/c, z2 = (b_{y-1} - f)/c and
# p = g(z1) - g(z2). With w_i = g'(z_i)/p and t_i = g''(z_i)/g'(z_i):
#     d log p / df   = -(w1 - w2) / c
#     d2 log p / df2 = ((t1 w1 - t2 w2) - (w1 - w2)^2) / c^2
# The w_i are computed as exp(log g'(z_i) - log p), which stays finite when
# p underflows, because log p is evaluated stably from log g.


def _log_diff_g(lnk, z1, z2):
    """log(g(z1) - g(z2)) for z1 > z2, stable for extreme arguments."""
    a = lnk.log_g(z1)
    b = lnk.log_g(z2)
    # log(e^a - e^b) = a + log(-expm1(b - a)); expm1 keeps precision when
    # the two log terms are nearly equal. Non-finite inputs (a line search
    # probing an absurd iterate) propagate as nan and are handled upstream.
    with np.errstate(divide="ignore", invalid="ignore"):
        return a + np.log(-np.expm1(b - a))


def _ordinal_pieces(f, y, scale: OrdinalScale):
    """Scaled threshold gaps and edge-category masks for labels y at f."""
    edges = scale.edges()
    f = np.asarray(f, dtype=float)
    y = np.asarray(y, dtype=int)
    if np.any((y < 1) | (y > scale.r)):
        raise LikelihoodError(f"ordinal label outside 1..{scale.r}")
    z1 = (edges[y] - f) / scale.noise
    z2 = (edges[y - 1] - f) / scale.noise
    top = np.isinf(z1)  # y == r
    bot = np.isinf(z2)  # y == 1
    return np.where(top, 0.0, z1), np.where(bot, 0.0, z2), top, bot


def _ordinal_logp(f, y, scale: OrdinalScale):
    lnk = scale.link
    z1, z2, top, bot = _ordinal_pieces(f, y, scale)
    # by case: interior / top category (1 - g(z2) = g(-z2)) / bottom (g(z1))
    interior = ~(top | bot)
    logp = np.empty_like(z1)
    logp[interior] = _log_diff_g(lnk, z1[interior], z2[interior])
    logp[top] = lnk.log_g(-z2[top])
    logp[bot] = lnk.log_g(z1[bot])
    return logp


def _ordinal_terms(f, y, scale: OrdinalScale):
    """Per-observation (log p, dlogp/df, d2logp/df2) for labels y at f.

    Ratios g'(z)/p are formed in the log domain so they stay finite when p
    itself underflows; they are only meaningful where log p is finite, which
    the MAP search guarantees for its accepted iterates.
    """
    lnk = scale.link
    c = scale.noise
    z1, z2, top, bot = _ordinal_pieces(f, y, scale)
    logp = _ordinal_logp(f, y, scale)

    with np.errstate(over="ignore"):
        w1 = np.where(top, 0.0, np.exp(lnk.log_dg(z1) - logp))
        w2 = np.where(bot, 0.0, np.exp(lnk.log_dg(z2) - logp))
    t1 = np.where(top, 0.0, lnk.ddg_over_dg(z1))
    t2 = np.where(bot, 0.0, lnk.ddg_over_dg(z2))

    d1 = -(w1 - w2) / c
    d2 = ((t1 * w1 - t2 * w2) - (w1 - w2) ** 2) / c**2
    return logp, d1, d2


def _preference_terms(fw, fl, model: PreferenceModel):
    """Per-pair (log p, dlogp/dz, d2logp/dz2) with z = (fw - fl)/c_p."""
    lnk = model.link
    z = (np.asarray(fw, dtype=float) - fl) / model.noise
    logp = lnk.log_g(z)
    q = np.exp(lnk.log_dg(z) - logp)  # g'/g
    d2 = q * (lnk.ddg_over_dg(z) - q)  # g''/g - (g'/g)^2
    return logp, q, d2


# ---------------------------------------------------------------------------
# Dataset negative log likelihood


def neg_log_likelihood(dataset: FeedbackDataset, f, pref: PreferenceModel, scale: OrdinalScale) -> float:
    """-log P(D_p | f) - log P(D_o | f). Raises if any term is non-finite."""
    f = np.asarray(f, dtype=float)
    total = 0.0
    if dataset.n_pref or dataset.n_ord:
        win, lose, acts, labels = dataset.arrays()
        if dataset.n_pref:
            total -= float(np.sum(pref.link.log_g((f[win] - f[lose]) / pref.noise)))
        if dataset.n_ord:
            total -= float(np.sum(_ordinal_logp(f[acts], labels, scale)))
    if not np.isfinite(total):
        raise LikelihoodError("non-finite negative log likelihood (a term underflowed to 0)")
    return total


def nll_gradient(dataset: FeedbackDataset, f, pref: PreferenceModel, scale: OrdinalScale) -> np.ndarray:
    """Exact gradient of `neg_log_likelihood` with respect to f."""
    f = np.asarray(f, dtype=float)
    grad = np.zeros_like(f)
    if dataset.n_pref or dataset.n_ord:
        win, lose, acts, labels = dataset.arrays()
        if dataset.n_pref:
            _, q, _ = _preference_terms(f[win], f[lose], pref)
            np.add.at(grad, win, -q / pref.noise)
            np.add.at(grad, lose, q / pref.noise)
        if dataset.n_ord:
            _, d1, _ = _ordinal_terms(f[acts], labels, scale)
            np.add.at(grad, acts, -d1)
    return grad


def nll_hessian(dataset: FeedbackDataset, f, pref: PreferenceModel, scale: OrdinalScale) -> np.ndarray:
    """Exact Hessian of `neg_log_likelihood`; touches only rows/columns of
    actions appearing in the dataset."""
    f = np.asarray(f, dtype=float)
    n = f.shape[0]
    hess = np.zeros((n, n))
    if dataset.n_pref or dataset.n_ord:
        win, lose, acts, labels = dataset.arrays()
        if dataset.n_pref:
            _, _, d2 = _preference_terms(f[win], f[lose], pref)
            w = -d2 / pref.noise**2  # positive curvature contribution
            np.add.at(hess, (win, win), w)
            np.add.at(hess, (lose, lose), w)
            np.add.at(hess, (win, lose), -w)
            np.add.at(hess, (lose, win), -w)
        if dataset.n_ord:
            _, _, d2 = _ordinal_terms(f[acts], labels, scale)
            np.add.at(hess, (acts, acts), -d2)
    return hess
