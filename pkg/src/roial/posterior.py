"""Gaussian-process prior and Laplace-approximated posterior over utilities.

The prior is a squared-exponential GP on normalized grid coordinates. Given
feedback data, the posterior over the utilities of an inference set is
approximated as N(f_hat, Sigma_hat) where f_hat is the MAP of

    S(f) = 1/2 f' K^{-1} f + NLL(f)

and Sigma_hat = (K^{-1} + W)^{-1} with W the likelihood Hessian at f_hat.

Only actions referenced by the data ("touched" actions) contribute likelihood
terms, so the joint MAP over any superset factorizes exactly: solve Newton on
the touched block, then extend mean and covariance to the remaining actions
by GP conditioning. That identity (a Gaussian profile/Schur-complement
argument) is what keeps inference over large candidate sets tractable -- the
cubic cost is paid in the number of touched actions, not the set size.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial.distance import cdist

from .likelihoods import (
    FeedbackDataset,
    OrdinalScale,
    PreferenceModel,
    neg_log_likelihood,
    nll_gradient,
    nll_hessian,
)
from .space import ActionSpace


class FactorizationError(RuntimeError):
    """A covariance matrix could not be factorized even after jitter."""


class ConvergenceError(RuntimeError):
    """Newton did not reach the gradient tolerance."""

    def __init__(self, grad_norm: float, iterations: int):
        self.grad_norm = grad_norm
        self.iterations = iterations
        super().__init__(
            f"MAP search stopped after {iterations} iterations with "
            f"gradient inf-norm {grad_norm:.3e}"
        )


@dataclass(frozen=True)
class KernelConfig:
    """Squared-exponential kernel on normalized coordinates.

    `lengthscale` is a scalar or per-dimension sequence, in units of the
    normalized [0, 1] coordinate. `jitter` is relative to `variance` and is
    added to the diagonal of same-set covariance matrices.
    """

    variance: float = 1.0
    lengthscale: float | tuple[float, ...] = 0.15
    jitter: float = 1e-6

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError(f"kernel variance must be > 0, got {self.variance}")
        ls = self.lengthscale
        scales = (ls,) if np.isscalar(ls) else tuple(float(v) for v in ls)
        if any(not v > 0 for v in scales):
            raise ValueError("kernel lengthscales must be > 0")
        if self.jitter < 0:
            raise ValueError("kernel jitter must be >= 0")
        object.__setattr__(self, "lengthscale", ls if np.isscalar(ls) else scales)

    def lengthscales(self, ndim: int) -> np.ndarray:
        ls = np.asarray(self.lengthscale, dtype=float)
        if ls.ndim == 0:
            return np.full(ndim, float(ls))
        if ls.shape[0] != ndim:
            raise ValueError(f"expected {ndim} lengthscales, got {ls.shape[0]}")
        return ls

    def absolute_jitter(self) -> float:
        return self.jitter * self.variance


def _scaled_coords(space: ActionSpace, indices, kernel: KernelConfig) -> np.ndarray:
    coords = space.normalized_coords(np.asarray(indices, dtype=int))
    return coords / kernel.lengthscales(space.ndim)


def cross_covariance(space: ActionSpace, rows, cols, kernel: KernelConfig) -> np.ndarray:
    """Kernel matrix between two index sets; no jitter."""
    a = _scaled_coords(space, rows, kernel)
    b = _scaled_coords(space, cols, kernel)
    return kernel.variance * np.exp(-0.5 * cdist(a, b, "sqeuclidean"))


def prior_covariance(space: ActionSpace, indices, kernel: KernelConfig) -> np.ndarray:
    """Same-set prior covariance with jitter on the diagonal."""
    cov = cross_covariance(space, indices, indices, kernel)
    n = cov.shape[0]
    cov[np.diag_indices(n)] += kernel.absolute_jitter()
    return cov


def _chol(mat: np.ndarray, what: str):
    try:
        return cho_factor(mat, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(f"Cholesky of {what} failed: {exc}") from exc


def _solve(chol, b):
    return cho_solve(chol, b, check_finite=False)


def _clamp_psd(w: np.ndarray) -> np.ndarray:
    """Zero out negative eigenvalue contributions (Gauss-Newton-style guard);
    the sigmoid ordinal likelihood is not globally log-concave."""
    vals, vecs = np.linalg.eigh((w + w.T) / 2.0)
    vals = np.clip(vals, 0.0, None)
    return (vecs * vals) @ vecs.T


class PosteriorState:
    """Laplace posterior over an inference set of actions.

    `indices` are grid indices; `mean`, `cov`, `sigma` are aligned with them.
    The data-bearing ("touched") block the fit was solved on is kept so that
    `predict` can extend to arbitrary query actions and `restrict` can
    marginalize cheaply; the full covariance is assembled lazily because the
    per-iteration engine path only ever needs the diagonal plus a subset
    marginal.
    """

    def __init__(self, indices, mean, cov=None, sigma=None, _assembler=None, _touched=None):
        self.indices = np.asarray(indices, dtype=int)
        self.mean = np.asarray(mean, dtype=float)
        self._cov = None if cov is None else np.asarray(cov, dtype=float)
        self._assembler = _assembler
        if self._cov is None and self._assembler is None:
            raise ValueError("need either a covariance matrix or an assembler")
        if sigma is not None:
            self.sigma = np.asarray(sigma, dtype=float)
        else:
            self.sigma = np.sqrt(np.clip(np.diag(self._cov), 0.0, None))
        if _touched is None:
            _touched = (np.empty(0, dtype=int), np.empty(0), np.empty((0, 0)), None)
        self._touched_idx, self._touched_mean, self._touched_cov, self._touched_chol = _touched

    @property
    def cov(self) -> np.ndarray:
        if self._cov is None:
            self._cov = self._assembler()
        return self._cov

    @cov.setter
    def cov(self, value):
        self._cov = np.asarray(value, dtype=float)
        self.sigma = np.sqrt(np.clip(np.diag(self._cov), 0.0, None))

    @property
    def size(self) -> int:
        return self.indices.shape[0]

    def positions_of(self, indices) -> np.ndarray:
        """Positions of grid indices within the inference set (must exist)."""
        order = np.argsort(self.indices)
        pos = np.searchsorted(self.indices, indices, sorter=order)
        pos = order[np.minimum(pos, order.size - 1)]
        if np.any(self.indices[pos] != indices):
            raise KeyError("index not in the inference set")
        return pos


def laplace_fit(
    space: ActionSpace,
    dataset: FeedbackDataset,
    indices,
    kernel: KernelConfig,
    scale: OrdinalScale,
    pref: PreferenceModel,
    tol: float = 1e-6,
    max_iter: int = 100,
) -> PosteriorState:
    """MAP + Laplace covariance over `indices` given the feedback dataset.

    Dataset entries reference grid indices; all of them must belong to
    `indices`. With an empty dataset the posterior equals the prior exactly.
    Newton starts at f = 0 with backtracking line search; if a step fails to
    decrease S(f) the likelihood curvature is PSD-clamped and retried.
    """
    indices = np.unique(np.asarray(indices, dtype=int))
    touched = dataset.touched_indices()
    if touched.size and not np.all(np.isin(touched, indices)):
        raise ValueError("dataset references actions outside the inference set")

    if touched.size == 0:
        prior = prior_covariance(space, indices, kernel)
        return PosteriorState(indices=indices, mean=np.zeros(indices.size), cov=prior)

    prior_tt = prior_covariance(space, touched, kernel)
    f_t, cov_tt = _newton_map(dataset.remapped({int(g): i for i, g in enumerate(touched)}),
                              prior_tt, scale, pref, tol, max_iter)
    chol_tt = _chol(prior_tt, "prior over data-bearing actions")
    touched_pack = (touched, f_t, cov_tt, chol_tt)

    # extend mean and variance to the rest of the set; the full covariance is
    # assembled only if someone asks for it
    k_ts = cross_covariance(space, touched, indices, kernel)
    a = _solve(chol_tt, k_ts)  # K_tt^{-1} K_tS
    mean = a.T @ f_t
    var = (
        kernel.variance
        + kernel.absolute_jitter()
        - np.einsum("ij,ij->j", k_ts, a)
        + np.einsum("ij,ij->j", a, cov_tt @ a)
    )
    pos_in_set = np.searchsorted(indices, touched)
    mean[pos_in_set] = f_t
    var[pos_in_set] = np.diag(cov_tt)

    def assemble():
        cov = prior_covariance(space, indices, kernel)
        cov -= k_ts.T @ a
        cov += a.T @ cov_tt @ a
        cov_tq = cov_tt @ a
        cov[pos_in_set, :] = cov_tq
        cov[:, pos_in_set] = cov_tq.T
        cov[np.ix_(pos_in_set, pos_in_set)] = cov_tt
        return (cov + cov.T) / 2.0

    return PosteriorState(
        indices=indices,
        mean=mean,
        sigma=np.sqrt(np.clip(var, 0.0, None)),
        _assembler=assemble,
        _touched=touched_pack,
    )


def _newton_map(data: FeedbackDataset, prior: np.ndarray, scale, pref, tol, max_iter):
    """Newton with backtracking on S(f) over the data-bearing block."""
    n = prior.shape[0]
    chol_p = _chol(prior, "prior covariance")
    prior_inv = _solve(chol_p, np.eye(n))
    prior_inv = (prior_inv + prior_inv.T) / 2.0

    def nll(f):
        return neg_log_likelihood(data, f, pref, scale)

    f = np.zeros(n)
    pf = prior_inv @ f
    s_val = 0.5 * f @ pf + nll(f)
    grad_norm = np.inf
    for _ in range(max_iter):
        grad = pf + nll_gradient(data, f, pref, scale)
        grad_norm = float(np.max(np.abs(grad)))
        if grad_norm < tol:
            break
        w = nll_hessian(data, f, pref, scale)
        step = _newton_step(prior_inv, w, grad, clamp=False)
        f_new, s_new = _backtrack(nll, prior_inv, f, pf, step, s_val)
        if f_new is None:
            # retry with PSD-clamped curvature before giving up on the iterate
            step = _newton_step(prior_inv, w, grad, clamp=True)
            f_new, s_new = _backtrack(nll, prior_inv, f, pf, step, s_val)
        if f_new is None and grad_norm < 1e3 * tol:
            # endgame: the remaining decrement is below floating noise in S,
            # so descent cannot be certified; take the plain Newton step and
            # let the gradient check terminate
            cand = f - step
            try:
                s_try = 0.5 * cand @ (prior_inv @ cand) + nll(cand)
            except Exception:
                s_try = np.nan
            if np.isfinite(s_try):
                f_new, s_new = cand, min(s_try, s_val)
        if f_new is None:
            break
        f, s_val = f_new, s_new
        pf = prior_inv @ f
    else:
        grad = prior_inv @ f + nll_gradient(data, f, pref, scale)
        grad_norm = float(np.max(np.abs(grad)))
    if grad_norm >= tol:
        raise ConvergenceError(grad_norm, max_iter)

    w = nll_hessian(data, f, pref, scale)
    w = _clamp_psd(w)  # keep the Laplace covariance positive definite
    h = prior_inv + w
    cov = _solve(_chol(h, "posterior precision"), np.eye(n))
    return f, (cov + cov.T) / 2.0


def _newton_step(prior_inv, w, grad, clamp: bool):
    if clamp:
        w = _clamp_psd(w)
    h = prior_inv + w
    try:
        return _solve(_chol(h, "Newton system"), grad)
    except FactorizationError:
        if clamp:
            raise
        return _newton_step(prior_inv, _clamp_psd(w), grad, clamp=True)


def _backtrack(nll, prior_inv, f, pf, step, s_val, max_halvings: int = 40):
    # quadratic part of S(f - t*step) expands in t, so each halving costs one
    # likelihood evaluation and no linear solves. Near the optimum the true
    # decrement drops below floating noise in S, so descent is certified with
    # a relative slack; termination rests on the gradient check, not on
    # monotonicity.
    q0 = 0.5 * f @ pf
    lin = step @ pf
    quad = 0.5 * step @ (prior_inv @ step)
    slack = 1e-12 * (1.0 + abs(s_val))
    t = 1.0
    for _ in range(max_halvings):
        f_new = f - t * step
        try:
            s_new = (q0 - t * lin + t * t * quad) + nll(f_new)
        except Exception:
            s_new = np.inf
        if s_new < s_val + slack:
            return f_new, min(s_new, s_val)
        t *= 0.5
    return None, None


def restrict(state: PosteriorState, space: ActionSpace, kernel: KernelConfig, indices) -> PosteriorState:
    """Marginal posterior over a subset of grid indices (all must belong to
    the state's inference set). Joint sampling over M candidates then costs
    O(M^3) instead of O((M + queried)^3)."""
    indices = np.unique(np.asarray(indices, dtype=int))
    pos = state.positions_of(indices)
    t_idx, f_t, cov_tt, chol_tt = state._touched_idx, state._touched_mean, state._touched_cov, state._touched_chol
    if t_idx.size == 0:
        return PosteriorState(indices=indices, mean=np.zeros(indices.size),
                              cov=prior_covariance(space, indices, kernel))

    k_ts = cross_covariance(space, t_idx, indices, kernel)
    a = _solve(chol_tt, k_ts)

    def assemble():
        cov = prior_covariance(space, indices, kernel)
        cov -= k_ts.T @ a
        cov += a.T @ cov_tt @ a
        inside = np.isin(indices, t_idx)
        if np.any(inside):
            t_pos = np.searchsorted(t_idx, indices[inside])
            cov_tq = cov_tt[t_pos, :] @ a
            cov[inside, :] = cov_tq
            cov[:, inside] = cov_tq.T
            cov[np.ix_(inside, inside)] = cov_tt[np.ix_(t_pos, t_pos)]
        return (cov + cov.T) / 2.0

    return PosteriorState(
        indices=indices,
        mean=state.mean[pos],
        sigma=state.sigma[pos],
        _assembler=assemble,
        _touched=(t_idx, f_t, cov_tt, chol_tt),
    )


def predict(state: PosteriorState, space: ActionSpace, kernel: KernelConfig, query) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance at arbitrary grid indices.

    Query points inside the inference set return the stored values exactly;
    everything else is the GP conditional extension from the data-bearing
    block. Far from all data this reverts to the prior (mean 0, prior
    variance).
    """
    query = np.asarray(query, dtype=int)
    t = state._touched_idx
    jitter = kernel.absolute_jitter()
    if t.size == 0:
        means = np.zeros(query.size)
        variances = np.full(query.size, kernel.variance + jitter)
    else:
        k_tq = cross_covariance(space, t, query, kernel)
        chol_tt = state._touched_chol
        if chol_tt is None:
            chol_tt = _chol(prior_covariance(space, t, kernel), "prior over data-bearing actions")
        a = _solve(chol_tt, k_tq)
        means = a.T @ state._touched_mean
        variances = (
            kernel.variance
            + jitter
            - np.einsum("ij,ij->j", k_tq, a)
            + np.einsum("ij,ij->j", a, state._touched_cov @ a)
        )
        variances = np.clip(variances, 0.0, None)

    # exact self-consistency for members of the inference set
    inside = np.isin(query, state.indices)
    if np.any(inside):
        pos = state.positions_of(query[inside])
        means[inside] = state.mean[pos]
        variances[inside] = state.sigma[pos] ** 2
    return means, variances


def sample(state: PosteriorState, count: int, seed) -> np.ndarray:
    """`count` joint draws from N(mean, cov), shape (count, n).

    Deterministic for a given seed (one stream, fixed assignment of draws).
    A PSD-singular covariance (including the all-zero matrix) falls back to
    an eigenvalue factor so degenerate posteriors sample exactly.
    """
    rng = np.random.default_rng(seed)
    n = state.size
    if count == 0:
        return np.empty((0, n))
    factor = _psd_factor(state.cov)
    z = rng.standard_normal((n, count))
    return (state.mean[:, None] + factor @ z).T


def _psd_factor(cov: np.ndarray) -> np.ndarray:
    # the assembled covariance is PSD up to rounding; escalate a relative
    # diagonal bump to stay on the fast Cholesky path, with an eigenvalue
    # factorization as the terminal fallback (exact for singular PSD input,
    # e.g. an all-zero covariance)
    scale = float(np.max(np.diag(cov), initial=0.0))
    if scale > 0.0:
        eye = np.eye(cov.shape[0])
        for bump in (0.0, 1e-12, 1e-9):
            try:
                return np.linalg.cholesky(cov + (bump * scale) * eye)
            except np.linalg.LinAlgError:
                continue
    try:
        vals, vecs = np.linalg.eigh((cov + cov.T) / 2.0)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(f"posterior covariance factorization failed: {exc}") from exc
    return vecs * np.sqrt(np.clip(vals, 0.0, None))
