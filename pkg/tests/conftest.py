import numpy as np
import pytest

from roial.config import config_from_dict
from roial.likelihoods import FeedbackDataset, OrdinalScale, PreferenceModel
from roial.posterior import KernelConfig
from roial.space import build_grid


@pytest.fixture
def scale3():
    return OrdinalScale(thresholds=(-1.0, 1.0), noise=0.5)


@pytest.fixture
def scale5():
    return OrdinalScale(thresholds=(-0.84162123, -0.2533471, 0.2533471, 0.84162123), noise=0.1)


@pytest.fixture
def pref_model():
    return PreferenceModel(noise=0.5)


def random_dataset(rng, n_actions, n_pref, n_ord, r):
    """Random feedback touching positions 0..n_actions-1."""
    ds = FeedbackDataset()
    for _ in range(n_pref):
        w, l = rng.choice(n_actions, size=2, replace=False)
        ds.add_preference(w, l)
    for _ in range(n_ord):
        ds.add_ordinal(rng.integers(n_actions), int(rng.integers(1, r + 1)))
    return ds


def small_config(**overrides):
    raw = {
        "name": "test",
        "seed": 0,
        "dims": [
            {"name": "x0", "min": 0.0, "max": 1.0, "bins": 6},
            {"name": "x1", "min": 0.0, "max": 1.0, "bins": 6},
        ],
        "kernel": {"variance": 1.0, "lengthscale": 0.25, "jitter": 1e-6},
        "ordinal": {
            "categories": ["O1", "O2", "O3"],
            "thresholds": [-0.43, 0.43],
            "noise": 0.1,
        },
        "preference": {"noise": 0.02},
        "acquisition": {"confidence": 0.45, "subset_size": 12, "samples": 100},
        "trials": {"training": 10, "validation": 3},
        "engine": {"refresh_every": 5},
        "simulation": {
            "truth": {"kind": "synthetic", "seed": 11},
            "user_noise": {"ordinal": 0.1, "preference": 0.02},
        },
    }
    raw.update(overrides)
    return config_from_dict(raw)


def gait_config(**overrides):
    """The 4-D live-experiment shape: 10x7x5x5 grid, 4 categories."""
    raw = {
        "name": "gait-4d",
        "seed": 5,
        "dims": [
            {"name": "SL", "min": 0.0, "max": 1.0, "bins": 10},
            {"name": "SD", "min": 0.0, "max": 1.0, "bins": 7},
            {"name": "PR", "min": 0.0, "max": 1.0, "bins": 5},
            {"name": "PP", "min": 0.0, "max": 1.0, "bins": 5},
        ],
        "ordinal": {
            "categories": ["Very Bad", "Bad", "Neutral", "Good"],
            "thresholds": [-0.67448975, 0.0, 0.67448975],
            "noise": 0.1,
        },
        "preference": {"noise": 0.02},
        "acquisition": {"confidence": 0.45, "subset_size": 500, "samples": 1000},
        "trials": {"training": 30, "validation": 10},
        "simulation": {
            "truth": {"kind": "synthetic", "seed": 2},
            "user_noise": {"ordinal": 0.1, "preference": 0.02},
        },
    }
    raw.update(overrides)
    return config_from_dict(raw)


@pytest.fixture
def grid2d():
    return build_grid([(0.0, 1.0, 6), (0.0, 1.0, 6)])


@pytest.fixture
def kernel():
    return KernelConfig(variance=1.0, lengthscale=0.25, jitter=1e-6)


def finite_difference_gradient(fun, x, step=1e-6):
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for i in range(x.size):
        hi = x.copy()
        lo = x.copy()
        hi[i] += step
        lo[i] -= step
        grad[i] = (fun(hi) - fun(lo)) / (2 * step)
    return grad


def finite_difference_hessian(grad_fun, x, step=1e-5):
    x = np.asarray(x, dtype=float)
    n = x.size
    hess = np.zeros((n, n))
    for i in range(n):
        hi = x.copy()
        lo = x.copy()
        hi[i] += step
        lo[i] -= step
        hess[:, i] = (grad_fun(hi) - grad_fun(lo)) / (2 * step)
    return hess
