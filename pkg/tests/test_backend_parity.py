"""The compiled scoring kernel and the numpy fallback must agree."""

import numpy as np
import pytest

from roial import _scores

_core = pytest.importorskip("roial._core")


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("r", [2, 3, 5, 8])
def test_backends_agree(seed, r):
    rng = np.random.default_rng(seed)
    L, m = 123, 17
    f_cand = rng.normal(size=(L, m)) * rng.uniform(0.2, 3)
    f_prev = rng.normal(size=L)
    thresholds = np.sort(rng.normal(size=r - 1))
    c_p = float(rng.uniform(0.02, 1.0))
    c_o = float(rng.uniform(0.05, 1.0))

    fast = _core.score_candidates(f_cand, f_prev, thresholds, c_p, c_o)
    slow = _scores.score_candidates(f_cand, f_prev, thresholds, c_p, c_o)
    assert np.allclose(fast, slow, atol=1e-10, rtol=1e-10)

    fast1 = _core.score_candidates(f_cand, None, thresholds, c_p, c_o)
    slow1 = _scores.score_candidates(f_cand, None, thresholds, c_p, c_o)
    assert np.allclose(fast1, slow1, atol=1e-10, rtol=1e-10)


def test_extreme_noise_scales_stay_finite():
    rng = np.random.default_rng(0)
    f_cand = rng.normal(size=(50, 8)) * 3
    f_prev = rng.normal(size=50) * 3
    thresholds = np.array([-0.84, -0.25, 0.25, 0.84])
    for impl in (_core.score_candidates, _scores.score_candidates):
        gains = impl(f_cand, f_prev, thresholds, 0.02, 0.1)
        assert np.all(np.isfinite(gains))
        assert np.all(gains >= 0)


def test_too_many_categories_rejected():
    with pytest.raises(ValueError):
        _core.score_candidates(np.zeros((2, 2)), None, np.arange(70, dtype=float), 0.1, 0.1)
