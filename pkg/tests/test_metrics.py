import numpy as np
import pytest

from roial.metrics import all_pair_heatmaps, error_metrics, pair_heatmap, permutation_importance
from roial.space import build_grid
from roial.truth import SyntheticTruth

from conftest import small_config


def _truth_on(space, thresholds=(-0.43, 0.43), seed=0):
    rng = np.random.default_rng(seed)
    return SyntheticTruth(
        utilities=rng.normal(size=space.size),
        thresholds=np.asarray(thresholds),
        ordinal_noise=0.1,
        preference_noise=0.02,
    )


class TestErrorMetrics:
    def test_perfect_recovery(self):
        cfg = small_config()
        space = cfg.space()
        truth = _truth_on(space, thresholds=cfg.thresholds)
        m = error_metrics(truth.utilities, truth, cfg)
        assert m["error_weighted"] == 0.0
        assert m["ordinal_error"] == 0.0
        assert m["preference_error"] == 0.0
        conf = m["confusion"]
        assert conf.sum() == space.size
        assert np.all(conf == np.diag(np.diag(conf)))

    def test_one_category_off_gives_unit_ordinal_error(self):
        cfg = small_config(
            ordinal={"categories": ["a", "b", "c", "d"], "thresholds": [0.0, 1.0, 2.0], "noise": 0.05}
        )
        space = cfg.space()
        utilities = np.where(np.arange(space.size) % 2 == 0, -0.5, 0.5)  # categories 1 and 2
        truth = SyntheticTruth(
            utilities=utilities, thresholds=np.array([0.0, 1.0, 2.0]),
            ordinal_noise=0.0, preference_noise=0.0,
        )
        means = utilities + 1.0  # shifts every action exactly one category up
        m = error_metrics(means, truth, cfg)
        assert m["ordinal_error"] == pytest.approx(1.0)
        assert m["ordinal_within_one"] == 1.0

    def test_preference_error_matches_independent_recomputation(self):
        cfg = small_config()
        space = cfg.space()
        truth = _truth_on(space, thresholds=cfg.thresholds, seed=3)
        rng = np.random.default_rng(5)
        means = truth.utilities + rng.normal(size=space.size) * 0.7
        eval_idx = rng.choice(space.size, size=space.size, replace=False)
        m = error_metrics(means, truth, cfg, eval_idx)

        wrong = 0
        for a, b in zip(eval_idx[:-1], eval_idx[1:]):
            pred = means[a] > means[b]
            true = truth.utilities[a] > truth.utilities[b]
            wrong += pred != true
        assert m["preference_error"] == pytest.approx(wrong / (len(eval_idx) - 1))

    def test_roi_confusion_counts(self):
        cfg = small_config()
        space = cfg.space()
        truth = _truth_on(space, thresholds=cfg.thresholds, seed=9)
        m = error_metrics(truth.utilities, truth, cfg)
        roi = m["roi_confusion"]
        assert roi.sum() == space.size
        assert m["roi_accuracy"] == pytest.approx((roi[0, 0] + roi[1, 1]) / space.size)


class TestPairHeatmap:
    def test_gait_pair_shape(self):
        space = build_grid([(0, 1, 10), (0, 1, 7), (0, 1, 5), (0, 1, 5)])
        rng = np.random.default_rng(0)
        means = rng.normal(size=space.size)
        roi = rng.random(space.size) > 0.5
        panel = pair_heatmap(means, roi, space, 0, 1)
        values = np.asarray(panel["values"])
        assert values.shape == (10, 7)
        assert values.min() == 0.0 and values.max() == 1.0
        assert np.asarray(panel["roi_fraction"]).shape == (10, 7)

    def test_constant_posterior_normalization_guard(self):
        space = build_grid([(0, 1, 4), (0, 1, 3)])
        panel = pair_heatmap(np.full(12, 2.5), np.ones(12), space, 0, 1)
        assert np.all(np.asarray(panel["values"]) == 0.5)

    def test_averaging_over_remaining_dimensions(self):
        space = build_grid([(0, 1, 2), (0, 1, 2), (0, 1, 3)])
        means = space.normalized_coords()[:, 2]  # varies only along dim 2
        panel = pair_heatmap(means, np.ones(space.size), space, 0, 1)
        # averaged over dim 2 the panel is constant -> normalization guard
        assert np.all(np.asarray(panel["values"]) == 0.5)
        panel2 = pair_heatmap(means, np.ones(space.size), space, 0, 2)
        vals = np.asarray(panel2["values"])
        assert np.allclose(vals[:, 0], 0.0)
        assert np.allclose(vals[:, -1], 1.0)

    def test_six_panels_for_four_dims(self):
        space = build_grid([(0, 1, 3)] * 4)
        panels = all_pair_heatmaps(np.zeros(space.size), np.ones(space.size), space)
        assert len(panels) == 6
        assert sorted(tuple(p["dims"]) for p in panels) == [
            ("x0", "x1"), ("x0", "x2"), ("x0", "x3"), ("x1", "x2"), ("x1", "x3"), ("x2", "x3"),
        ]


class TestPermutationImportance:
    def test_insensitive_dimension_scores_zero(self):
        space = build_grid([(0, 1, 5), (0, 1, 5)])
        means = space.normalized_coords()[:, 0]  # constant along dim 1
        scores = permutation_importance(means, space, seed=0, repeats=5)
        assert scores[1] == 0.0
        assert scores[0] > 0.0

    def test_identity_utility_matches_closed_form(self):
        # when utility equals coordinate d, the importance of d is the mean
        # absolute pairwise displacement of that coordinate under a uniform
        # random permutation: (1/A^2) sum_ij |v_i - v_j|
        space = build_grid([(0, 1, 5), (0, 1, 5), (0, 1, 5)])
        coord = space.normalized_coords()[:, 1]
        scores = permutation_importance(coord, space, seed=2, repeats=300)
        expected = np.mean(np.abs(coord[:, None] - coord[None, :]))
        assert scores[1] == pytest.approx(expected, rel=0.05)
        assert scores[0] == 0.0 and scores[2] == 0.0

    def test_deterministic_per_seed(self):
        space = build_grid([(0, 1, 4)] * 3)
        means = np.random.default_rng(0).normal(size=space.size)
        a = permutation_importance(means, space, seed=5, repeats=3)
        b = permutation_importance(means, space, seed=5, repeats=3)
        assert np.array_equal(a, b)

    def test_four_scores_for_gait_grid(self):
        space = build_grid([(0, 1, 10), (0, 1, 7), (0, 1, 5), (0, 1, 5)])
        means = np.random.default_rng(1).normal(size=space.size)
        scores = permutation_importance(means, space, seed=0, repeats=2)
        assert scores.shape == (4,)
        assert np.all(scores >= 0)
