import numpy as np
import pytest

import oracles
from conftest import make_scores
from mosfuse.errors import DataError, InvalidConfig
from mosfuse.fusers import GbdtParams, fit_gbdt, predict, staged_predict
from mosfuse.fusers.gbdt import Tree, best_split, fit_tree


class TestSplit:
    def test_matches_enumeration_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            x = rng.integers(0, 15, 40).astype(float)
            r = rng.normal(size=40)
            gain, j, thr = best_split(x[:, None], r, np.ones(40), min_leaf=1)
            sse, oracle_thr = oracles.best_single_split(x.tolist(), r.tolist())
            assert j == 0 and thr == oracle_thr
            total = float(np.sum((r - r.mean()) ** 2))
            assert gain == pytest.approx(total - sse, rel=1e-9, abs=1e-12)

    def test_min_leaf_respected(self):
        x = np.arange(10.0)[:, None]
        r = np.r_[np.zeros(9), 10.0]
        _, _, thr = best_split(x, r, np.ones(10), min_leaf=3)
        assert thr == 6.5

    def test_constant_feature(self):
        assert best_split(np.ones((10, 1)), np.arange(10.0), np.ones(10), 1) is None

    def test_first_feature_wins_ties(self):
        x = np.arange(8.0)
        _, j, _ = best_split(np.c_[x, x], np.r_[np.zeros(4), np.ones(4)], np.ones(8), 1)
        assert j == 0


class TestTree:
    def test_step_function_depth_one(self):
        x = np.linspace(1, 5, 60)
        y = np.where(x <= 3.1, 2.0, 4.5)
        tree = fit_tree(x[:, None], y, np.ones(60), max_depth=1, min_leaf=1)
        np.testing.assert_array_equal(tree.predict(x[:, None]), y)
        assert tree.depth() == 1

    def test_depth_limit(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(200, 3))
        tree = fit_tree(X, rng.normal(size=200), np.ones(200), max_depth=3, min_leaf=5)
        assert tree.depth() <= 3

    def test_dict_round_trip(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(50, 2))
        tree = fit_tree(X, X[:, 0] ** 2, np.ones(50), 2, 2)
        np.testing.assert_array_equal(Tree.from_dict(tree.to_dict()).predict(X), tree.predict(X))

    def test_bad_dict(self):
        with pytest.raises(DataError):
            Tree.from_dict({"feature": [], "threshold": [], "left": [], "right": [], "value": []})


class TestBoosting:
    @pytest.mark.parametrize("seed", range(3))
    def test_loss_non_increasing(self, seed):
        ds, sm = make_scores(300, k=5, seed=seed)
        model = fit_gbdt(sm, ds.mos, GbdtParams(n_trees=60))
        hist = np.array(model.train_meta.history)
        assert np.all(np.diff(hist) <= 1e-15)

    def test_staged_matches_predict(self, small_data):
        ds, sm = small_data
        model = fit_gbdt(sm, ds.mos, GbdtParams(n_trees=20))
        stages = list(staged_predict(model, sm))
        assert len(stages) == len(model.params["trees"]) + 1
        np.testing.assert_allclose(stages[-1], predict(model, sm), atol=1e-12)
        np.testing.assert_allclose(stages[0], ds.mos.mean())

    def test_sample_weights(self, small_data):
        ds, sm = small_data
        w = np.r_[np.ones(60), np.zeros(60)]
        model = fit_gbdt(sm, ds.mos, GbdtParams(n_trees=0), sample_weight=w)
        assert model.params["base"] == pytest.approx(ds.mos[:60].mean())

    def test_deterministic(self, small_data):
        ds, sm = small_data
        a = predict(fit_gbdt(sm, ds.mos, GbdtParams(n_trees=30)), sm)
        b = predict(fit_gbdt(sm, ds.mos, GbdtParams(n_trees=30)), sm)
        np.testing.assert_array_equal(a, b)

    def test_invalid_params(self):
        with pytest.raises(InvalidConfig):
            GbdtParams(shrinkage=0.0)
        with pytest.raises(InvalidConfig):
            GbdtParams(max_depth=0)
