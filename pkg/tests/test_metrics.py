import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

import oracles
from mosfuse.core import MosDataset
from mosfuse.errors import ConstantInput, EmptyInput, LengthMismatch, NonFiniteScore
from mosfuse.metrics import (
    CSV_HEADER,
    average_ranks,
    evaluate,
    kendall_tau_b,
    mse,
    pearson,
    spearman,
)


def random_pair(rng, tied):
    n = int(rng.integers(3, 51))
    if tied:
        x = rng.integers(0, 6, n).astype(float)
        y = rng.integers(0, 6, n).astype(float)
    else:
        x, y = rng.normal(size=n), rng.normal(size=n)
    return x, y


class TestAgainstOracles:
    @pytest.mark.parametrize("tied", [False, True])
    def test_random_instances(self, tied):
        rng = np.random.default_rng(11 + tied)
        for _ in range(100):
            x, y = random_pair(rng, tied)
            if len(set(x)) < 2 or len(set(y)) < 2:
                continue
            xl, yl = x.tolist(), y.tolist()
            assert abs(mse(x, y) - oracles.mse(xl, yl)) <= 1e-12
            assert abs(pearson(x, y) - oracles.pearson(xl, yl)) <= 1e-12
            assert abs(spearman(x, y) - oracles.spearman(xl, yl)) <= 1e-12
            assert abs(kendall_tau_b(x, y) - oracles.kendall_tau_b(xl, yl)) <= 1e-12

    def test_scipy_agrees(self):
        stats = pytest.importorskip("scipy.stats")
        rng = np.random.default_rng(5)
        for _ in range(50):
            x, y = random_pair(rng, True)
            if len(set(x)) < 2 or len(set(y)) < 2:
                continue
            assert kendall_tau_b(x, y) == pytest.approx(stats.kendalltau(x, y).statistic, abs=1e-12)
            assert spearman(x, y) == pytest.approx(stats.spearmanr(x, y).statistic, abs=1e-12)

    def test_known_values(self):
        assert pearson([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8, abs=1e-15)
        assert kendall_tau_b([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(4 / 6, abs=1e-15)
        np.testing.assert_array_equal(average_ranks([10, 20, 10, 30]), [1.5, 3.0, 1.5, 4.0])

    @given(st.permutations(list(range(30))))
    def test_spearman_no_ties_formula(self, perm):
        x = np.arange(30.0)
        y = np.array(perm, dtype=float)
        d2 = float(np.sum((x - y) ** 2))
        assert spearman(x, y) == pytest.approx(1 - 6 * d2 / (30 * (30 ** 2 - 1)), abs=1e-12)

    def test_large_input_fast(self):
        rng = np.random.default_rng(0)
        x = rng.integers(0, 33, 20000).astype(float)
        y = x + rng.normal(0, 3, x.size)
        assert -1 <= kendall_tau_b(x, y) <= 1


vectors = st.lists(st.floats(-100, 100, allow_nan=False), min_size=3, max_size=30)


class TestProperties:
    @given(vectors, st.data())
    def test_symmetric(self, xs, data):
        ys = data.draw(st.lists(st.floats(-100, 100, allow_nan=False), min_size=len(xs), max_size=len(xs)))
        assume(len(set(xs)) > 1 and len(set(ys)) > 1)
        for fn in (pearson, spearman, kendall_tau_b):
            assert fn(xs, ys) == pytest.approx(fn(ys, xs), abs=1e-12)

    @settings(max_examples=50)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_rank_metrics_monotone_invariant(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.integers(0, 8, 25).astype(float)
        y = rng.normal(size=25)
        assume(len(set(x)) > 1)
        fx = np.exp(x / 3.0) * 2 + 7
        gy = np.arctan(y) * 5 - 1
        assert spearman(fx, gy) == spearman(x, y)
        assert kendall_tau_b(fx, gy) == kendall_tau_b(x, y)

    @given(st.floats(0.01, 100), st.floats(-50, 50), st.floats(0.01, 100), st.floats(-50, 50))
    def test_pearson_affine(self, a, b, c, d):
        rng = np.random.default_rng(2)
        x, y = rng.normal(size=20), rng.normal(size=20)
        r = pearson(x, y)
        assert pearson(a * x + b, c * y + d) == pytest.approx(r, abs=1e-12)
        assert pearson(-a * x + b, c * y + d) == pytest.approx(-r, abs=1e-12)

    @given(st.floats(-10, 10))
    def test_mse_shift(self, c):
        x = np.array([1.0, 2.5, 3.25])
        y = np.array([1.5, 2.0, 4.0])
        assert mse(x + c, y + c) == pytest.approx(mse(x, y), abs=1e-12)

    def test_bounds(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            x, y = random_pair(rng, True)
            if len(set(x)) > 1 and len(set(y)) > 1:
                for fn in (pearson, spearman, kendall_tau_b):
                    assert -1.0 <= fn(x, y) <= 1.0


class TestErrors:
    @pytest.mark.parametrize("fn", [pearson, spearman, kendall_tau_b])
    def test_constant(self, fn):
        with pytest.raises(ConstantInput):
            fn([1, 1, 1], [1, 2, 3])

    @pytest.mark.parametrize("fn", [pearson, spearman, kendall_tau_b])
    def test_too_short(self, fn):
        with pytest.raises(EmptyInput):
            fn([1.0], [2.0])

    def test_length(self):
        with pytest.raises(LengthMismatch):
            mse([1, 2], [1])

    def test_non_finite(self):
        with pytest.raises(NonFiniteScore):
            mse([1, math.nan], [1, 2])


def _dataset(ids, mos):
    return MosDataset.from_arrays(ids, [u.split("-")[0] for u in ids], mos)


class TestEvaluate:
    def test_perfect(self):
        ds = _dataset(["a-1", "a-2", "b-1", "b-2", "c-1"], [1.0, 2.0, 3.0, 4.0, 5.0])
        rep = evaluate(ds, ds.mos)
        assert rep.utt_mse == 0.0 and rep.sys_mse == 0.0
        for v in (rep.utt_lcc, rep.utt_srcc, rep.utt_ktau, rep.sys_lcc, rep.sys_srcc, rep.sys_ktau):
            assert v == pytest.approx(1.0, abs=1e-12)
        assert not rep.undefined

    def test_system_means(self):
        ds = _dataset(["a-1", "a-2", "b-1"], [1.0, 3.0, 4.0])
        rep = evaluate(ds, [2.0, 2.0, 5.0])
        assert rep.sys_mse == pytest.approx(0.5)

    def test_constant_prediction_flags_undefined(self):
        ds = _dataset(["a-1", "a-2", "b-1"], [1.0, 3.0, 4.0])
        rep = evaluate(ds, [3.0, 3.0, 3.0])
        assert {"utt_lcc", "utt_srcc", "utt_ktau", "sys_lcc"} <= rep.undefined
        assert math.isnan(rep.utt_lcc)
        assert rep.utt_mse == pytest.approx((4 + 0 + 1) / 3)
        assert "nan" in rep.to_csv()

    def test_csv_layout(self):
        ds = _dataset(["a-1", "b-1", "c-1"], [1.0, 3.0, 4.0])
        text = evaluate(ds, [1.5, 2.5, 4.5]).to_csv()
        header, row = text.splitlines()
        assert header == CSV_HEADER
        assert all(len(cell.split(".")[1]) == 6 for cell in row.split(","))

    def test_table_columns(self):
        ds = _dataset(["a-1", "b-1", "c-1"], [1.0, 3.0, 4.0])
        table = evaluate(ds, [1.5, 2.5, 4.5]).to_table("fused")
        assert "Utterance level" in table and "System level" in table
        assert table.count("KTAU") == 2
