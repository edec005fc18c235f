import json

import numpy as np
import pytest

from conftest import make_scores
from mosfuse.core import FeatureMatrix
from mosfuse.errors import (
    CorruptModel,
    DuplicateUtterance,
    NonFiniteValue,
    OutOfRangeMos,
    ParseError,
    RaggedRow,
    VersionMismatch,
)
from mosfuse.fusers import METHODS, GbdtParams, TrainConfig, fit, predict
from mosfuse.io import (
    load_calibration,
    load_model,
    read_answer,
    read_aux,
    read_features,
    read_labels,
    read_scores,
    save_calibration,
    save_model,
    write_answer,
    write_aux,
    write_features,
    write_labels,
    write_scores,
)
from mosfuse.semisup import CalibrationSet


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


class TestScores:
    def test_parse(self, tmp_path):
        f = write(tmp_path / "s.csv", "utterance_id,system_id,p,q\nA-1,A,1.5,2\nB-1,B,3,4.25\n")
        sm = read_scores(f)
        assert sm.subsystem_names == ("p", "q")
        np.testing.assert_array_equal(sm.values, [[1.5, 2.0], [3.0, 4.25]])
        assert list(sm.system_ids) == ["A", "B"]

    def test_canonical_round_trip(self, tmp_path):
        f = write(tmp_path / "s.csv", "utterance_id,system_id,p\nZ-1,Z,1.5\nA-1,A,3.1234567\n")
        write_scores(tmp_path / "a.csv", read_scores(f))
        write_scores(tmp_path / "b.csv", read_scores(tmp_path / "a.csv"))
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert (tmp_path / "a.csv").read_text() == "utterance_id,system_id,p\nZ-1,Z,1.500000\nA-1,A,3.123457\n"

    def test_nan_rejected_with_line(self, tmp_path):
        f = write(tmp_path / "s.csv", "utterance_id,system_id,p\nA-1,A,1\nA-2,A,NaN\n")
        with pytest.raises(NonFiniteValue) as exc:
            read_scores(f)
        assert exc.value.line == 3

    def test_non_numeric(self, tmp_path):
        f = write(tmp_path / "s.csv", "utterance_id,system_id,p\nA-1,A,good\n")
        with pytest.raises(ParseError) as exc:
            read_scores(f)
        assert exc.value.line == 2

    def test_duplicate(self, tmp_path):
        f = write(tmp_path / "s.csv", "utterance_id,system_id,p\nA-1,A,1\nA-1,A,2\n")
        with pytest.raises(DuplicateUtterance):
            read_scores(f)

    def test_bad_header(self, tmp_path):
        with pytest.raises(ParseError):
            read_scores(write(tmp_path / "s.csv", "id,p\nA-1,1\n"))


class TestLabels:
    def test_labeled(self, tmp_path):
        ds = read_labels(write(tmp_path / "l.csv", "utterance_id,system_id,mos\na-1,a,1\na-2,a,2\nb-1,b,3\n"))
        assert ds.labeled and len(ds) == 3

    def test_unlabeled_and_system_from_id(self, tmp_path):
        ds = read_labels(write(tmp_path / "l.csv", "utterance_id\nsysA-u1\nsysB-u2\n"))
        assert not ds.labeled and ds.system_ids == ["sysA", "sysB"]

    def test_out_of_range(self, tmp_path):
        with pytest.raises(OutOfRangeMos):
            read_labels(write(tmp_path / "l.csv", "utterance_id,system_id,mos\na-1,a,5.5\n"))

    def test_round_trip(self, tmp_path):
        ds, _ = make_scores(30, seed=1)
        write_labels(tmp_path / "l.csv", ds)
        back = read_labels(tmp_path / "l.csv")
        assert back.utterance_ids == ds.utterance_ids
        np.testing.assert_allclose(back.mos, ds.mos, atol=5e-7)


class TestFeaturesAux:
    def test_features(self, tmp_path):
        fm = FeatureMatrix(["a-1", "a-2"], np.arange(8.0).reshape(2, 4))
        write_features(tmp_path / "f.csv", fm)
        back = read_features(tmp_path / "f.csv")
        assert back.values.shape == (2, 4)
        np.testing.assert_array_equal(back.values, fm.values)

    def test_ragged(self, tmp_path):
        f = write(tmp_path / "f.csv", "utterance_id,f_0,f_1\na-1,1,2\na-2,3\n")
        with pytest.raises(RaggedRow) as exc:
            read_features(f)
        assert exc.value.line == 3

    def test_aux(self, tmp_path):
        write_aux(tmp_path / "x.csv", [("a-1", 0.12), ("a-2", 0.03)])
        assert read_aux(tmp_path / "x.csv") == [("a-1", 0.12), ("a-2", 0.03)]


class TestAnswer:
    def test_exact_format(self, tmp_path):
        write_answer(tmp_path / "ans.txt", ["a"], [3.0])
        assert (tmp_path / "ans.txt").read_bytes() == b"a,3.000000\n"

    def test_empty(self, tmp_path):
        write_answer(tmp_path / "ans.txt", [], [])
        assert (tmp_path / "ans.txt").read_bytes() == b""
        assert read_answer(tmp_path / "ans.txt") == []

    def test_parse_back(self, tmp_path):
        rng = np.random.default_rng(0)
        preds = rng.uniform(1, 5, 1000)
        ids = [f"u{i}" for i in range(1000)]
        write_answer(tmp_path / "ans.txt", ids, preds)
        back = read_answer(tmp_path / "ans.txt")
        assert [u for u, _ in back] == ids
        assert np.max(np.abs(np.array([v for _, v in back]) - preds)) <= 5e-7


CFG = TrainConfig(learning_rate=0.05, max_epochs=200, patience=10)


def fitted(method, ds, sm):
    aux = np.linspace(0, 1, len(ds)) if method == "aux_fuser" else None
    return fit(method, sm, ds.mos, CFG, aux=aux, gbdt=GbdtParams(n_trees=15)), aux


class TestModels:
    @pytest.mark.parametrize("method", METHODS)
    def test_round_trip_bit_exact(self, tmp_path, method):
        ds, sm = make_scores(80, k=4, seed=2)
        model, aux = fitted(method, ds, sm)
        save_model(model, tmp_path / "m.json")
        back = load_model(tmp_path / "m.json")
        assert back.method == model.method and back.subsystem_names == model.subsystem_names
        np.testing.assert_array_equal(predict(back, sm, aux), predict(model, sm, aux))
        save_model(back, tmp_path / "m2.json")
        assert (tmp_path / "m.json").read_bytes() == (tmp_path / "m2.json").read_bytes()

    def test_gbdt_leaves_bit_equal(self, tmp_path):
        ds, sm = make_scores(300, k=4, seed=3)
        model = fit("gbdt", sm, ds.mos, gbdt=GbdtParams(n_trees=200))
        save_model(model, tmp_path / "g.json")
        back = load_model(tmp_path / "g.json")
        assert len(back.params["trees"]) == len(model.params["trees"])
        for a, b in zip(model.params["trees"], back.params["trees"]):
            assert a.value == b.value and a.threshold == b.threshold

    def _doc(self, tmp_path):
        ds, sm = make_scores(40, k=3, seed=4)
        save_model(fit("ols", sm, ds.mos), tmp_path / "m.json")
        return json.loads((tmp_path / "m.json").read_text())

    def test_version_mismatch(self, tmp_path):
        doc = self._doc(tmp_path)
        doc["format_version"] = 999
        write(tmp_path / "bad.json", json.dumps(doc))
        with pytest.raises(VersionMismatch):
            load_model(tmp_path / "bad.json")

    def test_missing_param(self, tmp_path):
        doc = self._doc(tmp_path)
        del doc["params"]["coef"]
        write(tmp_path / "bad.json", json.dumps(doc))
        with pytest.raises(CorruptModel) as exc:
            load_model(tmp_path / "bad.json")
        assert exc.value.field == "params.coef"

    def test_garbage(self, tmp_path):
        with pytest.raises(CorruptModel):
            load_model(write(tmp_path / "bad.json", "{not json"))

    def test_calibration(self, tmp_path):
        cal = CalibrationSet(["p", "q"], [0.5, 1.0 / 3.0], [0.1, -2.0])
        save_calibration(cal, tmp_path / "c.json")
        back = load_calibration(tmp_path / "c.json")
        assert back.subsystem_names == cal.subsystem_names
        np.testing.assert_array_equal(back.alpha, cal.alpha)
        np.testing.assert_array_equal(back.beta, cal.beta)


class TestAtomicWrite:
    def test_failure_leaves_no_file(self, tmp_path):
        with pytest.raises(Exception):
            write_answer(tmp_path / "ans.txt", ["a", "b"], [1.0])
        assert list(tmp_path.iterdir()) == []
