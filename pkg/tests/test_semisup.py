import numpy as np
import pytest

from mosfuse.core import ScoreMatrix
from mosfuse.errors import ColumnMismatch, InsufficientLabeledData, SubsystemMismatch, UnlabeledDataset
from mosfuse.fusers import GbdtParams, TrainConfig, fit_linear_regression
from mosfuse.semisup import (
    CalibrationSet,
    apply_calibration,
    fit_calibration,
    pseudo_label,
    run_ood_pipeline,
)
from mosfuse.synth import SynthConfig, generate, generate_ood_suite

CFG = TrainConfig(loss="l2", learning_rate=0.05, max_epochs=300, patience=10)


def suite(seed=0, unlabeled=60):
    cfg = SynthConfig(seed=seed, n_systems=20, utts_per_system=10, ood_shift=0.4)
    main = generate(cfg)
    lab, unl, held = generate_ood_suite(cfg, {"labeled": 40, "unlabeled": unlabeled, "heldout": 40})
    return main, lab, unl, held


class TestCalibration:
    def test_identity(self):
        sm = ScoreMatrix(["a-1", "a-2"], ["p", "q"], np.array([[1.0, 2.0], [3.0, 4.5]]))
        out = apply_calibration(CalibrationSet.identity(sm.subsystem_names), sm)
        np.testing.assert_array_equal(out.values, sm.values)

    def test_recovers_inverse_affine(self):
        rng = np.random.default_rng(0)
        truth = rng.uniform(1, 5, 80)
        sm = ScoreMatrix([f"s-{i}" for i in range(80)], ["p", "q"], np.c_[2.0 * truth - 1.0, 0.5 * truth + 0.7])
        cal = fit_calibration(sm, truth)
        np.testing.assert_allclose(cal.alpha, [0.5, 2.0], atol=1e-8)
        np.testing.assert_allclose(cal.beta, [0.5, -1.4], atol=1e-8)

    def test_constant_column(self):
        sm = ScoreMatrix(["a-1", "a-2", "a-3"], ["p"], np.array([[3.0], [3.0], [3.0]]))
        cal = fit_calibration(sm, [1.0, 2.0, 3.0])
        assert cal.pairs() == [(0.0, 2.0)]

    def test_name_mismatch(self):
        sm = ScoreMatrix(["a-1"], ["p"], np.array([[3.0]]))
        with pytest.raises(ColumnMismatch):
            apply_calibration(CalibrationSet.identity(["q"]), sm)


class TestPseudoLabel:
    def test_values_clamped(self):
        main, _, unl, _ = suite()
        model = fit_linear_regression(main[1], main[0].mos, clamp=True)
        wild = unl.with_values(unl.values * 3 - 4)
        labels = pseudo_label(model, CalibrationSet.identity(unl.subsystem_names), wild)
        assert [u for u, _ in labels] == list(unl.utterance_ids)
        assert all(1.0 <= v <= 5.0 for _, v in labels)

    def test_empty(self):
        main, _, unl, _ = suite(unlabeled=0)
        model = fit_linear_regression(main[1], main[0].mos)
        assert pseudo_label(model, CalibrationSet.identity(unl.subsystem_names), unl) == []


class TestPipeline:
    @pytest.mark.parametrize("method", ["linear_regression", "proposed_fuser", "gbdt"])
    def test_deterministic(self, method):
        main, lab, unl, _ = suite(1)
        kw = {"gbdt": GbdtParams(n_trees=20)}
        a = run_ood_pipeline(main, lab, unl, method, CFG, **kw)
        b = run_ood_pipeline(main, lab, unl, method, CFG, **kw)
        assert a.pseudo_labels == b.pseudo_labels
        np.testing.assert_array_equal(a.calibration_c.alpha, b.calibration_c.alpha)
        np.testing.assert_array_equal(a.predict_ood(unl), b.predict_ood(unl))

    def test_steps_and_sizes(self):
        main, lab, unl, held = suite(2)
        art = run_ood_pipeline(main, lab, unl, "proposed_fuser", CFG)
        assert [s.step for s in art.steps] == ["system_a", "system_b", "pseudo_label", "system_c"]
        assert [s.n_rows for s in art.steps] == [200, 40, 60, 100]
        assert art.predict_ood(held[1]).shape == (40,)

    def test_no_unlabeled_rows_degenerates(self):
        main, lab, unl, _ = suite(3, unlabeled=0)
        art = run_ood_pipeline(main, lab, unl, "proposed_fuser", CFG)
        np.testing.assert_array_equal(art.calibration_b.alpha, art.calibration_c.alpha)
        for key, value in art.system_b.params.items():
            np.testing.assert_array_equal(value, art.system_c.params[key])

    def test_pseudo_weight_zero_matches_labeled_only(self):
        main, lab, unl, _ = suite(4)
        art = run_ood_pipeline(main, lab, unl, "linear_regression", CFG, pseudo_weight=0.0)
        np.testing.assert_allclose(art.system_c.params["coef"], art.system_b.params["coef"], atol=1e-9)

    def test_rejects_bad_inputs(self):
        main, lab, unl, _ = suite(5)
        with pytest.raises(SubsystemMismatch):
            run_ood_pipeline(main, lab, ScoreMatrix(unl.utterance_ids, [f"c{j}" for j in range(7)],
                                                    unl.values), "voting", CFG)
        with pytest.raises(InsufficientLabeledData):
            run_ood_pipeline(main, (lab[0].subset([0]), lab[1].take([0])), unl, "voting", CFG)
        with pytest.raises(UnlabeledDataset):
            run_ood_pipeline(main, (unl.to_dataset(), unl), unl, "voting", CFG)
        with pytest.raises(ValueError):
            run_ood_pipeline(main, lab, unl, "aux_fuser", CFG)
