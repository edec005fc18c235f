"""Four-step semi-supervised pipeline for the out-of-domain track.

1. system a: fuser fit on main-track data.
2. system b: per-subsystem affine calibration + fuser fit on labeled OOD data.
3. pseudo-labels: system b applied to the unlabeled OOD scores.
4. system c: calibration + fuser refit from scratch on labeled + pseudo-labeled rows.

Sub-systems are black boxes here, so "fine-tuning a sub-system on OOD data"
is modeled as an affine recalibration of its score column.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import MosDataset, ScoreMatrix, align
from .errors import ColumnMismatch, InsufficientLabeledData, LengthMismatch, SubsystemMismatch, UnlabeledDataset
from .fusers import FuserModel, GbdtParams, TrainConfig, canonical_method, fit, predict
from .fusers.base import as_vector, normalized_weights

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class CalibrationSet:
    """Per-subsystem affine maps x -> alpha * x + beta."""

    subsystem_names: tuple[str, ...]
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "subsystem_names", tuple(self.subsystem_names))
        alpha = np.array(self.alpha, dtype=np.float64).ravel()
        beta = np.array(self.beta, dtype=np.float64).ravel()
        if alpha.size != len(self.subsystem_names) or beta.size != alpha.size:
            raise LengthMismatch("calibration needs one (alpha, beta) pair per subsystem")
        if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(beta))):
            raise ValueError("calibration parameters must be finite")
        alpha.setflags(write=False)
        beta.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @classmethod
    def identity(cls, names) -> "CalibrationSet":
        k = len(names)
        return cls(names, np.ones(k), np.zeros(k))

    def pairs(self) -> list[tuple[float, float]]:
        return [(float(a), float(b)) for a, b in zip(self.alpha, self.beta)]


def fit_calibration(scores: ScoreMatrix, truth, sample_weights=None) -> CalibrationSet:
    """Weighted least-squares fit of truth on each score column separately.

    A zero-variance column gets alpha = 0 and beta = weighted mean truth.
    """
    X = scores.values
    y = as_vector(truth, X.shape[0])
    sw = normalized_weights(sample_weights, y.size)
    y_mean = float(sw @ y)
    alpha = np.zeros(scores.k)
    beta = np.full(scores.k, y_mean)
    for j in range(scores.k):
        xc = X[:, j] - sw @ X[:, j]
        var = float(sw @ (xc * xc))
        if var > 0.0:
            alpha[j] = float(sw @ (xc * (y - y_mean))) / var
            beta[j] = y_mean - alpha[j] * float(sw @ X[:, j])
    return CalibrationSet(scores.subsystem_names, alpha, beta)


def apply_calibration(cal: CalibrationSet, scores: ScoreMatrix) -> ScoreMatrix:
    if cal.subsystem_names != scores.subsystem_names:
        raise ColumnMismatch(f"calibration for {list(cal.subsystem_names)} applied to {list(scores.subsystem_names)}")
    return scores.with_values(scores.values * cal.alpha + cal.beta)


def pseudo_label(model: FuserModel, cal: CalibrationSet, unlabeled_scores: ScoreMatrix) -> list[tuple[str, float]]:
    """Label each unlabeled utterance with the calibrated fuser's prediction."""
    if len(unlabeled_scores) == 0:
        if cal.subsystem_names != unlabeled_scores.subsystem_names:
            raise ColumnMismatch("calibration and unlabeled scores disagree on subsystems")
        return []
    preds = predict(model, apply_calibration(cal, unlabeled_scores))
    return list(zip(unlabeled_scores.utterance_ids, (float(p) for p in preds)))


@dataclass(frozen=True, eq=False)
class StepLog:
    step: str
    n_rows: int
    train_loss: float
    val_loss: float
    epochs: int


@dataclass(frozen=True, eq=False)
class PipelineArtifacts:
    system_a: FuserModel
    calibration_b: CalibrationSet
    system_b: FuserModel
    pseudo_labels: list[tuple[str, float]]
    calibration_c: CalibrationSet
    system_c: FuserModel
    method: str = "proposed_fuser"
    seed: int = 0
    steps: tuple[StepLog, ...] = field(default_factory=tuple)

    def predict_ood(self, scores: ScoreMatrix) -> np.ndarray:
        return predict(self.system_c, apply_calibration(self.calibration_c, scores))

    def predict_ood_b(self, scores: ScoreMatrix) -> np.ndarray:
        return predict(self.system_b, apply_calibration(self.calibration_b, scores))


def _labeled_pair(pair, what: str) -> tuple[MosDataset, ScoreMatrix]:
    dataset, scores = pair
    if not dataset.labeled:
        raise UnlabeledDataset(f"{what} must be labeled")
    return align(dataset, scores)


def _fit_step(method, scores, truth, cfg, weights, clamp, gbdt):
    return fit(method, scores, truth, cfg, sample_weight=weights, clamp=clamp, gbdt=gbdt)


def _log(step, model: FuserModel, n: int) -> StepLog:
    m = model.train_meta
    log.info("%s: rows=%d train_loss=%.6g val_loss=%.6g epochs=%d", step, n, m.train_loss, m.val_loss, m.epochs)
    return StepLog(step, n, m.train_loss, m.val_loss, m.epochs)


def run_ood_pipeline(main_train, ood_labeled, ood_unlabeled: ScoreMatrix, method: str = "proposed_fuser",
                     cfg: TrainConfig = TrainConfig(), pseudo_weight: float = 1.0, clamp: bool = False,
                     gbdt: GbdtParams = GbdtParams()) -> PipelineArtifacts:
    """Run steps 1-4 with a single fusion method throughout.

    ``pseudo_weight`` scales the sample weight of pseudo-labeled rows in
    step 4 (1.0 gives every row equal weight). Step 4 refits calibration and
    fuser from scratch rather than continuing from step 2.
    """
    method = canonical_method(method)
    if method in ("feature_regression", "aux_fuser"):
        raise ValueError(f"the OOD pipeline operates on score tables; {method!r} is not supported")
    main_ds, main_scores = _labeled_pair(main_train, "main-track training data")
    ood_ds, ood_scores = _labeled_pair(ood_labeled, "labeled OOD data")
    names = main_scores.subsystem_names
    if ood_scores.subsystem_names != names or ood_unlabeled.subsystem_names != names:
        raise SubsystemMismatch("main, labeled OOD and unlabeled OOD scores must share subsystem names")
    if len(ood_ds) < 2:
        raise InsufficientLabeledData(f"need at least 2 labeled OOD rows, got {len(ood_ds)}")

    system_a = _fit_step(method, main_scores, main_ds.mos, cfg, None, clamp, gbdt)
    steps = [_log("system_a", system_a, len(main_ds))]

    y_lab = ood_ds.mos
    cal_b = fit_calibration(ood_scores, y_lab)
    system_b = _fit_step(method, apply_calibration(cal_b, ood_scores), y_lab, cfg, None, clamp, gbdt)
    steps.append(_log("system_b", system_b, len(ood_ds)))

    labels = pseudo_label(system_b, cal_b, ood_unlabeled)
    steps.append(StepLog("pseudo_label", len(labels), float("nan"), float("nan"), 0))

    union_scores = ood_scores.concat(ood_unlabeled) if labels else ood_scores
    union_y = np.concatenate([y_lab, [v for _, v in labels]]) if labels else y_lab
    weights = None
    if labels and pseudo_weight != 1.0:
        weights = np.concatenate([np.ones(len(y_lab)), np.full(len(labels), float(pseudo_weight))])
    cal_c = fit_calibration(union_scores, union_y, weights)
    system_c = _fit_step(method, apply_calibration(cal_c, union_scores), union_y, cfg, weights, clamp, gbdt)
    steps.append(_log("system_c", system_c, len(union_y)))

    return PipelineArtifacts(system_a, cal_b, system_b, labels, cal_c, system_c, method, cfg.seed, tuple(steps))
