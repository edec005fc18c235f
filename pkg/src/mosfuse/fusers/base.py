"""Fitted-model container, training configuration and the shared predict entry point."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Optional, Sequence, Union

import numpy as np

from ..core import MOS_MAX, MOS_MIN, FeatureMatrix, ScoreMatrix
from ..errors import ColumnMismatch, DataError, EmptyCandidates, InvalidConfig, LengthMismatch, MissingAux

METHODS = (
    "voting",
    "weighted_voting",
    "linear_regression",
    "proposed_fuser",
    "mlp",
    "gbdt",
    "feature_regression",
    "aux_fuser",
)
ALIASES = {"ols": "linear_regression", "lightgbm": "gbdt", "nn": "mlp", "fuser": "proposed_fuser"}

Table = Union[ScoreMatrix, FeatureMatrix]


def canonical_method(name: str) -> str:
    name = ALIASES.get(name, name)
    if name not in METHODS:
        raise InvalidConfig(f"unknown fusion method {name!r}; choose from {', '.join(METHODS)}")
    return name


@dataclass(frozen=True)
class TrainConfig:
    """Full-batch gradient-descent settings shared by the gradient-trained fusers.

    ``validation_fraction`` is only used when no explicit validation set is
    passed to a fit; the last rows are held out. A fraction of 0 monitors
    the training loss itself. ``max_epochs=0`` returns the initialisation.
    """

    loss: str = "l1"
    learning_rate: float = 1e-3
    max_epochs: int = 10000
    patience: int = 20
    seed: int = 0
    validation_fraction: float = 0.2
    min_delta: float = 0.0

    def __post_init__(self):
        loss = self.loss.lower()
        if loss not in ("l1", "l2"):
            raise InvalidConfig(f"loss must be 'l1' or 'l2', got {self.loss!r}")
        object.__setattr__(self, "loss", loss)
        if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            raise InvalidConfig("learning_rate must be positive")
        if self.max_epochs < 0 or self.patience < 1:
            raise InvalidConfig("max_epochs must be >= 0 and patience >= 1")
        if self.max_epochs > 0 and self.patience > self.max_epochs:
            raise InvalidConfig("patience must not exceed max_epochs")
        if self.seed < 0:
            raise InvalidConfig("seed must be unsigned")
        if not (0.0 <= self.validation_fraction < 1.0):
            raise InvalidConfig("validation_fraction must lie in [0, 1)")
        if self.min_delta < 0:
            raise InvalidConfig("min_delta must be >= 0")

    def with_(self, **changes) -> "TrainConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class TrainMeta:
    loss: str = "l2"
    epochs: int = 0
    train_loss: float = math.nan
    val_loss: float = math.nan
    seed: int = 0
    converged: bool = True
    history: tuple[float, ...] = ()


@dataclass(frozen=True, eq=False)
class FuserModel:
    method: str
    params: dict[str, Any]
    subsystem_names: tuple[str, ...]
    clamp: bool = False
    train_meta: TrainMeta = field(default_factory=TrainMeta)

    def __post_init__(self):
        object.__setattr__(self, "method", canonical_method(self.method))
        object.__setattr__(self, "subsystem_names", tuple(self.subsystem_names))

    @property
    def n_inputs(self) -> int:
        return len(self.subsystem_names)

    def with_clamp(self, clamp: bool) -> "FuserModel":
        return replace(self, clamp=clamp)


# method -> fn(params, X, aux) -> raw predictions; filled by the method modules
PREDICTORS: dict[str, Callable[[dict, np.ndarray, Optional[np.ndarray]], np.ndarray]] = {}


def register(method: str):
    def deco(fn):
        PREDICTORS[method] = fn
        return fn
    return deco


def as_matrix(data, names: Optional[Sequence[str]] = None) -> tuple[np.ndarray, tuple[str, ...]]:
    if isinstance(data, (ScoreMatrix, FeatureMatrix)):
        return np.asarray(data.values), data.column_names
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise DataError(f"expected a 2-d matrix, got shape {arr.shape}")
    if names is None:
        names = tuple(f"s{j}" for j in range(arr.shape[1]))
    return arr, tuple(names)


def as_vector(values, n: int, what: str = "truth") -> np.ndarray:
    vec = np.asarray(values, dtype=np.float64).ravel()
    if vec.size != n:
        raise LengthMismatch(f"{what} has {vec.size} entries for {n} rows")
    if not np.all(np.isfinite(vec)):
        raise DataError(f"{what} contains non-finite values")
    return vec


def normalized_weights(sample_weight, n: int) -> np.ndarray:
    """Sample weights scaled to sum to one."""
    if sample_weight is None:
        return np.full(n, 1.0 / n) if n else np.empty(0)
    w = as_vector(sample_weight, n, "sample_weight")
    if np.any(w < 0) or not w.sum() > 0:
        raise DataError("sample weights must be non-negative with a positive sum")
    return w / w.sum()


def predict(model: FuserModel, data, aux=None) -> np.ndarray:
    """One prediction per row, clamped to [1, 5] iff ``model.clamp``."""
    X, names = as_matrix(data, model.subsystem_names if not isinstance(data, (ScoreMatrix, FeatureMatrix)) else None)
    if X.shape[1] != model.n_inputs:
        raise ColumnMismatch(f"model expects {model.n_inputs} columns, got {X.shape[1]}")
    if names != model.subsystem_names:
        raise ColumnMismatch(f"column names {list(names)} differ from fitted {list(model.subsystem_names)}")
    if model.method == "aux_fuser":
        if aux is None:
            raise MissingAux("the aux fuser needs an auxiliary column at prediction time")
        aux = as_vector(aux, X.shape[0], "aux")
    elif aux is not None:
        raise DataError(f"method {model.method!r} takes no auxiliary input")
    out = PREDICTORS[model.method](model.params, X, aux)
    if model.clamp:
        out = np.clip(out, MOS_MIN, MOS_MAX)
    return out


def select_best(candidates: Sequence[tuple[FuserModel, float]]) -> FuserModel:
    """Model with the lowest validation loss; the earliest wins ties."""
    if not candidates:
        raise EmptyCandidates("no candidate models to choose from")
    best_model, best_loss = None, math.inf
    for model, loss in candidates:
        if not math.isfinite(loss):
            raise DataError(f"non-finite validation loss {loss}")
        if best_model is None or loss < best_loss:
            best_model, best_loss = model, loss
    return best_model
