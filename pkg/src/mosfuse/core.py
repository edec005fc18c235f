"""Domain types: utterance datasets, aligned score/feature matrices, the MOS grid."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence, TypeVar

import numpy as np

from .errors import (
    DataError,
    DuplicateUtterance,
    ExtraUtterance,
    LengthMismatch,
    MissingUtterance,
    NonFiniteScore,
    UnlabeledDataset,
)

MOS_MIN = 1.0
MOS_MAX = 5.0


def system_from_utterance(utterance_id: str) -> str:
    """Challenge ids look like ``sysID-uttID``; the system is the part before the first dash."""
    return utterance_id.split("-", 1)[0]


@dataclass(frozen=True)
class UtteranceRecord:
    utterance_id: str
    system_id: str
    mos: Optional[float] = None

    def __post_init__(self):
        if not self.utterance_id:
            raise DataError("utterance_id must be a nonempty string")
        if not self.system_id:
            raise DataError(f"system_id of {self.utterance_id!r} must be nonempty")
        if self.mos is not None:
            mos = float(self.mos)
            if not (MOS_MIN <= mos <= MOS_MAX):
                raise DataError(f"mos {mos} of {self.utterance_id!r} outside [1, 5]")
            object.__setattr__(self, "mos", mos)


@dataclass(frozen=True)
class MosDataset:
    """Utterance records in file order."""

    records: tuple[UtteranceRecord, ...]

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        seen = set()
        for rec in self.records:
            if rec.utterance_id in seen:
                raise DuplicateUtterance(rec.utterance_id)
            seen.add(rec.utterance_id)

    @classmethod
    def from_arrays(cls, utterance_ids, system_ids, mos=None) -> "MosDataset":
        if len(utterance_ids) != len(system_ids) or (mos is not None and len(mos) != len(utterance_ids)):
            raise LengthMismatch("utterance_ids, system_ids and mos must have equal length")
        if mos is None:
            mos = [None] * len(utterance_ids)
        return cls(tuple(UtteranceRecord(u, s, None if m is None else float(m))
                         for u, s, m in zip(utterance_ids, system_ids, mos)))

    @property
    def labeled(self) -> bool:
        return all(r.mos is not None for r in self.records)

    @property
    def utterance_ids(self) -> list[str]:
        return [r.utterance_id for r in self.records]

    @property
    def system_ids(self) -> list[str]:
        return [r.system_id for r in self.records]

    @property
    def mos(self) -> np.ndarray:
        if not self.labeled:
            raise UnlabeledDataset("dataset has records without a MOS label")
        return np.array([r.mos for r in self.records], dtype=np.float64)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[UtteranceRecord]:
        return iter(self.records)

    def subset(self, indices: Sequence[int]) -> "MosDataset":
        return MosDataset(tuple(self.records[i] for i in indices))

    def concat(self, other: "MosDataset") -> "MosDataset":
        return MosDataset(self.records + other.records)


class _RowTable:
    """Shared row bookkeeping for score and feature matrices."""

    utterance_ids: tuple[str, ...]
    values: np.ndarray

    def _check_rows(self):
        if len(self.utterance_ids) != self.values.shape[0]:
            raise LengthMismatch(
                f"{len(self.utterance_ids)} utterance ids for {self.values.shape[0]} rows")
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteScore("matrix contains non-finite values")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    def __len__(self) -> int:
        return self.values.shape[0]

    def row_index(self) -> dict[str, int]:
        index = {}
        for i, u in enumerate(self.utterance_ids):
            if u in index:
                raise DuplicateUtterance(u)
            index[u] = i
        return index


@dataclass(frozen=True, eq=False)
class ScoreMatrix(_RowTable):
    """N x K per-subsystem MOS predictions.

    ``system_ids`` is carried along when the table was read from a scores
    file, so a dataset can be rebuilt without a separate labels file.
    """

    utterance_ids: tuple[str, ...]
    subsystem_names: tuple[str, ...]
    values: np.ndarray
    system_ids: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "utterance_ids", tuple(self.utterance_ids))
        object.__setattr__(self, "subsystem_names", tuple(self.subsystem_names))
        values = np.array(self.values, dtype=np.float64)
        if values.size == 0:
            values = values.reshape(len(self.utterance_ids), len(self.subsystem_names))
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.system_ids is not None:
            object.__setattr__(self, "system_ids", tuple(self.system_ids))
            if len(self.system_ids) != len(self.utterance_ids):
                raise LengthMismatch("system_ids and utterance_ids differ in length")
        if not self.subsystem_names or any(not n for n in self.subsystem_names):
            raise DataError("need at least one nonempty subsystem name")
        if len(set(self.subsystem_names)) != len(self.subsystem_names):
            raise DataError(f"duplicate subsystem names in {self.subsystem_names}")
        if values.ndim != 2 or values.shape[1] != len(self.subsystem_names):
            raise LengthMismatch(
                f"values shape {values.shape} does not match {len(self.subsystem_names)} subsystems")
        self._check_rows()

    @property
    def column_names(self) -> tuple[str, ...]:
        return self.subsystem_names

    @property
    def k(self) -> int:
        return len(self.subsystem_names)

    def take(self, indices: Sequence[int]) -> "ScoreMatrix":
        idx = list(indices)
        return ScoreMatrix(
            tuple(self.utterance_ids[i] for i in idx),
            self.subsystem_names,
            self.values[idx] if idx else np.empty((0, self.k)),
            None if self.system_ids is None else tuple(self.system_ids[i] for i in idx),
        )

    def with_values(self, values) -> "ScoreMatrix":
        return ScoreMatrix(self.utterance_ids, self.subsystem_names, values, self.system_ids)

    def concat(self, other: "ScoreMatrix") -> "ScoreMatrix":
        if other.subsystem_names != self.subsystem_names:
            raise DataError("cannot concatenate score matrices with different subsystems")
        sys_ids = None
        if self.system_ids is not None and other.system_ids is not None:
            sys_ids = self.system_ids + other.system_ids
        return ScoreMatrix(self.utterance_ids + other.utterance_ids, self.subsystem_names,
                           np.vstack([self.values, other.values]), sys_ids)

    def to_dataset(self) -> MosDataset:
        """Unlabeled dataset carrying this table's ids, in row order."""
        sys_ids = self.system_ids or tuple(system_from_utterance(u) for u in self.utterance_ids)
        return MosDataset.from_arrays(self.utterance_ids, sys_ids)


@dataclass(frozen=True, eq=False)
class FeatureMatrix(_RowTable):
    """N x D concatenated SSL embedding features."""

    utterance_ids: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "utterance_ids", tuple(self.utterance_ids))
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] < 1:
            raise DataError(f"feature matrix needs shape (N, D>=1), got {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        self._check_rows()

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(f"f_{i}" for i in range(self.dim))

    def take(self, indices: Sequence[int]) -> "FeatureMatrix":
        idx = list(indices)
        return FeatureMatrix(tuple(self.utterance_ids[i] for i in idx),
                             self.values[idx] if idx else np.empty((0, self.dim)))


Table = TypeVar("Table", ScoreMatrix, FeatureMatrix)


def align(dataset: MosDataset, table: Table) -> tuple[MosDataset, Table]:
    """Permute the rows of ``table`` into dataset order.

    Raises MissingUtterance / ExtraUtterance listing every offending id.
    """
    index = table.row_index()
    missing = [u for u in dataset.utterance_ids if u not in index]
    if missing:
        raise MissingUtterance(missing)
    if len(index) != len(dataset):
        wanted = set(dataset.utterance_ids)
        raise ExtraUtterance([u for u in table.utterance_ids if u not in wanted])
    order = [index[u] for u in dataset.utterance_ids]
    if order == list(range(len(order))):
        return dataset, table
    return dataset, table.take(order)


@dataclass(frozen=True)
class ScoreGrid:
    lo: float = MOS_MIN
    hi: float = MOS_MAX
    step: float = 0.125

    def __post_init__(self):
        if not (self.hi > self.lo and self.step > 0):
            raise DataError("score grid needs hi > lo and step > 0")
        n = (self.hi - self.lo) / self.step
        if abs(n - round(n)) > 1e-9:
            raise DataError("grid step must divide hi - lo")

    @property
    def size(self) -> int:
        return int(round((self.hi - self.lo) / self.step)) + 1

    def points(self) -> np.ndarray:
        return self.lo + self.step * np.arange(self.size)


DEFAULT_GRID = ScoreGrid()


def quantize_to_grid(score: float, grid: ScoreGrid = DEFAULT_GRID) -> float:
    """Nearest grid point, ties rounded toward ``hi``, clamped to ``[lo, hi]``."""
    score = float(score)
    if not math.isfinite(score):
        raise NonFiniteScore(f"cannot quantize {score}")
    idx = math.floor((score - grid.lo) / grid.step + 0.5)
    idx = min(max(idx, 0), grid.size - 1)
    return grid.lo + idx * grid.step


@dataclass(frozen=True)
class SystemMean:
    system_id: str
    mean_prediction: float
    mean_true_mos: float

    def __iter__(self):
        return iter((self.system_id, self.mean_prediction, self.mean_true_mos))


def group_by_system(dataset: MosDataset, predictions) -> list[SystemMean]:
    """Per-system mean prediction and mean true MOS, sorted by system id."""
    if not dataset.labeled:
        raise UnlabeledDataset("system-level grouping needs a labeled dataset")
    preds = np.asarray(predictions, dtype=np.float64)
    if preds.shape != (len(dataset),):
        raise LengthMismatch(f"{preds.shape[0] if preds.ndim else 0} predictions for {len(dataset)} utterances")
    members: dict[str, list[int]] = {}
    for i, rec in enumerate(dataset.records):
        members.setdefault(rec.system_id, []).append(i)
    truth = dataset.mos
    out = []
    for sys_id in sorted(members):
        idx = members[sys_id]
        out.append(SystemMean(sys_id, math.fsum(preds[idx]) / len(idx), math.fsum(truth[idx]) / len(idx)))
    return out
