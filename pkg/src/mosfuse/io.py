"""File formats: score tables, label lists, feature matrices, aux columns, answers and models.

All text files are UTF-8 with LF line endings. Scores, labels, features and
answers use fixed 6-decimal formatting; model and calibration files are JSON
with shortest round-trip float formatting, so parameters survive bit-exact.
Writers go through a temporary file and an atomic rename.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import MOS_MAX, MOS_MIN, FeatureMatrix, MosDataset, ScoreMatrix, UtteranceRecord, system_from_utterance
from .errors import (
    CorruptModel,
    DuplicateUtterance,
    LengthMismatch,
    NonFiniteValue,
    OutOfRangeMos,
    ParseError,
    RaggedRow,
    VersionMismatch,
)
from .fusers import FuserModel, TrainMeta, Tree
from .semisup import CalibrationSet

FORMAT_VERSION = 1


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def _fmt(value: float) -> str:
    return f"{value:.6f}"


def _read_rows(path) -> tuple[list[str], list[tuple[int, list[str]]]]:
    """Header and (line number, fields) for every non-blank line."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = [(i, row) for i, row in enumerate(csv.reader(fh), start=1) if row and any(f.strip() for f in row)]
    if not rows:
        raise ParseError(1, "empty file (missing header)", path)
    (_, header), body = rows[0], rows[1:]
    return [h.strip() for h in header], body


def _number(text: str, line: int, what: str, path) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(line, f"non-numeric {what} {text!r}", path) from None
    if not math.isfinite(value):
        raise NonFiniteValue(line, f"non-finite {what} {text!r}", path)
    return value


def _check_width(row, width: int, line: int, path):
    if len(row) != width:
        raise RaggedRow(line, f"expected {width} fields, got {len(row)}", path)


# -- scores --------------------------------------------------------------------------


def read_scores(path) -> ScoreMatrix:
    header, body = _read_rows(path)
    if len(header) < 3 or header[0] != "utterance_id" or header[1] != "system_id":
        raise ParseError(1, "scores header must be utterance_id,system_id,<name_1>,...", path)
    names = header[2:]
    ids, sys_ids, values = [], [], []
    seen = set()
    for line, row in body:
        _check_width(row, len(header), line, path)
        uid = row[0].strip()
        if uid in seen:
            raise DuplicateUtterance(uid, line)
        seen.add(uid)
        ids.append(uid)
        sys_ids.append(row[1].strip() or system_from_utterance(uid))
        values.append([_number(f, line, "score", path) for f in row[2:]])
    matrix = np.array(values, dtype=np.float64).reshape(len(ids), len(names))
    return ScoreMatrix(ids, names, matrix, sys_ids)


def write_scores(path, scores: ScoreMatrix) -> None:
    sys_ids = scores.system_ids or tuple(system_from_utterance(u) for u in scores.utterance_ids)
    lines = [",".join(("utterance_id", "system_id") + scores.subsystem_names)]
    for uid, sid, row in zip(scores.utterance_ids, sys_ids, scores.values):
        lines.append(",".join([uid, sid] + [_fmt(v) for v in row]))
    atomic_write_text(path, "\n".join(lines) + "\n")


# -- labels --------------------------------------------------------------------------


def read_labels(path) -> MosDataset:
    """Labels with header ``utterance_id[,system_id][,mos]``.

    Without a system column the system is the id prefix before the first
    dash; without a mos column (or with blank cells) the dataset is unlabeled.
    """
    header, body = _read_rows(path)
    if not header or header[0] != "utterance_id" or any(h not in ("system_id", "mos") for h in header[1:]) \
            or len(set(header)) != len(header):
        raise ParseError(1, "labels header must be utterance_id[,system_id][,mos]", path)
    col = {name: i for i, name in enumerate(header)}
    records = []
    seen = set()
    for line, row in body:
        _check_width(row, len(header), line, path)
        uid = row[0].strip()
        if not uid:
            raise ParseError(line, "empty utterance id", path)
        if uid in seen:
            raise DuplicateUtterance(uid, line)
        seen.add(uid)
        sid = row[col["system_id"]].strip() if "system_id" in col else ""
        mos = None
        if "mos" in col and row[col["mos"]].strip():
            mos = _number(row[col["mos"]], line, "mos", path)
            if not (MOS_MIN <= mos <= MOS_MAX):
                raise OutOfRangeMos(line, f"mos {mos} outside [1, 5]", path)
        records.append(UtteranceRecord(uid, sid or system_from_utterance(uid), mos))
    return MosDataset(tuple(records))


def write_labels(path, dataset: MosDataset) -> None:
    with_mos = any(r.mos is not None for r in dataset)
    lines = ["utterance_id,system_id,mos" if with_mos else "utterance_id,system_id"]
    for r in dataset:
        fields = [r.utterance_id, r.system_id]
        if with_mos:
            fields.append("" if r.mos is None else _fmt(r.mos))
        lines.append(",".join(fields))
    atomic_write_text(path, "\n".join(lines) + "\n")


# -- features and aux ----------------------------------------------------------------


def read_features(path) -> FeatureMatrix:
    header, body = _read_rows(path)
    dim = len(header) - 1
    if dim < 1 or header[0] != "utterance_id" or header[1:] != [f"f_{i}" for i in range(dim)]:
        raise ParseError(1, "features header must be utterance_id,f_0,...,f_{D-1}", path)
    ids, values = [], []
    seen = set()
    for line, row in body:
        _check_width(row, len(header), line, path)
        uid = row[0].strip()
        if uid in seen:
            raise DuplicateUtterance(uid, line)
        seen.add(uid)
        ids.append(uid)
        values.append([_number(f, line, "feature", path) for f in row[1:]])
    return FeatureMatrix(ids, np.array(values, dtype=np.float64).reshape(len(ids), dim))


def write_features(path, features: FeatureMatrix) -> None:
    lines = [",".join(("utterance_id",) + features.column_names)]
    for uid, row in zip(features.utterance_ids, features.values):
        lines.append(",".join([uid] + [_fmt(v) for v in row]))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_aux(path) -> list[tuple[str, float]]:
    header, body = _read_rows(path)
    if header != ["utterance_id", "aux"]:
        raise ParseError(1, "aux header must be utterance_id,aux", path)
    out = []
    seen = set()
    for line, row in body:
        _check_width(row, 2, line, path)
        uid = row[0].strip()
        if uid in seen:
            raise DuplicateUtterance(uid, line)
        seen.add(uid)
        out.append((uid, _number(row[1], line, "aux value", path)))
    return out


def write_aux(path, pairs: Iterable[tuple[str, float]]) -> None:
    lines = ["utterance_id,aux"] + [f"{uid},{_fmt(v)}" for uid, v in pairs]
    atomic_write_text(path, "\n".join(lines) + "\n")


# -- answers -------------------------------------------------------------------------


def write_answer(path, ids: Sequence[str], preds) -> None:
    """Headerless ``utterance_id,score`` lines in input order."""
    preds = np.asarray(preds, dtype=np.float64).ravel()
    if len(ids) != preds.size:
        raise LengthMismatch(f"{len(ids)} ids for {preds.size} predictions")
    atomic_write_text(path, "".join(f"{uid},{_fmt(p)}\n" for uid, p in zip(ids, preds)))


def read_answer(path) -> list[tuple[str, float]]:
    out = []
    seen = set()
    with open(path, encoding="utf-8", newline="") as fh:
        for line, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            _check_width(row, 2, line, path)
            uid = row[0].strip()
            if uid in seen:
                raise DuplicateUtterance(uid, line)
            seen.add(uid)
            out.append((uid, _number(row[1], line, "score", path)))
    return out


# -- models --------------------------------------------------------------------------


def _encode(value):
    if isinstance(value, np.ndarray):
        return {"__array__": [float(v) for v in value.ravel()], "shape": list(value.shape)}
    if isinstance(value, Tree):
        return value.to_dict()
    if isinstance(value, (list, tuple)):
        return [_encode(v) for v in value]
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, (np.integer, int)) and not isinstance(value, bool):
        return int(value)
    return value


def _decode_array(value, field: str) -> np.ndarray:
    try:
        arr = np.array([float(v) for v in value["__array__"]], dtype=np.float64).reshape(value["shape"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptModel(field, str(exc)) from None
    if not np.all(np.isfinite(arr)):
        raise CorruptModel(field, "non-finite value")
    arr.setflags(write=False)
    return arr


def _decode_params(method: str, params: dict) -> dict:
    out = {}
    for key, value in params.items():
        if isinstance(value, dict) and "__array__" in value:
            out[key] = _decode_array(value, f"params.{key}")
        elif method == "gbdt" and key == "trees":
            try:
                out[key] = [Tree.from_dict(t) for t in value]
            except (KeyError, TypeError, ValueError) as exc:
                raise CorruptModel("params.trees", str(exc)) from None
        elif isinstance(value, (int, float)) and not isinstance(value, bool):
            if not math.isfinite(value):
                raise CorruptModel(f"params.{key}", "non-finite value")
            out[key] = value
        else:
            raise CorruptModel(f"params.{key}", f"unexpected value of type {type(value).__name__}")
    return out


_REQUIRED = {
    "voting": (),
    "weighted_voting": ("weights",),
    "linear_regression": ("coef", "intercept"),
    "feature_regression": ("coef", "intercept"),
    "proposed_fuser": ("weights", "scale", "offset", "center"),
    "mlp": ("W1", "b1", "W2", "b2", "center"),
    "gbdt": ("base", "shrinkage", "trees"),
    "aux_fuser": ("u1", "d1", "u2", "d2", "v1", "v2", "c0", "center", "aux_center"),
}


def model_to_dict(model: FuserModel) -> dict:
    meta = model.train_meta
    return {
        "format_version": FORMAT_VERSION,
        "method": model.method,
        "subsystem_names": list(model.subsystem_names),
        "clamp": bool(model.clamp),
        "params": {k: _encode(v) for k, v in model.params.items()},
        "train_meta": {"loss": meta.loss, "epochs": int(meta.epochs), "train_loss": _json_float(meta.train_loss),
                       "val_loss": _json_float(meta.val_loss), "seed": int(meta.seed),
                       "converged": bool(meta.converged), "history": [float(v) for v in meta.history]},
    }


def _json_float(v: float):
    return None if v is None or not math.isfinite(v) else float(v)


def model_from_dict(doc: dict) -> FuserModel:
    if not isinstance(doc, dict):
        raise CorruptModel("<root>", "model document must be an object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"model format_version {version!r} unsupported (expected {FORMAT_VERSION})")
    for key in ("method", "subsystem_names", "clamp", "params", "train_meta"):
        if key not in doc:
            raise CorruptModel(key, "missing")
    method = doc["method"]
    if method not in _REQUIRED:
        raise CorruptModel("method", f"unknown method {method!r}")
    names = doc["subsystem_names"]
    if not isinstance(names, list) or not names or not all(isinstance(n, str) and n for n in names):
        raise CorruptModel("subsystem_names", "must be a nonempty list of strings")
    if not isinstance(doc["params"], dict):
        raise CorruptModel("params", "must be an object")
    params = _decode_params(method, doc["params"])
    for key in _REQUIRED[method]:
        if key not in params:
            raise CorruptModel(f"params.{key}", "missing")
    m = doc["train_meta"]
    try:
        meta = TrainMeta(loss=str(m["loss"]), epochs=int(m["epochs"]),
                         train_loss=math.nan if m["train_loss"] is None else float(m["train_loss"]),
                         val_loss=math.nan if m["val_loss"] is None else float(m["val_loss"]),
                         seed=int(m["seed"]), converged=bool(m["converged"]),
                         history=tuple(float(v) for v in m.get("history", [])))
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptModel("train_meta", str(exc)) from None
    return FuserModel(method, params, tuple(names), bool(doc["clamp"]), meta)


def dumps_json(doc) -> str:
    return json.dumps(doc, indent=1, sort_keys=True, allow_nan=False) + "\n"


def save_model(model: FuserModel, path) -> None:
    atomic_write_text(path, dumps_json(model_to_dict(model)))


def load_model(path) -> FuserModel:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CorruptModel("<root>", f"invalid JSON: {exc}") from None
    return model_from_dict(doc)


def save_calibration(cal: CalibrationSet, path) -> None:
    doc = {"format_version": FORMAT_VERSION, "subsystem_names": list(cal.subsystem_names),
           "alpha": [float(a) for a in cal.alpha], "beta": [float(b) for b in cal.beta]}
    atomic_write_text(path, dumps_json(doc))


def load_calibration(path) -> CalibrationSet:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CorruptModel("<root>", f"invalid JSON: {exc}") from None
    if doc.get("format_version") != FORMAT_VERSION:
        raise VersionMismatch(f"calibration format_version {doc.get('format_version')!r} unsupported")
    try:
        return CalibrationSet(doc["subsystem_names"], doc["alpha"], doc["beta"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptModel("calibration", str(exc)) from None


def write_json(path, doc) -> None:
    atomic_write_text(path, dumps_json(doc))
