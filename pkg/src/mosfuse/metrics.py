"""Challenge evaluation metrics: MSE, LCC, SRCC and KTAU at utterance and system level."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import MosDataset, group_by_system
from .errors import ConstantInput, EmptyInput, LengthMismatch, NonFiniteScore, UnlabeledDataset

METRIC_FIELDS = ("utt_mse", "utt_lcc", "utt_srcc", "utt_ktau",
                 "sys_mse", "sys_lcc", "sys_srcc", "sys_ktau")
CSV_HEADER = ",".join(METRIC_FIELDS)


def _pair(x, y, min_len: int) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise LengthMismatch(f"length mismatch: {x.size} vs {y.size}")
    if x.size < min_len:
        raise EmptyInput(f"need at least {min_len} values, got {x.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise NonFiniteScore("metric inputs must be finite")
    return x, y


def mse(pred, truth) -> float:
    p, t = _pair(pred, truth, 1)
    d = p - t
    return float(np.dot(d, d) / d.size)


def pearson(x, y) -> float:
    x, y = _pair(x, y, 2)
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = np.dot(xc, xc)
    syy = np.dot(yc, yc)
    if sxx == 0.0 or syy == 0.0:
        raise ConstantInput("Pearson correlation undefined for a constant input")
    r = np.dot(xc, yc) / math.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))


def average_ranks(x) -> np.ndarray:
    """1-based ranks with tied values sharing the mean of their positions."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    # boundaries of runs of equal values in sorted order
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    ends = np.r_[starts[1:], xs.size]
    run_rank = (starts + ends + 1) / 2.0
    ranks = np.empty(x.size, dtype=np.float64)
    ranks[order] = np.repeat(run_rank, ends - starts)
    return ranks


def spearman(x, y) -> float:
    x, y = _pair(x, y, 2)
    return pearson(average_ranks(x), average_ranks(y))


def _count_tie_pairs(sorted_values: np.ndarray) -> int:
    if sorted_values.size == 0:
        return 0
    starts = np.flatnonzero(np.r_[True, sorted_values[1:] != sorted_values[:-1]])
    runs = np.diff(np.r_[starts, sorted_values.size])
    return int(np.sum(runs * (runs - 1) // 2))


def _merge_count_swaps(a: list) -> int:
    """Sort ``a`` in place (bottom-up merge sort) and return the inversion count."""
    n = len(a)
    swaps = 0
    width = 1
    buf = a[:]
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if a[j] < a[i]:
                    buf[k] = a[j]
                    swaps += mid - i
                    j += 1
                else:
                    buf[k] = a[i]
                    i += 1
                k += 1
            buf[k:hi] = a[i:mid] + a[j:hi]
        a, buf = buf, a
        width *= 2
    return swaps


def kendall_tau_b(x, y) -> float:
    """Tie-corrected Kendall tau (tau-b), O(n log n) via Knight's algorithm."""
    x, y = _pair(x, y, 2)
    n = x.size
    n0 = n * (n - 1) // 2
    order = np.lexsort((y, x))
    xs, ys = x[order], y[order]
    n1 = _count_tie_pairs(xs)
    # pairs tied in both x and y
    both = np.r_[True, (xs[1:] != xs[:-1]) | (ys[1:] != ys[:-1])]
    starts = np.flatnonzero(both)
    runs = np.diff(np.r_[starts, n])
    n3 = int(np.sum(runs * (runs - 1) // 2))
    discordant = _merge_count_swaps(ys.tolist())
    n2 = _count_tie_pairs(np.sort(y))
    if n1 == n0 or n2 == n0:
        raise ConstantInput("Kendall tau undefined for a constant input")
    # concordant - discordant = n0 - n1 - n2 + n3 - 2 * discordant
    numer = n0 - n1 - n2 + n3 - 2 * discordant
    tau = numer / math.sqrt((n0 - n1) * (n0 - n2))
    return float(min(1.0, max(-1.0, tau)))


@dataclass(frozen=True)
class MetricReport:
    """The eight challenge metrics; undefined correlations are NaN and listed in ``undefined``."""

    utt_mse: float
    utt_lcc: float
    utt_srcc: float
    utt_ktau: float
    sys_mse: float
    sys_lcc: float
    sys_srcc: float
    sys_ktau: float
    undefined: frozenset = field(default_factory=frozenset)

    def values(self) -> tuple[float, ...]:
        return tuple(getattr(self, name) for name in METRIC_FIELDS)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(METRIC_FIELDS, self.values()))

    def to_csv(self, header: bool = True) -> str:
        line = ",".join("nan" if name in self.undefined else f"{getattr(self, name):.6f}"
                        for name in METRIC_FIELDS)
        return f"{CSV_HEADER}\n{line}\n" if header else line + "\n"

    def to_table(self, label: str = "Prediction") -> str:
        """Aligned text table: utterance-level block, then system-level block."""
        width = max(len(label), 10)
        head1 = f"{'':<{width}} | {'Utterance level':^31} | {'System level':^31}"
        head2 = f"{'':<{width}} | " + " ".join(f"{c:>7}" for c in ("MSE", "LCC", "SRCC", "KTAU")) \
            + " | " + " ".join(f"{c:>7}" for c in ("MSE", "LCC", "SRCC", "KTAU"))
        cells = ["undef" if name in self.undefined else f"{getattr(self, name):.3f}" for name in METRIC_FIELDS]
        row = f"{label:<{width}} | " + " ".join(f"{c:>7}" for c in cells[:4]) \
            + " | " + " ".join(f"{c:>7}" for c in cells[4:])
        rule = "-" * len(head2)
        return "\n".join([rule, head1, head2, rule, row, rule]) + "\n"


def _guarded(fn, x, y, name: str, undefined: set) -> float:
    try:
        return fn(x, y)
    except ConstantInput:
        undefined.add(name)
        return math.nan


def evaluate(dataset: MosDataset, pred) -> MetricReport:
    if not dataset.labeled:
        raise UnlabeledDataset("evaluation needs a labeled dataset")
    pred = np.asarray(pred, dtype=np.float64)
    truth = dataset.mos
    if pred.shape != truth.shape:
        raise LengthMismatch(f"{pred.size} predictions for {truth.size} utterances")
    undefined: set[str] = set()
    values = {"utt_mse": mse(pred, truth)}
    corr = (("lcc", pearson), ("srcc", spearman), ("ktau", kendall_tau_b))
    for name, fn in corr:
        if truth.size < 2:
            undefined.add(f"utt_{name}")
            values[f"utt_{name}"] = math.nan
        else:
            values[f"utt_{name}"] = _guarded(fn, pred, truth, f"utt_{name}", undefined)
    groups = group_by_system(dataset, pred)
    sys_pred = np.array([g.mean_prediction for g in groups])
    sys_true = np.array([g.mean_true_mos for g in groups])
    values["sys_mse"] = mse(sys_pred, sys_true)
    for name, fn in corr:
        key = f"sys_{name}"
        if len(groups) < 2:
            undefined.add(key)
            values[key] = math.nan
        else:
            values[key] = _guarded(fn, sys_pred, sys_true, key, undefined)
    return MetricReport(**values, undefined=frozenset(undefined))

