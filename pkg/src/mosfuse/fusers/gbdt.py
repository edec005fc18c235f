"""Gradient-boosted regression trees (squared loss, level-wise exact greedy splits).

Stands in for LightGBM: each round fits a depth-limited regression tree to
the current residuals and adds it with a shrinkage factor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError, EmptyInput, InvalidConfig
from .base import FuserModel, TrainMeta, as_matrix, as_vector, normalized_weights, register

_MIN_GAIN = 1e-12


@dataclass(frozen=True)
class GbdtParams:
    n_trees: int = 200
    max_depth: int = 3
    shrinkage: float = 0.1
    min_leaf: int = 5

    def __post_init__(self):
        if self.n_trees < 0 or self.max_depth < 1 or self.min_leaf < 1:
            raise InvalidConfig("need n_trees >= 0, max_depth >= 1, min_leaf >= 1")
        if not (0.0 < self.shrinkage <= 1.0):
            raise InvalidConfig("shrinkage must lie in (0, 1]")


@dataclass
class Tree:
    """Flat node arrays; ``feature == -1`` marks a leaf. Rows with x <= threshold go left."""

    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    value: list[float] = field(default_factory=list)

    def add_leaf(self, value: float) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(float(value))
        return len(self.feature) - 1

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self, node: int = 0) -> int:
        if self.feature[node] == -1:
            return 0
        return 1 + max(self.depth(self.left[node]), self.depth(self.right[node]))

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        feature = np.asarray(self.feature)
        threshold = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        active = feature[node] >= 0
        while np.any(active):
            rows = np.flatnonzero(active)
            nd = node[rows]
            go_left = X[rows, feature[nd]] <= threshold[nd]
            node[rows] = np.where(go_left, left[nd], right[nd])
            active = feature[node] >= 0
        return np.asarray(self.value)[node]

    def to_dict(self) -> dict:
        return {"feature": list(self.feature), "threshold": list(self.threshold), "left": list(self.left),
                "right": list(self.right), "value": list(self.value)}

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        tree = cls([int(v) for v in d["feature"]], [float(v) for v in d["threshold"]],
                   [int(v) for v in d["left"]], [int(v) for v in d["right"]], [float(v) for v in d["value"]])
        n = tree.n_nodes
        if n == 0 or not all(len(getattr(tree, f)) == n for f in ("threshold", "left", "right", "value")):
            raise DataError("tree node arrays are empty or of unequal length")
        return tree


def best_split(X: np.ndarray, r: np.ndarray, w: np.ndarray, min_leaf: int, order=None):
    """Exact greedy search over all features; returns (gain, feature, threshold) or None.

    Gain is the weighted reduction in squared error. The first feature and
    the lowest threshold win ties. ``order`` may supply the per-column
    stable sort order of the rows (shape N x K) to skip sorting.
    """
    n, k = X.shape
    if n < 2 * min_leaf:
        return None
    wr = w * r
    total_w, total_wr = w.sum(), wr.sum()
    if order is None:
        order = np.argsort(X, axis=0, kind="mergesort")
    xs = np.take_along_axis(X, order, axis=0)
    cw = np.cumsum(w[order], axis=0)[:-1]
    cwr = np.cumsum(wr[order], axis=0)[:-1]
    counts = np.arange(1, n)[:, None]
    ok = (xs[1:] > xs[:-1]) & (counts >= min_leaf) & (n - counts >= min_leaf)
    ok &= (cw > 0) & (total_w - cw > 0)
    if not np.any(ok):
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = cwr * cwr / cw + (total_wr - cwr) ** 2 / (total_w - cw) - total_wr * total_wr / total_w
    gain = np.where(ok, gain, -np.inf)
    # column-major argmax: first feature, then lowest threshold
    flat = int(np.argmax(gain.T))
    j, pos = divmod(flat, n - 1)
    if not gain[pos, j] > _MIN_GAIN:
        return None
    return float(gain[pos, j]), j, float(0.5 * (xs[pos, j] + xs[pos + 1, j]))


def _restrict_order(order: np.ndarray, rows: np.ndarray, n_total: int) -> np.ndarray:
    """Per-column sort order of ``rows`` (as positions 0..m-1) taken from a global sort order."""
    position = np.full(n_total, -1)
    position[rows] = np.arange(rows.size)
    local = position[order]
    return local.T[local.T >= 0].reshape(order.shape[1], rows.size).T


def fit_tree(X: np.ndarray, r: np.ndarray, w: np.ndarray, max_depth: int, min_leaf: int,
             order=None) -> Tree:
    """Grow one regression tree level by level; leaves hold the weighted mean residual."""
    n = X.shape[0]
    if order is None:
        order = np.argsort(X, axis=0, kind="mergesort")
    tree = Tree()
    root = tree.add_leaf(np.dot(w, r) / w.sum())
    frontier = [(root, np.arange(n))]
    for _ in range(max_depth):
        next_frontier = []
        for node, rows in frontier:
            if rows.size < 2 * min_leaf:
                continue
            local = order if rows.size == n else _restrict_order(order, rows, n)
            split = best_split(X[rows], r[rows], w[rows], min_leaf, local)
            if split is None:
                continue
            _, j, thr = split
            mask = X[rows, j] <= thr
            lrows, rrows = rows[mask], rows[~mask]
            li = tree.add_leaf(np.dot(w[lrows], r[lrows]) / w[lrows].sum())
            ri = tree.add_leaf(np.dot(w[rrows], r[rrows]) / w[rrows].sum())
            tree.feature[node], tree.threshold[node] = j, thr
            tree.left[node], tree.right[node] = li, ri
            next_frontier += [(li, lrows), (ri, rrows)]
        if not next_frontier:
            break
        frontier = next_frontier
    return tree


def fit_gbdt(data, truth, params: GbdtParams = GbdtParams(), sample_weight=None, clamp: bool = False,
             seed: int = 0) -> FuserModel:
    """Boost from F0 = mean(y) with Fm = Fm-1 + shrinkage * tree_m(residuals).

    ``train_meta.history`` holds the training MSE after each round (index 0
    is the base model). Boosting stops early once a round cannot split the
    root, since every later tree would be the same near-zero leaf.
    """
    X, names = as_matrix(data)
    n = X.shape[0]
    y = as_vector(truth, n)
    if n == 0:
        raise EmptyInput("GBDT needs at least one labeled row")
    if params.min_leaf > n:
        raise DataError(f"min_leaf {params.min_leaf} exceeds the {n} training rows")
    w = normalized_weights(sample_weight, n)
    base = float(np.dot(w, y))
    F = np.full(n, base)
    history = [float(np.dot(w, (y - F) ** 2))]
    trees = []
    order = np.argsort(X, axis=0, kind="mergesort")
    for _ in range(params.n_trees):
        tree = fit_tree(X, y - F, w, params.max_depth, params.min_leaf, order)
        if tree.n_nodes == 1:
            break
        trees.append(tree)
        F = F + params.shrinkage * tree.predict(X)
        history.append(float(np.dot(w, (y - F) ** 2)))
    meta = TrainMeta(loss="l2", epochs=len(trees), train_loss=history[-1], seed=seed,
                     converged=True, history=tuple(history))
    model_params = {"base": base, "shrinkage": params.shrinkage, "max_depth": params.max_depth,
                    "min_leaf": params.min_leaf, "n_trees": params.n_trees, "trees": trees}
    return FuserModel("gbdt", model_params, names, clamp, meta)


@register("gbdt")
def _predict_gbdt(params, X, aux):
    out = np.full(X.shape[0], params["base"])
    for tree in params["trees"]:
        out += params["shrinkage"] * tree.predict(X)
    return out


def staged_predict(model: FuserModel, data):
    """Yield predictions after 0, 1, ..., M boosting rounds."""
    X, _ = as_matrix(data)
    out = np.full(X.shape[0], model.params["base"])
    yield out.copy()
    for tree in model.params["trees"]:
        out += model.params["shrinkage"] * tree.predict(X)
        yield out.copy()
