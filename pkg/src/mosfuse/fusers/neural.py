"""Gradient-trained fusers: the two-layer model fuser, a sigmoid MLP and the aux-augmented fuser.

All three are trained by full-batch gradient descent on L1 or L2 loss with
early stopping on a validation loss. Inputs are shifted by a scalar centre
(the mean training score) before entering the network; the centre is a
fixed parameter of the fitted model, so the function class is unchanged
while the intercept stops fighting the weights for step size.

Each model exposes ``*_loss_grad(theta, ...)`` over a flat parameter vector
so the analytic gradients can be checked against finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..errors import DataError, EmptyInput, InvalidConfig, NonFiniteGradient
from ..rng import XorShift64Star
from .base import FuserModel, TrainConfig, TrainMeta, as_matrix, as_vector, normalized_weights, register

MLP_HIDDEN = 16


def loss_and_dpred(pred: np.ndarray, y: np.ndarray, sw: np.ndarray, loss: str) -> tuple[float, np.ndarray]:
    """Weighted mean loss and its derivative with respect to each prediction."""
    r = pred - y
    if loss == "l2":
        return float(np.dot(sw, r * r)), 2.0 * sw * r
    return float(np.dot(sw, np.abs(r))), sw * np.sign(r)


# -- two-layer model fuser: y = a * (w . (x - c)) + b ---------------------------


def proposed_unpack(theta: np.ndarray, k: int):
    return theta[:k], theta[k], theta[k + 1]


def proposed_forward(theta, Z):
    w, a, b = proposed_unpack(theta, Z.shape[1])
    return a * (Z @ w) + b


def proposed_loss_grad(theta, Z, y, sw, loss="l2", aux=None):
    k = Z.shape[1]
    w, a, b = proposed_unpack(theta, k)
    p = Z @ w
    value, g = loss_and_dpred(a * p + b, y, sw, loss)
    grad = np.empty_like(theta)
    grad[:k] = a * (Z.T @ g)
    grad[k] = g @ p
    grad[k + 1] = g.sum()
    return value, grad


@register("proposed_fuser")
def _predict_proposed(params, X, aux):
    Z = X - params["center"]
    return params["scale"] * (Z @ params["weights"]) + params["offset"]


# -- sigmoid MLP: y = W2 . sigmoid(W1 (x - c) + b1) + b2 ------------------------


def _sigmoid(t):
    return 0.5 * (1.0 + np.tanh(0.5 * t))


def mlp_unpack(theta, k: int, hidden: int = MLP_HIDDEN):
    i = hidden * k
    W1 = theta[:i].reshape(hidden, k)
    b1 = theta[i:i + hidden]
    W2 = theta[i + hidden:i + 2 * hidden]
    b2 = theta[i + 2 * hidden]
    return W1, b1, W2, b2


def mlp_forward(theta, Z, hidden: int = MLP_HIDDEN):
    W1, b1, W2, b2 = mlp_unpack(theta, Z.shape[1], hidden)
    return _sigmoid(Z @ W1.T + b1) @ W2 + b2


def mlp_loss_grad(theta, Z, y, sw, loss="l2", aux=None, hidden: int = MLP_HIDDEN):
    k = Z.shape[1]
    W1, b1, W2, b2 = mlp_unpack(theta, k, hidden)
    h = _sigmoid(Z @ W1.T + b1)
    value, g = loss_and_dpred(h @ W2 + b2, y, sw, loss)
    dpre = np.outer(g, W2) * h * (1.0 - h)
    return value, np.concatenate([(dpre.T @ Z).ravel(), dpre.sum(axis=0), h.T @ g, [g.sum()]])


@register("mlp")
def _predict_mlp(params, X, aux):
    h = _sigmoid((X - params["center"]) @ params["W1"].T + params["b1"])
    return h @ params["W2"] + params["b2"]


# -- aux fuser: y = v1 (u1 . (x - c) + d1) + v2 (u2 (aux - m) + d2) + c0 ----------

AUX_FIELDS = ("d1", "u2", "d2", "v1", "v2", "c0")


def aux_unpack(theta, k: int):
    return (theta[:k],) + tuple(theta[k:k + 6])


def aux_forward(theta, Z, A):
    u1, d1, u2, d2, v1, v2, c0 = aux_unpack(theta, Z.shape[1])
    return v1 * (Z @ u1 + d1) + v2 * (u2 * A + d2) + c0


def aux_loss_grad(theta, Z, y, sw, loss="l2", aux=None):
    k = Z.shape[1]
    u1, d1, u2, d2, v1, v2, c0 = aux_unpack(theta, k)
    h1 = Z @ u1 + d1
    h2 = u2 * aux + d2
    value, g = loss_and_dpred(v1 * h1 + v2 * h2 + c0, y, sw, loss)
    gs = g.sum()
    grad = np.empty_like(theta)
    grad[:k] = v1 * (Z.T @ g)
    grad[k] = v1 * gs
    grad[k + 1] = v2 * (g @ aux)
    grad[k + 2] = v2 * gs
    grad[k + 3] = g @ h1
    grad[k + 4] = g @ h2
    grad[k + 5] = gs
    return value, grad


@register("aux_fuser")
def _predict_aux(params, X, aux):
    Z = X - params["center"]
    if params.get("aux_log1p", 0):
        aux = transform_aux(aux, "log1p")
    A = aux - params["aux_center"]
    h1 = Z @ params["u1"] + params["d1"]
    h2 = params["u2"] * A + params["d2"]
    return params["v1"] * h1 + params["v2"] * h2 + params["c0"]


# -- training loop ------------------------------------------------------------------


@dataclass
class _Split:
    X: np.ndarray
    y: np.ndarray
    sw: np.ndarray
    aux: Optional[np.ndarray]
    Xv: np.ndarray
    yv: np.ndarray
    swv: np.ndarray
    auxv: Optional[np.ndarray]


def _split(X, y, sample_weight, aux, cfg: TrainConfig, val) -> _Split:
    n = X.shape[0]
    if n == 0:
        raise EmptyInput("cannot train on zero rows")
    w = np.ones(n) if sample_weight is None else as_vector(sample_weight, n, "sample_weight")
    if val is not None:
        Xv, _ = as_matrix(val[0])
        if Xv.shape[1] != X.shape[1]:
            raise DataError("validation matrix has a different column count")
        yv = as_vector(val[1], Xv.shape[0], "validation truth")
        auxv = None
        if aux is not None:
            if len(val) < 3:
                raise DataError("validation set needs an aux column for the aux fuser")
            auxv = as_vector(val[2], Xv.shape[0], "validation aux")
        return _Split(X, y, normalized_weights(w, n), aux, Xv, yv,
                      normalized_weights(None, yv.size), auxv)
    n_val = int(round(n * cfg.validation_fraction))
    if n_val == 0 or n_val >= n:
        sw = normalized_weights(w, n)
        return _Split(X, y, sw, aux, X, y, sw, aux)
    cut = n - n_val
    tail = None if aux is None else aux[cut:]
    head = None if aux is None else aux[:cut]
    return _Split(X[:cut], y[:cut], normalized_weights(w[:cut], cut), head,
                  X[cut:], y[cut:], normalized_weights(w[cut:], n_val), tail)


def gradient_descent(loss_grad: Callable, theta0: np.ndarray, data: _Split, cfg: TrainConfig,
                     frozen: Optional[np.ndarray] = None) -> tuple[np.ndarray, TrainMeta]:
    """Full-batch descent keeping the iterate with the lowest validation loss.

    Stops once the validation loss has not improved by more than
    ``cfg.min_delta`` for ``cfg.patience`` consecutive epochs.
    """
    def val_loss(theta):
        value, _ = loss_grad(theta, data.Xv, data.yv, data.swv, cfg.loss, data.auxv)
        return value

    theta = theta0.copy()
    best, best_val = theta.copy(), val_loss(theta)
    stale = 0
    epochs = 0
    stopped = cfg.max_epochs == 0
    for epochs in range(1, cfg.max_epochs + 1):
        _, grad = loss_grad(theta, data.X, data.y, data.sw, cfg.loss, data.aux)
        if not np.all(np.isfinite(grad)):
            raise NonFiniteGradient(f"non-finite gradient at epoch {epochs}")
        if frozen is not None:
            grad[frozen] = 0.0
        theta = theta - cfg.learning_rate * grad
        current = val_loss(theta)
        if not math.isfinite(current):
            raise NonFiniteGradient(f"validation loss diverged at epoch {epochs}")
        if current < best_val - cfg.min_delta:
            best, best_val, stale = theta.copy(), current, 0
        else:
            stale += 1
            if stale >= cfg.patience:
                stopped = True
                break
    train_loss, _ = loss_grad(best, data.X, data.y, data.sw, cfg.loss, data.aux)
    meta = TrainMeta(loss=cfg.loss, epochs=epochs, train_loss=train_loss, val_loss=best_val,
                     seed=cfg.seed, converged=stopped)
    return best, meta


def _score_center(X: np.ndarray) -> float:
    return float(X.mean()) if X.size else 0.0


def _frozen(params: dict) -> dict:
    for v in params.values():
        if isinstance(v, np.ndarray):
            v.setflags(write=False)
    return params


def fit_proposed_fuser(scores, truth, cfg: TrainConfig = TrainConfig(), val=None, sample_weight=None,
                       clamp: bool = False) -> FuserModel:
    """Fully connected weighting layer without bias followed by a scalar affine map.

    Initialised at w = 1/K, a = 1 and offset = centre, i.e. exactly voting.
    """
    X, names = as_matrix(scores)
    n, k = X.shape
    y = as_vector(truth, n)
    data = _split(X, y, sample_weight, None, cfg, val)
    center = _score_center(data.X)
    data.X, data.Xv = data.X - center, data.Xv - center
    theta0 = np.concatenate([np.full(k, 1.0 / k), [1.0, center]])
    theta, meta = gradient_descent(proposed_loss_grad, theta0, data, cfg)
    w, a, b = proposed_unpack(theta, k)
    params = {"weights": w.copy(), "scale": float(a), "offset": float(b), "center": center}
    return FuserModel("proposed_fuser", _frozen(params), names, clamp, meta)


def mlp_init(k: int, seed: int, hidden: int = MLP_HIDDEN, zero_output: bool = False) -> np.ndarray:
    """Uniform(-0.5, 0.5)/sqrt(fan_in) weights, zero biases; W1 drawn row-major, then W2."""
    rng = XorShift64Star(seed)
    W1 = rng.uniform_array(hidden * k, -0.5, 0.5) / math.sqrt(k)
    W2 = np.zeros(hidden) if zero_output else rng.uniform_array(hidden, -0.5, 0.5) / math.sqrt(hidden)
    return np.concatenate([W1, np.zeros(hidden), W2, [0.0]])


def fit_mlp(scores, truth, cfg: TrainConfig = TrainConfig(), val=None, sample_weight=None,
            clamp: bool = False, hidden: int = MLP_HIDDEN, zero_output: bool = False) -> FuserModel:
    X, names = as_matrix(scores)
    n, k = X.shape
    y = as_vector(truth, n)
    data = _split(X, y, sample_weight, None, cfg, val)
    center = _score_center(data.X)
    data.X, data.Xv = data.X - center, data.Xv - center

    def loss_grad(theta, Z, yy, sw, loss, aux):
        return mlp_loss_grad(theta, Z, yy, sw, loss, aux, hidden)

    theta, meta = gradient_descent(loss_grad, mlp_init(k, cfg.seed, hidden, zero_output), data, cfg)
    W1, b1, W2, b2 = mlp_unpack(theta, k, hidden)
    params = {"W1": W1.copy(), "b1": b1.copy(), "W2": W2.copy(), "b2": float(b2), "center": center}
    return FuserModel("mlp", _frozen(params), names, clamp, meta)


AUX_TRANSFORMS = ("none", "log1p")


def transform_aux(aux: np.ndarray, transform: str) -> np.ndarray:
    if transform == "none":
        return aux
    if transform == "log1p":
        if np.any(aux <= -1.0):
            raise DataError("log1p needs aux values above -1")
        return np.log1p(aux)
    raise InvalidConfig(f"unknown aux transform {transform!r}; expected one of {AUX_TRANSFORMS}")


def fit_aux_fuser(scores, aux, truth, cfg: TrainConfig = TrainConfig(), val=None, sample_weight=None,
                  clamp: bool = False, freeze_aux: bool = False, aux_transform: str = "none") -> FuserModel:
    """Score head and auxiliary head, each a linear layer to one output, mixed by a final linear layer.

    ``freeze_aux`` pins the auxiliary mixing weight at zero, reducing the
    model to a linear map of the scores. ``aux_transform="log1p"`` feeds
    log(1 + aux) to the auxiliary head, at fit and predict time alike.
    """
    X, names = as_matrix(scores)
    n, k = X.shape
    y = as_vector(truth, n)
    a = transform_aux(as_vector(aux, n, "aux"), aux_transform)
    if val is not None and len(val) > 2:
        val = (val[0], val[1], transform_aux(np.asarray(val[2], dtype=np.float64), aux_transform))
    data = _split(X, y, sample_weight, a, cfg, val)
    center = _score_center(data.X)
    aux_center = float(data.aux.mean())
    data.X, data.Xv = data.X - center, data.Xv - center
    data.aux, data.auxv = data.aux - aux_center, data.auxv - aux_center
    # u1, d1, u2, d2, v1, v2, c0
    theta0 = np.concatenate([np.full(k, 1.0 / k), [0.0, 0.0, 0.0, 1.0, 0.0 if freeze_aux else 1.0, center]])
    frozen = None
    if freeze_aux:
        frozen = np.zeros(theta0.size, dtype=bool)
        frozen[k + 1:k + 3] = True
        frozen[k + 4] = True
    theta, meta = gradient_descent(aux_loss_grad, theta0, data, cfg, frozen)
    u1, d1, u2, d2, v1, v2, c0 = aux_unpack(theta, k)
    params = {"u1": u1.copy(), "d1": float(d1), "u2": float(u2), "d2": float(d2), "v1": float(v1),
              "v2": float(v2), "c0": float(c0), "center": center, "aux_center": aux_center,
              "aux_log1p": 1 if aux_transform == "log1p" else 0}
    return FuserModel("aux_fuser", _frozen(params), names, clamp, meta)
