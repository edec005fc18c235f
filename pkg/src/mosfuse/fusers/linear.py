"""Closed-form and convex fusers: voting, simplex-weighted voting, OLS, feature ridge."""

from __future__ import annotations

import math
import warnings

import numpy as np

from ..errors import DataError, EmptyInput, SingularSystem
from .base import FuserModel, TrainConfig, TrainMeta, as_matrix, as_vector, normalized_weights, register

RIDGE_FALLBACK = 1e-8
_COND_LIMIT = 1e12
_REFINE_STEPS = 3


@register("voting")
def _predict_voting(params, X, aux):
    return X.mean(axis=1)


@register("weighted_voting")
def _predict_weighted(params, X, aux):
    return X @ params["weights"]


@register("linear_regression")
@register("feature_regression")
def _predict_affine(params, X, aux):
    return X @ params["coef"] + params["intercept"]


def _weighted_mse(pred, y, sw) -> float:
    r = pred - y
    return float(np.dot(sw, r * r))


def fit_voting(scores, truth=None, clamp: bool = False) -> FuserModel:
    X, names = as_matrix(scores)
    if X.shape[1] < 1:
        raise EmptyInput("voting needs at least one subsystem column")
    meta = TrainMeta(loss="l2", epochs=0)
    if truth is not None and X.shape[0]:
        y = as_vector(truth, X.shape[0])
        meta = TrainMeta(loss="l2", epochs=0, train_loss=_weighted_mse(X.mean(axis=1), y, normalized_weights(None, y.size)))
    return FuserModel("voting", {}, names, clamp, meta)


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {w >= 0, sum(w) = 1} (sort-and-threshold)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    rho = np.flatnonzero(u - css / ind > 0)[-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def _on_simplex(w: np.ndarray) -> bool:
    return bool(np.all(w >= 0.0) and abs(w.sum() - 1.0) <= 1e-9)


def fit_weighted_voting(scores, truth, cfg: TrainConfig = TrainConfig(), sample_weight=None,
                        clamp: bool = False, tol: float = 1e-12) -> FuserModel:
    """Simplex-constrained least squares by accelerated projected gradient descent.

    The step is 1/L with L the curvature of the objective restricted to the
    simplex's affine hull, so no learning rate is needed; ``cfg.max_epochs``
    caps the iterations. The best iterate seen is returned, which makes the
    training loss never exceed plain voting (the uniform starting point).
    """
    X, names = as_matrix(scores)
    n, k = X.shape
    y = as_vector(truth, n)
    if n == 0:
        raise EmptyInput("weighted voting needs at least one labeled row")
    sw = normalized_weights(sample_weight, n)
    gram = (X * sw[:, None]).T @ X
    rhs = X.T @ (sw * y)
    yy = float(np.dot(sw, y * y))

    def objective(w):
        return float(w @ gram @ w - 2.0 * rhs @ w + yy)

    centering = np.eye(k) - 1.0 / k
    lip = 2.0 * float(np.linalg.eigvalsh(centering @ gram @ centering)[-1])
    w = np.full(k, 1.0 / k)
    best_w, best_f = w, objective(w)
    converged = lip <= 0.0 or k == 1
    epochs = 0
    if not converged:
        step = 1.0 / lip
        z, t = w.copy(), 1.0
        f_prev = best_f
        for epochs in range(1, cfg.max_epochs + 1):
            w_new = project_simplex(z - step * 2.0 * (gram @ z - rhs))
            if not _on_simplex(w_new):
                raise AssertionError(f"projection left the simplex: {w_new}")
            f_new = objective(w_new)
            if float(np.max(np.abs(w_new - w))) < tol:
                converged = True
                break
            if f_new > f_prev and t > 1.0:
                # momentum overshoot: restart from the last iterate
                z, t = w.copy(), 1.0
                continue
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            z = w_new + ((t - 1.0) / t_new) * (w_new - w)
            w, t, f_prev = w_new, t_new, f_new
            if f_new < best_f:
                best_w, best_f = w_new, f_new
    if not converged:
        warnings.warn("weighted voting did not converge; returning the best iterate", RuntimeWarning)
    best_w = best_w.copy()
    best_w.setflags(write=False)
    meta = TrainMeta(loss="l2", epochs=epochs, train_loss=_weighted_mse(X @ best_w, y, sw),
                     seed=cfg.seed, converged=converged)
    return FuserModel("weighted_voting", {"weights": best_w}, names, clamp, meta)


def _weighted_center(X, y, sw):
    x_mean = sw @ X
    y_mean = float(sw @ y)
    return X - x_mean, y - y_mean, x_mean, y_mean


def fit_linear_regression(scores, truth, sample_weight=None, clamp: bool = False) -> FuserModel:
    """Least squares with intercept via the (centred) normal equations.

    A near-singular Gram matrix falls back to ridge with lambda = 1e-8,
    refined a few times so the fit matches the minimum-norm solution.
    """
    X, names = as_matrix(scores)
    n, k = X.shape
    y = as_vector(truth, n)
    if n == 0:
        raise EmptyInput("linear regression needs at least one labeled row")
    sw = normalized_weights(sample_weight, n)
    Xc, yc, x_mean, y_mean = _weighted_center(X, y, sw)
    gram = (Xc * sw[:, None]).T @ Xc
    rhs = Xc.T @ (sw * yc)
    ridge = 0.0
    coef = None
    if n > k and np.linalg.cond(gram) < _COND_LIMIT:
        try:
            coef = np.linalg.solve(gram, rhs)
        except np.linalg.LinAlgError:
            coef = None
    if coef is None or not np.all(np.isfinite(coef)):
        ridge = RIDGE_FALLBACK
        reg = gram + ridge * np.eye(k)
        try:
            coef = np.linalg.solve(reg, rhs)
            # iterated Tikhonov: removes the ridge bias, converging to the minimum-norm LS fit
            for _ in range(_REFINE_STEPS):
                coef = np.linalg.solve(reg, rhs + ridge * coef)
        except np.linalg.LinAlgError as exc:
            raise SingularSystem("normal equations singular even with ridge fallback") from exc
        if not np.all(np.isfinite(coef)):
            raise SingularSystem("ridge fallback produced non-finite coefficients")
    intercept = y_mean - float(x_mean @ coef)
    coef.setflags(write=False)
    meta = TrainMeta(loss="l2", train_loss=_weighted_mse(X @ coef + intercept, y, sw))
    return FuserModel("linear_regression", {"coef": coef, "intercept": intercept, "ridge": ridge},
                      names, clamp, meta)


def fit_feature_regression(features, truth, lam: float = 1e-3, sample_weight=None,
                           clamp: bool = False) -> FuserModel:
    """Ridge regression on concatenated embedding features, intercept unpenalised.

    Solves (F'F + lam*I) beta = F'(y - mean y) on centred features; when D
    exceeds N the equivalent N x N dual system is solved instead.
    """
    F, names = as_matrix(features)
    n, d = F.shape
    y = as_vector(truth, n)
    if n == 0:
        raise EmptyInput("feature regression needs at least one labeled row")
    if lam < 0 or not math.isfinite(lam):
        raise DataError("lambda must be a finite non-negative number")
    raw_w = np.ones(n) if sample_weight is None else as_vector(sample_weight, n, "sample_weight")
    sw = normalized_weights(raw_w, n)
    Fc, yc, f_mean, y_mean = _weighted_center(F, y, sw)
    # weights enter the sums unnormalised so lam keeps its meaning for unit weights
    root = np.sqrt(raw_w)[:, None]
    A = Fc * root
    b = yc * root[:, 0]
    if lam == 0.0:
        if np.linalg.matrix_rank(A) < d:
            raise SingularSystem("rank-deficient features need lambda > 0")
        coef = np.linalg.solve(A.T @ A, A.T @ b)
    elif d <= n:
        coef = np.linalg.solve(A.T @ A + lam * np.eye(d), A.T @ b)
    else:
        coef = A.T @ np.linalg.solve(A @ A.T + lam * np.eye(n), b)
    if not np.all(np.isfinite(coef)):
        raise SingularSystem("ridge solve produced non-finite coefficients")
    intercept = y_mean - float(f_mean @ coef)
    coef.setflags(write=False)
    meta = TrainMeta(loss="l2", train_loss=_weighted_mse(F @ coef + intercept, y, sw))
    return FuserModel("feature_regression", {"coef": coef, "intercept": intercept, "lambda": float(lam)},
                      names, clamp, meta)
