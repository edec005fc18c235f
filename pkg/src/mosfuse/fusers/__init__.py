"""The fusion model zoo behind one fit/predict contract."""

from __future__ import annotations

from .base import (
    ALIASES,
    METHODS,
    FuserModel,
    TrainConfig,
    TrainMeta,
    canonical_method,
    predict,
    select_best,
)
from .gbdt import GbdtParams, Tree, fit_gbdt, staged_predict
from .linear import (
    fit_feature_regression,
    fit_linear_regression,
    fit_voting,
    fit_weighted_voting,
    project_simplex,
)
from .neural import fit_aux_fuser, fit_mlp, fit_proposed_fuser

__all__ = [
    "ALIASES", "METHODS", "FuserModel", "GbdtParams", "TrainConfig", "TrainMeta", "Tree",
    "canonical_method", "fit", "fit_aux_fuser", "fit_feature_regression", "fit_gbdt",
    "fit_linear_regression", "fit_mlp", "fit_proposed_fuser", "fit_voting", "fit_weighted_voting",
    "predict", "project_simplex", "select_best", "staged_predict",
]


def fit(method: str, data, truth, cfg: TrainConfig = TrainConfig(), *, aux=None, val=None,
        sample_weight=None, clamp: bool = False, gbdt: GbdtParams = GbdtParams(),
        ridge_lambda: float = 1e-3, aux_transform: str = "none") -> FuserModel:
    """Fit any method by name. ``val`` is (matrix, truth[, aux]) and only used by gradient fusers."""
    method = canonical_method(method)
    if method == "voting":
        return fit_voting(data, truth, clamp=clamp)
    if method == "weighted_voting":
        return fit_weighted_voting(data, truth, cfg, sample_weight=sample_weight, clamp=clamp)
    if method == "linear_regression":
        return fit_linear_regression(data, truth, sample_weight=sample_weight, clamp=clamp)
    if method == "proposed_fuser":
        return fit_proposed_fuser(data, truth, cfg, val=val, sample_weight=sample_weight, clamp=clamp)
    if method == "mlp":
        return fit_mlp(data, truth, cfg, val=val, sample_weight=sample_weight, clamp=clamp)
    if method == "gbdt":
        return fit_gbdt(data, truth, gbdt, sample_weight=sample_weight, clamp=clamp, seed=cfg.seed)
    if method == "feature_regression":
        return fit_feature_regression(data, truth, ridge_lambda, sample_weight=sample_weight, clamp=clamp)
    if aux is None:
        from ..errors import MissingAux
        raise MissingAux("the aux fuser needs an auxiliary column")
    return fit_aux_fuser(data, aux, truth, cfg, val=val, sample_weight=sample_weight, clamp=clamp,
                         aux_transform=aux_transform)
