"""Regression metrics, k-fold grid search, and the four-family forward-model
comparison harness (rate prediction from composition / composition+environment).
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .errors import ValidationError
from .gpr import fit_gpr, fit_log_gpr, predict_gpr, predict_log_gpr
from .neural import TrainConfig, predict_dnn, train_dnn
from .preprocess import (
    apply_scaler,
    build_features,
    cap_target,
    fit_scaler,
    kfold_plan,
    split_train_test,
)
from .trees import fit_forest, fit_gbm, predict_forest, predict_gbm

FORWARD_MODELS = ("rf", "dnn", "gpr", "loggpr")
DEFAULT_COMPARE_FEATURE_SETS = ("comp", "comp+env")
CAP_MPY = 100.0


@dataclass
class Metrics:
    r2: float
    mae: float
    mse: float
    rmse: float
    constant_target: bool = False  # SS_tot was zero; r2 is conventional, not defined

    def to_dict(self) -> dict:
        return {"r2": self.r2, "mae": self.mae, "mse": self.mse, "rmse": self.rmse,
                "constant_target": self.constant_target}


def compute_metrics(y: np.ndarray, y_hat: np.ndarray) -> Metrics:
    """R^2, MAE, MSE, RMSE. R^2 is measured against the mean of `y` itself,
    whichever subset that is. Constant targets set the flag instead of NaN."""
    y = np.asarray(y, dtype=float).ravel()
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    if y.size != y_hat.size:
        raise ValidationError(f"length mismatch: {y.size} vs {y_hat.size}")
    if y.size == 0:
        raise ValidationError("empty vectors")
    err = y - y_hat
    mae = float(np.mean(np.abs(err)))
    mse = float(np.mean(err * err))
    rmse = math.sqrt(mse)
    ss_res = float(np.sum(err * err))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return Metrics(r2=1.0 if ss_res == 0.0 else 0.0, mae=mae, mse=mse, rmse=rmse,
                       constant_target=True)
    return Metrics(r2=1.0 - ss_res / ss_tot, mae=mae, mse=mse, rmse=rmse)


@dataclass
class CvEntry:
    params: dict
    fold_metrics: list[Metrics]
    mean_r2: float
    mean_rmse: float


@dataclass
class CvResult:
    entries: list[CvEntry]
    best_params: dict
    best_model: object
    k: int


def _canonical_params(params: dict) -> str:
    return json.dumps(params, sort_keys=True, default=str)


def grid_search(fit_fn, predict_fn, grid: dict, X: np.ndarray, y: np.ndarray,
                k: int = 5, seed: int = 0) -> CvResult:
    """Exhaustive k-fold search over the parameter lattice.

    Best point maximizes mean validation R^2, ties broken by lower mean RMSE,
    then by canonical parameter string, so the outcome never depends on
    enumeration order. The winner is refit on the full data.
    """
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ValidationError("empty parameter grid")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    plan = kfold_plan(y.size, k=k, seed=seed)
    keys = sorted(grid)
    entries = []
    for combo in itertools.product(*(grid[k_] for k_ in keys)):
        params = dict(zip(keys, combo))
        fold_metrics = []
        for fold in range(plan.k):
            train_idx, val_idx = plan.fold_indices(fold)
            model = fit_fn(X[train_idx], y[train_idx], **params)
            fold_metrics.append(compute_metrics(y[val_idx], predict_fn(model, X[val_idx])))
        entries.append(CvEntry(params=params, fold_metrics=fold_metrics,
                               mean_r2=float(np.mean([m.r2 for m in fold_metrics])),
                               mean_rmse=float(np.mean([m.rmse for m in fold_metrics]))))
    best = min(entries, key=lambda e: (-e.mean_r2, e.mean_rmse, _canonical_params(e.params)))
    best_model = fit_fn(X, y, **best.params)
    return CvResult(entries=entries, best_params=dict(best.params),
                    best_model=best_model, k=plan.k)


@dataclass
class ComparisonCell:
    model: str
    feature_set: str
    metrics: Metrics
    sample_ids: list[str]
    y_true: np.ndarray
    y_pred: np.ndarray


def _fit_predict_cell(model: str, X_train, y_train, X_test, seed: int, cfg: dict):
    if model == "rf":
        forest = fit_forest(X_train, y_train, seed=seed, **cfg)
        return predict_forest(forest, X_test)
    # the remaining families expect standardized features
    scaler = fit_scaler(X_train)
    Xs_train = apply_scaler(scaler, X_train)
    Xs_test = apply_scaler(scaler, X_test)
    if model == "dnn":
        dnn = train_dnn(Xs_train, y_train, TrainConfig(seed=seed, **cfg))
        return predict_dnn(dnn, Xs_test)
    if model == "gpr":
        gp = fit_gpr(Xs_train, y_train, **cfg)
        return predict_gpr(gp, Xs_test)[0]
    if model == "loggpr":
        gp = fit_log_gpr(Xs_train, y_train, **cfg)
        return predict_log_gpr(gp, Xs_test)
    raise ValidationError(f"unknown forward model {model!r}; choose from {FORWARD_MODELS}")


def compare_forward_models(dataset: Dataset, seed: int = 0,
                           feature_sets: tuple[str, ...] = DEFAULT_COMPARE_FEATURE_SETS,
                           models: tuple[str, ...] = FORWARD_MODELS,
                           configs: dict | None = None,
                           cap: float = CAP_MPY, cap_mode: str = "drop",
                           test_fraction: float = 0.2) -> list[ComparisonCell]:
    """Shared-protocol comparison: cap extreme rates, one 80/20 split per
    feature set (same seed), fit every family on the identical split, report
    test metrics and true-vs-predicted pairs. `configs` overrides per-family
    training parameters, e.g. {"dnn": {"lr": 0.01}, "rf": {"n_estimators": 50}}.
    """
    configs = configs or {}
    capped = Dataset(samples=cap_target(dataset.samples, cap, cap_mode),
                     environment_names=dataset.environment_names)
    cells = []
    for feature_set in feature_sets:
        fm, y = build_features(capped, feature_set)
        split = split_train_test(y.size, seed=seed, test_fraction=test_fraction)
        X_train, X_test = fm.values[split.train], fm.values[split.test]
        y_train, y_test = y[split.train], y[split.test]
        test_ids = [fm.sample_ids[i] for i in split.test]
        for model in models:
            pred = _fit_predict_cell(model, X_train, y_train, X_test, seed,
                                     dict(configs.get(model, {})))
            cells.append(ComparisonCell(model=model, feature_set=feature_set,
                                        metrics=compute_metrics(y_test, pred),
                                        sample_ids=test_ids, y_true=y_test,
                                        y_pred=np.asarray(pred, dtype=float)))
    return cells


def comparison_metrics_rows(cells: list[ComparisonCell]) -> list[list[str]]:
    """CSV rows (with header) of per-cell metrics; floats via repr for
    byte-stable output."""
    rows = [["model", "feature_set", "r2", "mae", "rmse"]]
    for c in cells:
        rows.append([c.model, c.feature_set, repr(c.metrics.r2), repr(c.metrics.mae),
                     repr(c.metrics.rmse)])
    return rows


def comparison_pairs_rows(cells: list[ComparisonCell]) -> list[list[str]]:
    """CSV rows (with header) of test-set true-vs-predicted pairs for every cell."""
    rows = [["model", "feature_set", "sample_id", "true", "predicted"]]
    for c in cells:
        for sid, t, p in zip(c.sample_ids, c.y_true, c.y_pred):
            rows.append([c.model, c.feature_set, sid, repr(float(t)), repr(float(p))])
    return rows


def comparison_to_json(cells: list[ComparisonCell]) -> str:
    """Canonical JSON of the full report (stable key order, repr-exact floats)."""
    payload = [{"model": c.model, "feature_set": c.feature_set,
                "metrics": c.metrics.to_dict(), "sample_ids": list(c.sample_ids),
                "true": [float(v) for v in c.y_true],
                "predicted": [float(v) for v in c.y_pred]} for c in cells]
    return json.dumps(payload, sort_keys=True)


MODEL_FAMILY_FITTERS = {
    "rf": (fit_forest, predict_forest),
    "gbm": (fit_gbm, predict_gbm),
    "dnn": (lambda X, y, **p: train_dnn(X, y, TrainConfig(**p)), predict_dnn),
    "gpr": (fit_gpr, lambda m, X: predict_gpr(m, X)[0]),
    "loggpr": (fit_log_gpr, predict_log_gpr),
}
