"""Regression trees and ensembles: CART with variance-reduction splitting,
bagged forests with per-split feature subsetting, gradient boosting on
residuals, and a per-target multi-output wrapper.

Trees are stored as flat parallel arrays (feature, threshold, children, value)
so prediction is a vectorized level-by-level descent and serialization is
trivial. Split search at a node sorts every candidate feature once and scores
all midpoint thresholds with prefix sums:

    gain = S_L^2/n_L + S_R^2/n_R - S_parent^2/m

which equals the node's SSE reduction (the sum-of-squares terms cancel).
Equal-gain ties resolve to the lowest feature index, then lowest threshold,
making every fit reproducible. Per-tree RNG streams are spawned from the
forest seed up front, so tree construction order can never change results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

DEFAULT_N_ESTIMATORS = 100
DEFAULT_GBM_ROUNDS = 100
DEFAULT_GBM_LR = 0.1
DEFAULT_GBM_DEPTH = 3

# grid-search axes for forward-model tuning; the grid is small on purpose
FOREST_GRID = {"n_estimators": (100, 200, 400), "max_depth": (4, 8, 16, None),
               "max_features": ("all", "sqrt", "third")}

LEAF = -1


@dataclass
class DecisionTree:
    feature: np.ndarray    # split feature per node, LEAF marks leaves
    threshold: np.ndarray  # split threshold per node (x <= t goes left)
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray      # mean target of the rows reaching the node
    gain: np.ndarray       # SSE reduction of the node's split (0 at leaves)
    n_features: int
    max_depth: int | None = None
    min_samples_leaf: int = 1

    def node_count(self) -> int:
        return self.feature.size

    def depth(self) -> int:
        depths = np.zeros(self.node_count(), dtype=int)
        out = 0
        for i in range(self.node_count()):
            if self.feature[i] != LEAF:
                depths[self.left[i]] = depths[i] + 1
                depths[self.right[i]] = depths[i] + 1
            else:
                out = max(out, depths[i])
        return out


def _resolve_max_features(max_features, d: int) -> int:
    if max_features is None or max_features == "all":
        return d
    if max_features == "sqrt":
        return max(1, round(math.sqrt(d)))
    if max_features == "third":
        return max(1, round(d / 3))
    mf = int(max_features)
    if mf < 1:
        raise ValidationError("max_features must be >= 1")
    return min(mf, d)


def _best_split(Xn: np.ndarray, yn: np.ndarray, min_leaf: int):
    """Best (local feature, threshold, gain) over all midpoints, or None."""
    m = yn.size
    if m < 2:
        return None
    order = np.argsort(Xn, axis=0, kind="stable")
    xs = np.take_along_axis(Xn, order, axis=0)
    ys = yn[order]
    csum = np.cumsum(ys, axis=0)
    total = csum[-1]
    n_left = np.arange(1, m, dtype=float)[:, None]
    s_left = csum[:-1]
    gains = (s_left * s_left / n_left
             + (total - s_left) ** 2 / (m - n_left)
             - (total * total) / m)
    valid = xs[1:] != xs[:-1]
    if min_leaf > 1:
        counts = np.arange(1, m)[:, None]
        valid &= (counts >= min_leaf) & (m - counts >= min_leaf)
    gains = np.where(valid, gains, -np.inf)
    # feature-major argmax: ties fall to the lowest feature, then lowest threshold
    flat = np.argmax(gains.T)
    f, pos = divmod(flat, m - 1)
    best = gains[pos, f]
    if not best > 0.0:
        return None
    thr = 0.5 * (xs[pos, f] + xs[pos + 1, f])
    return int(f), float(thr), float(best)


def fit_tree(X: np.ndarray, y: np.ndarray, max_depth: int | None = None,
             min_samples_leaf: int = 1, max_features=None,
             rng: np.random.Generator | None = None) -> DecisionTree:
    """Greedy CART fit. max_features < n_features draws a fresh candidate
    subset at every split from `rng` (the forest's per-tree stream)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n, d = X.shape
    if n == 0:
        raise ValidationError("empty training data")
    if y.size != n:
        raise ValidationError(f"{n} rows but {y.size} targets")
    if max_depth is not None and max_depth < 0:
        raise ValidationError("max_depth must be >= 0")
    if min_samples_leaf < 1:
        raise ValidationError("min_samples_leaf must be >= 1")
    mf = _resolve_max_features(max_features, d)
    if mf < d and rng is None:
        rng = np.random.default_rng(0)

    feature, threshold, left, right, value, gain = [], [], [], [], [], []
    # stack entries: (row indices, depth, parent node id, is_left_child)
    stack = [(np.arange(n), 0, -1, False)]
    while stack:
        idx, depth, parent, is_left = stack.pop()
        nid = len(feature)
        if parent >= 0:
            (left if is_left else right)[parent] = nid
        yn = y[idx]
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(float(yn.mean()))
        gain.append(0.0)
        if (max_depth is not None and depth >= max_depth) or idx.size < 2 * min_samples_leaf:
            continue
        if np.ptp(yn) == 0.0:
            continue
        feats = np.sort(rng.choice(d, size=mf, replace=False)) if mf < d else np.arange(d)
        found = _best_split(X[np.ix_(idx, feats)], yn, min_samples_leaf)
        if found is None:
            continue
        f_local, thr, g = found
        f = int(feats[f_local])
        go_left = X[idx, f] <= thr
        feature[nid] = f
        threshold[nid] = thr
        gain[nid] = g
        stack.append((idx[~go_left], depth + 1, nid, False))
        stack.append((idx[go_left], depth + 1, nid, True))
    return DecisionTree(feature=np.asarray(feature), threshold=np.asarray(threshold),
                        left=np.asarray(left), right=np.asarray(right),
                        value=np.asarray(value), gain=np.asarray(gain),
                        n_features=d, max_depth=max_depth,
                        min_samples_leaf=min_samples_leaf)


def predict_tree(tree: DecisionTree, X: np.ndarray) -> np.ndarray:
    """Vectorized descent: one indexing pass per tree level."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != tree.n_features:
        raise ValidationError(f"feature count {X.shape[1]} != training {tree.n_features}")
    node = np.zeros(X.shape[0], dtype=int)
    active = tree.feature[node] != LEAF
    while np.any(active):
        cur = node[active]
        go_left = X[active, tree.feature[cur]] <= tree.threshold[cur]
        node[active] = np.where(go_left, tree.left[cur], tree.right[cur])
        active = tree.feature[node] != LEAF
    return tree.value[node]


@dataclass
class RandomForest:
    trees: list[DecisionTree]
    n_estimators: int
    max_features: int
    bootstrap: bool
    seed: int
    n_features: int
    unique_inbag_counts: list[int] = field(default_factory=list)


def fit_forest(X: np.ndarray, y: np.ndarray, n_estimators: int = DEFAULT_N_ESTIMATORS,
               max_depth: int | None = None, max_features=None,
               min_samples_leaf: int = 1, bootstrap: bool = True,
               seed: int = 0) -> RandomForest:
    """Bagged trees; each tree owns a pre-spawned RNG stream for its bootstrap
    resample and per-split feature subsets, so fits are deterministic in seed."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if n_estimators < 1:
        raise ValidationError("n_estimators must be >= 1")
    n, d = X.shape
    mf = _resolve_max_features(max_features, d)
    streams = np.random.SeedSequence(seed).spawn(n_estimators)
    trees, unique_counts = [], []
    for stream in streams:
        rng = np.random.default_rng(stream)
        if bootstrap:
            rows = rng.integers(0, n, size=n)
            unique_counts.append(int(np.unique(rows).size))
            Xb, yb = X[rows], y[rows]
        else:
            unique_counts.append(n)
            Xb, yb = X, y
        trees.append(fit_tree(Xb, yb, max_depth=max_depth,
                              min_samples_leaf=min_samples_leaf,
                              max_features=mf, rng=rng))
    return RandomForest(trees=trees, n_estimators=n_estimators, max_features=mf,
                        bootstrap=bootstrap, seed=seed, n_features=d,
                        unique_inbag_counts=unique_counts)


def predict_forest(forest: RandomForest, X: np.ndarray) -> np.ndarray:
    """Unweighted mean over trees, summed in fixed index order."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    total = np.zeros(X.shape[0])
    for tree in forest.trees:
        total += predict_tree(tree, X)
    return total / len(forest.trees)


def feature_importance(forest: RandomForest) -> np.ndarray:
    """Mean SSE decrease per feature over trees, normalized to sum to 1."""
    totals = np.zeros(forest.n_features)
    for tree in forest.trees:
        split = tree.feature != LEAF
        np.add.at(totals, tree.feature[split], tree.gain[split])
    totals /= len(forest.trees)
    s = totals.sum()
    return totals / s if s > 0 else totals


@dataclass
class GradientBoostedTrees:
    init_value: float      # F0 = mean(y)
    stages: list[DecisionTree]
    learning_rate: float
    sse_history: list[float] = field(default_factory=list)  # training SSE per round


def fit_gbm(X: np.ndarray, y: np.ndarray, n_rounds: int = DEFAULT_GBM_ROUNDS,
            learning_rate: float = DEFAULT_GBM_LR, max_depth: int | None = DEFAULT_GBM_DEPTH,
            min_samples_leaf: int = 1, seed: int = 0) -> GradientBoostedTrees:
    """Least-squares boosting: each stage fits the current residuals,
    F_m = F_{m-1} + lr * tree_m. Stage trees see all features, so the fit is
    deterministic and `seed` is accepted only for interface symmetry."""
    del seed
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if y.size == 0:
        raise ValidationError("empty training data")
    if learning_rate <= 0:
        raise ValidationError("learning_rate must be > 0")
    if n_rounds < 0:
        raise ValidationError("n_rounds must be >= 0")
    f0 = float(y.mean())
    pred = np.full(y.size, f0)
    stages, history = [], []
    for _ in range(n_rounds):
        tree = fit_tree(X, y - pred, max_depth=max_depth, min_samples_leaf=min_samples_leaf)
        stages.append(tree)
        pred += learning_rate * predict_tree(tree, X)
        history.append(float(np.sum((y - pred) ** 2)))
    return GradientBoostedTrees(init_value=f0, stages=stages,
                                learning_rate=learning_rate, sse_history=history)


def predict_gbm(model: GradientBoostedTrees, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    out = np.full(X.shape[0], model.init_value)
    for tree in model.stages:
        out += model.learning_rate * predict_tree(tree, X)
    return out


@dataclass
class MultiOutputModel:
    kind: str              # "forest" or "gbm"
    models: list
    target_names: list[str]


def fit_multi_output(X: np.ndarray, Y: np.ndarray, kind: str = "gbm",
                     target_names: list[str] | None = None, seed: int = 0,
                     **params) -> MultiOutputModel:
    """One independent regressor per target column."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    t = Y.shape[1]
    if target_names is None:
        target_names = [f"target{i}" for i in range(t)]
    if len(target_names) != t:
        raise ValidationError(f"{len(target_names)} names for {t} targets")
    if kind == "gbm":
        models = [fit_gbm(X, Y[:, i], seed=seed, **params) for i in range(t)]
    elif kind == "forest":
        seeds = np.random.SeedSequence(seed).generate_state(t)
        models = [fit_forest(X, Y[:, i], seed=int(seeds[i]), **params) for i in range(t)]
    else:
        raise ValidationError(f"unknown base regressor {kind!r}")
    return MultiOutputModel(kind=kind, models=models, target_names=list(target_names))


def predict_multi_output(model: MultiOutputModel, X: np.ndarray) -> np.ndarray:
    predict = predict_gbm if model.kind == "gbm" else predict_forest
    return np.column_stack([predict(m, X) for m in model.models])


def tree_to_dict(tree: DecisionTree) -> dict:
    return {"kind": "tree", "feature": tree.feature.tolist(),
            "threshold": tree.threshold.tolist(), "left": tree.left.tolist(),
            "right": tree.right.tolist(), "value": tree.value.tolist(),
            "gain": tree.gain.tolist(), "n_features": tree.n_features,
            "max_depth": tree.max_depth, "min_samples_leaf": tree.min_samples_leaf}


def tree_from_dict(d: dict) -> DecisionTree:
    if d.get("kind") != "tree":
        raise ValidationError(f"expected kind 'tree', got {d.get('kind')!r}")
    return DecisionTree(feature=np.asarray(d["feature"], dtype=int),
                        threshold=np.asarray(d["threshold"], dtype=float),
                        left=np.asarray(d["left"], dtype=int),
                        right=np.asarray(d["right"], dtype=int),
                        value=np.asarray(d["value"], dtype=float),
                        gain=np.asarray(d["gain"], dtype=float),
                        n_features=int(d["n_features"]),
                        max_depth=d["max_depth"],
                        min_samples_leaf=int(d["min_samples_leaf"]))


def forest_to_dict(forest: RandomForest) -> dict:
    return {"kind": "forest", "trees": [tree_to_dict(t) for t in forest.trees],
            "n_estimators": int(forest.n_estimators), "max_features": int(forest.max_features),
            "bootstrap": bool(forest.bootstrap), "seed": int(forest.seed),
            "n_features": int(forest.n_features),
            "unique_inbag_counts": [int(c) for c in forest.unique_inbag_counts]}


def forest_from_dict(d: dict) -> RandomForest:
    if d.get("kind") != "forest":
        raise ValidationError(f"expected kind 'forest', got {d.get('kind')!r}")
    return RandomForest(trees=[tree_from_dict(t) for t in d["trees"]],
                        n_estimators=int(d["n_estimators"]),
                        max_features=int(d["max_features"]),
                        bootstrap=bool(d["bootstrap"]), seed=int(d["seed"]),
                        n_features=int(d["n_features"]),
                        unique_inbag_counts=list(d["unique_inbag_counts"]))


def gbm_to_dict(model: GradientBoostedTrees) -> dict:
    return {"kind": "gbm", "init_value": float(model.init_value),
            "learning_rate": float(model.learning_rate),
            "stages": [tree_to_dict(t) for t in model.stages]}


def gbm_from_dict(d: dict) -> GradientBoostedTrees:
    if d.get("kind") != "gbm":
        raise ValidationError(f"expected kind 'gbm', got {d.get('kind')!r}")
    return GradientBoostedTrees(init_value=float(d["init_value"]),
                                stages=[tree_from_dict(t) for t in d["stages"]],
                                learning_rate=float(d["learning_rate"]))


def multi_output_to_dict(model: MultiOutputModel) -> dict:
    to_dict = gbm_to_dict if model.kind == "gbm" else forest_to_dict
    return {"kind": "multi", "base": model.kind,
            "target_names": list(model.target_names),
            "models": [to_dict(m) for m in model.models]}


def multi_output_from_dict(d: dict) -> MultiOutputModel:
    if d.get("kind") != "multi":
        raise ValidationError(f"expected kind 'multi', got {d.get('kind')!r}")
    from_dict = gbm_from_dict if d["base"] == "gbm" else forest_from_dict
    return MultiOutputModel(kind=d["base"], models=[from_dict(m) for m in d["models"]],
                            target_names=list(d["target_names"]))
