"""Feature selection: collinearity reduction, filter, wrapper and embedded selectors.

All selectors take a DataFrame of features (NaN = MISSING) and integer
severity labels, and return a SelectionResult whose ``selected`` names are
a duplicate-free subset of the input columns.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform

from . import trees
from .pipeline.cv import group_kfold, loso_splits
from .pipeline.dataset import atomic_write_text
from .stats import UndefinedCoefficientError, kendall_tau, spearman_matrix

log = logging.getLogger(__name__)

COEF_THRESHOLD = 0.001
L1_RATIOS = (0.1, 0.3, 0.5, 0.7, 0.9)


@dataclass
class SelectionResult:
    selected: list
    method: str
    diagnostics: pd.DataFrame = field(default_factory=pd.DataFrame)
    curve: list = field(default_factory=list)
    path: "LinearPath | None" = None
    chosen: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.selected)) != len(self.selected):
            raise ValueError("duplicate features in selection")


@dataclass
class LinearPath:
    lambdas: np.ndarray
    coefs: np.ndarray  # (n_lambdas, n_features), standardized scale
    cv_mse: np.ndarray | None = None
    chosen: int | None = None


# -- linear models -------------------------------------------------------------


def _drop_constant(table: pd.DataFrame) -> tuple[pd.DataFrame, list]:
    sd = table.std(ddof=0, skipna=True)
    const = [c for c in table.columns if not (sd[c] > 0)]
    if const:
        log.warning("dropping constant or empty columns: %s", const)
    return table.drop(columns=const), const


def _standardize(X: np.ndarray, ref: np.ndarray | None = None):
    """Z-score with statistics from ``ref``; MISSING cells become 0 (the mean)."""
    ref = X if ref is None else ref
    mu = np.nanmean(ref, axis=0)
    sd = np.nanstd(ref, axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    Z = (X - mu) / sd
    return np.where(np.isnan(Z), 0.0, Z)


def lambda_max(X: np.ndarray, y: np.ndarray, l1_ratio: float = 1.0) -> float:
    n = X.shape[0]
    return float(np.max(np.abs(X.T @ (y - y.mean()))) / (n * l1_ratio))


def lambda_grid(X: np.ndarray, y: np.ndarray, l1_ratio: float = 1.0, n: int = 30, eps: float = 1e-3) -> np.ndarray:
    top = lambda_max(X, y, l1_ratio)
    if top <= 0:
        return np.array([1.0])
    return np.geomspace(top, top * eps, n)


def coordinate_descent(
    X: np.ndarray,
    y: np.ndarray,
    lam: float,
    l1_ratio: float = 1.0,
    beta0: np.ndarray | None = None,
    tol: float = 1e-4,
    max_iter: int = 10_000,
    gram: tuple[np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    """Elastic-net coefficients by cyclic coordinate descent.

    Minimizes 1/(2n)||y - Xb||^2 + lam * (r ||b||_1 + (1 - r)/2 ||b||^2)
    for centered y and columns of ``X`` with mean zero. Updates use the Gram
    matrix X'X/n (pass ``gram=(X'X/n, X'y/n)`` to reuse it along a path).
    Stops once a sweep moves little and the duality gap is below
    ``tol * ||y||^2 / n``.
    """
    n, d = X.shape
    XtX, Xty = gram if gram is not None else (X.T @ X / n, X.T @ y / n)
    yy = float(y @ y) / n
    b = np.zeros(d) if beta0 is None else beta0.astype(float).copy()
    diag = np.diag(XtX).copy()
    grad = Xty - XtX @ b  # X'(y - Xb)/n
    l1 = lam * l1_ratio
    l2 = lam * (1 - l1_ratio)
    for _ in range(max_iter):
        max_delta = 0.0
        for j in range(d):
            if diag[j] == 0:
                continue
            old = b[j]
            rho = grad[j] + diag[j] * old
            new = np.sign(rho) * max(abs(rho) - l1, 0.0) / (diag[j] + l2)
            if new != old:
                grad -= XtX[:, j] * (new - old)
                b[j] = new
                max_delta = max(max_delta, abs(new - old))
        b_max = np.max(np.abs(b)) if d else 0.0
        if max_delta <= 1e-4 * b_max or max_delta == 0.0:
            if _duality_gap(b, grad, Xty, yy, l1, l2) <= tol * yy:
                break
    return b


def _duality_gap(b, grad, Xty, yy, l1, l2) -> float:
    """Elastic-net duality gap, all terms per-sample (divided by n)."""
    r_norm2 = yy - 2 * b @ Xty + b @ (Xty - grad)  # ||y - Xb||^2 / n
    r_y = yy - b @ Xty
    XtA = grad - l2 * b
    dual_norm = np.max(np.abs(XtA)) if b.size else 0.0
    const = l1 / dual_norm if dual_norm > l1 else 1.0
    gap = 0.5 * r_norm2 * (1 + const**2) if dual_norm > l1 else r_norm2
    gap += l1 * np.sum(np.abs(b)) - const * r_y + 0.5 * l2 * (1 + const**2) * (b @ b)
    return float(gap)


def fit_path(X: np.ndarray, y: np.ndarray, lambdas: Sequence[float], l1_ratio: float = 1.0) -> LinearPath:
    """Coefficient path over ``lambdas`` (fitted from largest to smallest with warm starts)."""
    lambdas = np.asarray(lambdas, dtype=float)
    order = np.argsort(-lambdas, kind="stable")
    Z = _standardize(X)
    yc = y - y.mean()
    coefs = np.zeros((lambdas.size, X.shape[1]))
    b = np.zeros(X.shape[1])
    gram = (Z.T @ Z / Z.shape[0], Z.T @ yc / Z.shape[0])
    for i in order:
        b = coordinate_descent(Z, yc, lambdas[i], l1_ratio, b, gram=gram)
        coefs[i] = b
    return LinearPath(lambdas, coefs)


def _folds(groups, n_rows: int):
    if groups is None:
        return group_kfold(np.arange(n_rows) % 5, 5)
    return [(tr, te) for _, tr, te in loso_splits(groups)]


def _cv_mse(X, y, folds, lambdas, l1_ratio):
    """Mean held-out MSE per lambda and the per-fold coefficient paths."""
    errs = np.zeros((len(folds), lambdas.size))
    paths = []
    for f, (tr, te) in enumerate(folds):
        path = fit_path(X[tr], y[tr], lambdas, l1_ratio)
        paths.append(path.coefs)
        Zte = _standardize(X[te], X[tr])
        pred = y[tr].mean() + Zte @ path.coefs.T
        errs[f] = np.mean((y[te][:, None] - pred) ** 2, axis=0)
    return errs.mean(axis=0), paths


def _linear_select(table, labels, l1_ratios, lambdas, groups, method) -> SelectionResult:
    data, const = _drop_constant(table)
    names = list(data.columns)
    y = np.asarray(labels, dtype=float)
    X = data.to_numpy(dtype=float)
    if not names:
        return SelectionResult([], method, pd.DataFrame(index=pd.Index([], name="feature")))
    folds = _folds(groups, len(y))

    best = None
    for ratio in l1_ratios:
        grid = np.asarray(lambdas, dtype=float) if lambdas is not None else lambda_grid(_standardize(X), y, ratio)
        mse, paths = _cv_mse(X, y, folds, grid, ratio)
        # Lowest error; ties go to the stronger penalty (earlier in a descending grid).
        i = int(np.lexsort((-grid, mse))[0])
        if best is None or mse[i] < best[0]:
            best = (mse[i], ratio, grid, i, paths, mse)
    _, ratio, grid, i, paths, mse = best

    fold_coefs = np.array([p[i] for p in paths])
    keep = np.all(np.abs(fold_coefs) > COEF_THRESHOLD, axis=0)
    full = fit_path(X, y, grid, ratio)
    full.cv_mse, full.chosen = mse, i
    coef = full.coefs[i]
    diag = pd.DataFrame(
        {"coefficient": coef, "min_abs_fold_coef": np.abs(fold_coefs).min(axis=0), "selected": keep},
        index=pd.Index(names, name="feature"),
    )
    for c in const:
        diag.loc[c] = [0.0, 0.0, False]
    selected = [names[j] for j in np.argsort(-np.abs(coef), kind="stable") if keep[j]]
    return SelectionResult(selected, method, diag, path=full, chosen={"l1_ratio": ratio, "lambda": float(grid[i])})


def lasso_select(
    table: pd.DataFrame, labels, lambdas: Sequence[float] | None = None, groups: Sequence | None = None
) -> SelectionResult:
    """L1-regularized regression on the ordinal labels.

    The penalty is chosen by mean held-out squared error over
    leave-one-group-out folds (``groups``, typically speakers; 5 interleaved
    folds when omitted). Selected features have |coef| > 0.001 in every fold.
    """
    return _linear_select(table, labels, (1.0,), lambdas, groups, "lasso")


def elastic_net_select(
    table: pd.DataFrame,
    labels,
    l1_ratios: Sequence[float] = L1_RATIOS,
    lambdas: Sequence[float] | None = None,
    groups: Sequence | None = None,
) -> SelectionResult:
    """Elastic net with (l1_ratio, lambda) chosen jointly by pooled CV error."""
    return _linear_select(table, labels, tuple(l1_ratios), lambdas, groups, "elastic_net")


# -- clustering ----------------------------------------------------------------


def correlation_distance(table: pd.DataFrame) -> np.ndarray:
    """1 - |Spearman rho|; undefined correlations count as distance 1."""
    rho = spearman_matrix(table).to_numpy()
    D = 1.0 - np.abs(rho)
    D = np.where(np.isnan(D), 1.0, D)
    np.fill_diagonal(D, 0.0)
    return np.clip((D + D.T) / 2, 0.0, 1.0)


def ward_merges(D: np.ndarray) -> np.ndarray:
    """Ward agglomeration of a square distance matrix, in scipy linkage format."""
    return linkage(squareform(np.asarray(D, dtype=float), checks=False), method="ward")


def ward_clusters(table: pd.DataFrame, threshold: float = 0.5) -> np.ndarray:
    """Cluster id per column from Ward linkage on the correlation distance."""
    if table.shape[1] == 1:
        return np.array([1])
    return fcluster(ward_merges(correlation_distance(table)), t=threshold, criterion="distance")


def cluster_select(
    table: pd.DataFrame,
    labels,
    threshold: float = 0.5,
    seed: int = 0,
    n_repeats: int = 5,
    forest: trees.ForestParams | None = None,
) -> SelectionResult:
    """One representative per Ward cluster of correlated features.

    The representative is the member with the highest permutation
    importance under a randomized forest fitted to all features; ties go to
    the earlier column.
    """
    names = list(table.columns)
    if len(names) < 1:
        raise ValueError("no features")
    ids = ward_clusters(table, threshold)
    y = np.asarray(labels, dtype=int)
    params = forest or trees.ForestParams(n_trees=50, seed=seed)
    model = trees.random_forest_train(table, y, params)
    imp = trees.permutation_importance(model.predict, table, y, n_repeats=n_repeats, seed=seed)
    selected = []
    for c in dict.fromkeys(ids.tolist()):
        members = [n for n, k in zip(names, ids) if k == c]
        selected.append(max(members, key=lambda n: (imp[n], -names.index(n))))
    diag = pd.DataFrame(
        {"cluster": ids, "importance": [imp[n] for n in names], "selected": [n in selected for n in names]},
        index=pd.Index(names, name="feature"),
    )
    selected.sort(key=lambda n: -imp[n])
    return SelectionResult(selected, "cluster", diag)


# -- filter, wrapper, embedded -------------------------------------------------


def filter_select(table: pd.DataFrame, labels, alpha: float = 0.05) -> SelectionResult:
    """Keep features whose Kendall tau with the labels has p < alpha."""
    y = np.asarray(labels, dtype=float)
    rows = []
    for name in table.columns:
        x = table[name].to_numpy(dtype=float)
        ok = ~np.isnan(x)
        try:
            r = kendall_tau(x[ok], y[ok])
            rows.append((name, r.coefficient, r.p_value, r.p_value < alpha, ""))
        except (UndefinedCoefficientError, ValueError) as e:
            rows.append((name, np.nan, np.nan, False, str(e)))
    diag = pd.DataFrame(rows, columns=["feature", "tau", "p_value", "selected", "note"]).set_index("feature")
    kept = diag[diag.selected].sort_values("p_value", kind="stable")
    return SelectionResult(list(kept.index), "filter", diag)


def _cv_accuracy(X, y, folds, params):
    correct = 0
    for tr, te in folds:
        model = trees.train(X[tr], y[tr], params)
        correct += int(np.sum(model.predict(X[te]) == y[te]))
    return correct / len(y) * 100


def _elimination(table, labels, params, folds, importance_fn, method) -> SelectionResult:
    y = np.asarray(labels, dtype=int)
    if params.n_classes is None:
        params = trees.BoostParams(**{**params.__dict__, "n_classes": int(y.max()) + 1})
    current = list(table.columns)
    curve = []
    while current:
        X = table[current].to_numpy(dtype=float)
        acc = _cv_accuracy(X, y, folds, params)
        curve.append((list(current), acc))
        if len(current) == 1:
            break
        imp = importance_fn(X, y, current, params)
        # Drop the least important; among ties the last column goes first.
        worst = min(reversed(current), key=lambda n: imp[n])
        current.remove(worst)
    top = max(acc for _, acc in curve)
    subset = min((s for s, acc in curve if acc == top), key=len)
    diag = pd.DataFrame(
        {"n_features": [len(s) for s, _ in curve], "accuracy": [a for _, a in curve]}
    )
    return SelectionResult(subset, method, diag, curve)


def rfe_select(
    table: pd.DataFrame,
    labels,
    params: trees.BoostParams = trees.BoostParams(rounds=30, max_depth=3),
    groups: Sequence | None = None,
    n_folds: int = 5,
) -> SelectionResult:
    """Recursive elimination by boosted-tree gain, scored by CV accuracy.

    Importance comes from a model on all rows; accuracy from group folds
    (or interleaved folds). Returns the best-scoring subset, preferring the
    smaller one on ties.
    """
    y = np.asarray(labels)
    folds = group_kfold(groups if groups is not None else np.arange(len(y)) % n_folds, n_folds)

    def importance(X, y, names, p):
        return trees.gain_importance(trees.train(X, y, p, names))

    return _elimination(table, labels, params, folds, importance, "rfe")


def iterative_gain_select(
    table: pd.DataFrame,
    labels,
    groups: Sequence,
    params: trees.BoostParams = trees.BoostParams(rounds=30, max_depth=3),
) -> SelectionResult:
    """Backward elimination under leave-one-speaker-out training.

    Each step trains one model per held-out speaker, averages gain
    importance over those models, records pooled held-out accuracy, and
    drops the least important feature. ``curve`` holds (subset, accuracy).
    """
    folds = [(tr, te) for _, tr, te in loso_splits(groups)]

    def importance(X, y, names, p):
        total = dict.fromkeys(names, 0.0)
        for tr, _ in folds:
            for k, v in trees.gain_importance(trees.train(X[tr], y[tr], p, names)).items():
                total[k] += v / len(folds)
        return total

    return _elimination(table, labels, params, folds, importance, "iterative_gain")


def embedded_select(
    table: pd.DataFrame, labels, top_k: int | None = None, seed: int = 0, n_trees: int = 100
) -> SelectionResult:
    """Randomized-forest impurity importance; keep above-mean features or the top k."""
    model = trees.random_forest_train(table, labels, trees.ForestParams(n_trees=n_trees, seed=seed))
    imp = model.feature_importance()
    names = list(table.columns)
    ranked = sorted(names, key=lambda n: (-imp[n], names.index(n)))
    if top_k is not None:
        selected = ranked[:top_k]
    else:
        mean = np.mean(list(imp.values()))
        selected = [n for n in ranked if imp[n] > mean]
    diag = pd.DataFrame({"importance": [imp[n] for n in names]}, index=pd.Index(names, name="feature"))
    return SelectionResult(selected, "embedded", diag)


def read_feature_set(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.strip() for line in fh if line.strip()]


def write_feature_set(path, names: Sequence[str]) -> None:
    """One feature name per line."""
    atomic_write_text(path, "".join(f"{n}\n" for n in names))
