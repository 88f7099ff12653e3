"""Tree learners: boosted trees with learned missing-value routing, an
extremely randomized forest, and a k-nearest-neighbour baseline.

Tables are 2-D float arrays (or DataFrames) with NaN as MISSING; labels are
integers 0..k-1.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
import pandas as pd

SERIAL_VERSION = 1
LEFT, RIGHT = "L", "R"
# Gains within this relative distance of the best count as ties.
GAIN_TIE_RTOL = 1e-9
# Child hessian sums are compared to min_child_weight with this slack so that
# summation order cannot decide admissibility at an exact boundary.
HESS_RTOL = 1e-9


class SchemaError(ValueError):
    """Feature names or missing values do not fit the model."""


def _as_matrix(X, feature_names: Sequence[str] | None = None) -> tuple[np.ndarray, tuple]:
    if isinstance(X, pd.DataFrame):
        names = tuple(str(c) for c in X.columns)
        if feature_names is not None:
            unknown = [c for c in names if c not in feature_names]
            if unknown:
                raise SchemaError(f"unknown features {unknown}")
            missing = [c for c in feature_names if c not in names]
            if missing:
                raise SchemaError(f"table lacks features {missing}")
            X = X[list(feature_names)]
            names = tuple(feature_names)
        return X.to_numpy(dtype=float), names
    M = np.asarray(X, dtype=float)
    if M.ndim == 1:
        M = M[None, :]
    if feature_names is not None and M.shape[1] != len(feature_names):
        raise SchemaError(f"expected {len(feature_names)} columns, got {M.shape[1]}")
    names = tuple(feature_names) if feature_names is not None else tuple(f"f{i}" for i in range(M.shape[1]))
    return M, names


def softmax(F: np.ndarray) -> np.ndarray:
    z = F - F.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def log_loss(y: np.ndarray, proba: np.ndarray) -> float:
    p = proba[np.arange(len(y)), y]
    return float(-np.mean(np.log(np.clip(p, 1e-300, None))))


# -- boosted trees -----------------------------------------------------------


@dataclass(frozen=True)
class BoostParams:
    rounds: int = 300
    max_depth: int = 6
    learning_rate: float = 0.3
    min_child_weight: float = 1.0
    reg_lambda: float = 1.0
    n_classes: int | None = None

    def __post_init__(self):
        if self.rounds < 0 or self.max_depth < 0:
            raise ValueError("rounds and max_depth must be non-negative")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class Tree:
    """Flat array form of one regression tree.

    ``feature[i] == -1`` marks a leaf whose output is ``value[i]``. Rows go
    left when ``x < threshold``; MISSING goes left iff ``default_left``.
    """

    feature: list = field(default_factory=list)
    threshold: list = field(default_factory=list)
    default_left: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    value: list = field(default_factory=list)
    gain: list = field(default_factory=list)

    def add(self, feature=-1, threshold=0.0, default_left=True, left=-1, right=-1, value=0.0, gain=0.0) -> int:
        self.feature.append(feature)
        self.threshold.append(threshold)
        self.default_left.append(default_left)
        self.left.append(left)
        self.right.append(right)
        self.value.append(value)
        self.gain.append(gain)
        return len(self.feature) - 1

    def __len__(self):
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index for every row."""
        feat = np.asarray(self.feature)
        thr = np.asarray(self.threshold, dtype=float)
        dl = np.asarray(self.default_left, dtype=bool)
        lc = np.asarray(self.left)
        rc = np.asarray(self.right)
        node = np.zeros(X.shape[0], dtype=int)
        rows = np.arange(X.shape[0])
        while True:
            active = feat[node] >= 0
            if not active.any():
                return node
            r = rows[active]
            n = node[active]
            x = X[r, feat[n]]
            go_left = np.where(np.isnan(x), dl[n], x < thr[n])
            node[active] = np.where(go_left, lc[n], rc[n])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(self.value, dtype=float)[self.apply(X)]


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    default_left: bool
    gain: float


def _score(G, H, lam):
    return G * G / (H + lam)


def find_best_split(
    X: np.ndarray, g: np.ndarray, h: np.ndarray, reg_lambda: float = 1.0, min_child_weight: float = 1.0
) -> Split | None:
    """Exact greedy split search with learned default direction.

    Candidate thresholds are midpoints between consecutive distinct present
    values of a feature. For each, MISSING rows are tried on both sides.
    Gain is 0.5 * [G_L^2/(H_L+l) + G_R^2/(H_R+l) - G^2/(H+l)]. Among
    candidates within a relative 1e-9 of the best gain the first feature,
    then the lowest threshold, then LEFT wins. Returns None when no
    candidate has positive gain. A child is admissible when its hessian
    sum reaches min_child_weight within a relative 1e-9.
    """
    m, d = X.shape
    if m < 2:
        return None
    G, H = g.sum(), h.sum()
    parent = _score(G, H, reg_lambda)

    order = np.argsort(X, axis=0, kind="stable")  # NaN sorts last
    xs = np.take_along_axis(X, order, axis=0)
    present = ~np.isnan(xs)
    n_present = present.sum(axis=0)
    gs = np.where(present, g[order], 0.0)
    hs = np.where(present, h[order], 0.0)
    cg = np.cumsum(gs, axis=0)[:-1]
    ch = np.cumsum(hs, axis=0)[:-1]
    G_miss = G - gs.sum(axis=0)
    H_miss = H - hs.sum(axis=0)

    with np.errstate(invalid="ignore"):
        valid = (np.arange(m - 1)[:, None] < (n_present - 1)[None, :]) & (xs[1:] > xs[:-1])
    if not valid.any():
        return None

    best = None
    for default_left in (True, False):
        GL = cg + (G_miss if default_left else 0.0)
        HL = ch + (H_miss if default_left else 0.0)
        GR, HR = G - GL, H - HL
        gain = 0.5 * (_score(GL, HL, reg_lambda) + _score(GR, HR, reg_lambda) - parent)
        floor = min_child_weight * (1 - HESS_RTOL)
        ok = valid & (HL >= floor) & (HR >= floor)
        gain = np.where(ok, gain, -np.inf)
        if best is None:
            best = np.stack([gain, gain], axis=-1)
        best[..., 0 if default_left else 1] = gain

    top = best.max()
    if not np.isfinite(top) or top <= 0:
        return None
    tied = best >= top - GAIN_TIE_RTOL * max(1.0, abs(top))
    # Lowest threshold for a feature = smallest sorted position.
    for j in range(d):
        pos = np.nonzero(tied[:, j, :].any(axis=1))[0]
        if pos.size == 0:
            continue
        i = pos[0]
        default_left = bool(tied[i, j, 0])
        lo, hi = xs[i, j], xs[i + 1, j]
        thr = 0.5 * (lo + hi)
        if not lo < thr <= hi:
            thr = hi
        return Split(j, float(thr), default_left, float(best[i, j, 0 if default_left else 1]))
    return None


def _grow_tree(X, g, h, params: BoostParams) -> tuple[Tree, np.ndarray]:
    """Fit one tree to gradients; returns the tree and the leaf output per row."""
    tree = Tree()
    out = np.zeros(X.shape[0])
    lam, eta = params.reg_lambda, params.learning_rate

    def build(rows: np.ndarray, depth: int) -> int:
        gr, hr = g[rows], h[rows]
        split = None
        if depth < params.max_depth:
            split = find_best_split(X[rows], gr, hr, lam, params.min_child_weight)
        if split is None:
            w = -eta * gr.sum() / (hr.sum() + lam)
            out[rows] = w
            return tree.add(value=float(w))
        node = tree.add(split.feature, split.threshold, split.default_left, gain=split.gain)
        x = X[rows, split.feature]
        go_left = np.where(np.isnan(x), split.default_left, x < split.threshold)
        tree.left[node] = build(rows[go_left], depth + 1)
        tree.right[node] = build(rows[~go_left], depth + 1)
        return node

    build(np.arange(X.shape[0]), 0)
    return tree, out


@dataclass
class TreeEnsemble:
    feature_names: tuple
    n_classes: int
    params: BoostParams
    trees: list = field(default_factory=list)  # trees[round][class]

    @property
    def n_rounds(self) -> int:
        return len(self.trees)

    def decision_function(self, X, n_rounds: int | None = None) -> np.ndarray:
        M, _ = _as_matrix(X, self.feature_names)
        F = np.zeros((M.shape[0], self.n_classes))
        for rnd in self.trees[: n_rounds if n_rounds is not None else None]:
            for k, tree in enumerate(rnd):
                F[:, k] += tree.predict(M)
        return F

    def predict_proba(self, X, n_rounds: int | None = None) -> np.ndarray:
        return softmax(self.decision_function(X, n_rounds))

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.decision_function(X), axis=1)

    def splits(self):
        """(round, class, node, feature index, threshold, default_left, gain) for internal nodes."""
        for r, rnd in enumerate(self.trees):
            for k, t in enumerate(rnd):
                for i, f in enumerate(t.feature):
                    if f >= 0:
                        yield r, k, i, f, t.threshold[i], t.default_left[i], t.gain[i]


def train(X, y, params: BoostParams = BoostParams(), feature_names: Sequence[str] | None = None) -> TreeEnsemble:
    """Boosted trees with a softmax objective, one tree per class per round.

    Gradients p - y and hessians 2p(1-p) per class, as in the common
    multiclass boosting formulation. Prediction starts from zero scores.
    """
    M, names = _as_matrix(X, feature_names)
    y = np.asarray(y, dtype=int)
    if y.shape != (M.shape[0],):
        raise ValueError("labels must have one entry per row")
    if y.size and y.min() < 0:
        raise ValueError("labels must be 0..k-1")
    k = params.n_classes or (int(y.max()) + 1 if y.size else 1)
    if y.size and y.max() >= k:
        raise ValueError(f"label {y.max()} outside {k} classes")
    ens = TreeEnsemble(names, k, params)
    if M.shape[0] == 0:
        return ens
    Y = np.eye(k)[y]
    F = np.zeros((M.shape[0], k))
    for _ in range(params.rounds):
        P = softmax(F)
        grad = P - Y
        hess = np.maximum(2.0 * P * (1.0 - P), 1e-16)
        rnd = []
        for c in range(k):
            tree, out = _grow_tree(M, grad[:, c], hess[:, c], params)
            rnd.append(tree)
            F[:, c] += out
        ens.trees.append(rnd)
    return ens


def gain_importance(ens: TreeEnsemble) -> dict[str, float]:
    """Total split gain per feature over all trees; unused features get 0."""
    totals = np.zeros(len(ens.feature_names))
    for *_, f, _, _, gain in ens.splits():
        totals[f] += gain
    return dict(zip(ens.feature_names, totals.tolist()))


def permutation_importance(
    predict: Callable[[np.ndarray], np.ndarray],
    X,
    y,
    n_repeats: int = 10,
    seed: int = 0,
    feature_names: Sequence[str] | None = None,
) -> dict[str, float]:
    """Mean drop in accuracy (fraction) when one column is shuffled.

    ``predict`` maps a float matrix to labels. Shuffles use one seeded
    generator, visiting features in column order.
    """
    M, names = _as_matrix(X, feature_names)
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    base = float(np.mean(predict(M) == y))
    out = {}
    for j, name in enumerate(names):
        drops = []
        for _ in range(n_repeats):
            P = M.copy()
            P[:, j] = P[rng.permutation(M.shape[0]), j]
            drops.append(base - float(np.mean(predict(P) == y)))
        out[name] = float(np.mean(drops))
    return out


# -- serialization -----------------------------------------------------------


def dumps(ens: TreeEnsemble) -> str:
    """Versioned text form; floats are written with repr so round trips are exact."""
    lines = [
        f"dyskit-gbdt {SERIAL_VERSION}",
        "features " + json.dumps(list(ens.feature_names)),
        "params " + json.dumps(asdict(ens.params), sort_keys=True),
        f"n_classes {ens.n_classes}",
        f"rounds {ens.n_rounds}",
    ]
    for r, rnd in enumerate(ens.trees):
        for c, t in enumerate(rnd):
            lines.append(f"tree {r} {c} {len(t)}")
            for i in range(len(t)):
                if t.feature[i] < 0:
                    lines.append(f"{i} leaf {t.value[i]!r}")
                else:
                    d = LEFT if t.default_left[i] else RIGHT
                    lines.append(
                        f"{i} split {t.feature[i]} {t.threshold[i]!r} {d} {t.left[i]} {t.right[i]} {t.gain[i]!r}"
                    )
    return "\n".join(lines) + "\n"


def loads(text: str) -> TreeEnsemble:
    lines = iter(text.splitlines())

    def expect(key):
        line = next(lines)
        head, _, rest = line.partition(" ")
        if head != key:
            raise ValueError(f"expected {key!r}, got {line!r}")
        return rest

    version = int(expect("dyskit-gbdt"))
    if version != SERIAL_VERSION:
        raise ValueError(f"unsupported model version {version}")
    names = tuple(json.loads(expect("features")))
    params = BoostParams(**json.loads(expect("params")))
    k = int(expect("n_classes"))
    n_rounds = int(expect("rounds"))
    ens = TreeEnsemble(names, k, params)
    for r in range(n_rounds):
        rnd = []
        for c in range(k):
            rr, cc, n = map(int, expect("tree").split())
            if (rr, cc) != (r, c):
                raise ValueError(f"tree ({rr}, {cc}) out of order")
            t = Tree()
            for _ in range(n):
                parts = next(lines).split()
                if parts[1] == "leaf":
                    t.add(value=float(parts[2]))
                else:
                    t.add(int(parts[2]), float(parts[3]), parts[4] == LEFT, int(parts[5]), int(parts[6]),
                          gain=float(parts[7]))
            rnd.append(t)
        ens.trees.append(rnd)
    return ens


# -- randomized forest ---------------------------------------------------------


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int | None = None
    max_features: int | str | None = "sqrt"
    min_samples_split: int = 2
    seed: int = 0


def _gini(counts: np.ndarray) -> float:
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return float(1.0 - np.dot(p, p))


class RandomForest:
    """Extremely randomized trees with Gini impurity and majority vote.

    At each node a random subset of features is drawn and one uniform
    threshold between the node's min and max is tried per feature; the best
    impurity decrease wins. MISSING cells are replaced by the training
    median of their column.
    """

    def __init__(self, params: ForestParams = ForestParams()):
        self.params = params

    def fit(self, X, y, feature_names: Sequence[str] | None = None) -> "RandomForest":
        M, self.feature_names = _as_matrix(X, feature_names)
        y = np.asarray(y, dtype=int)
        self.n_classes = int(y.max()) + 1 if y.size else 1
        with np.errstate(all="ignore"):
            med = np.nanmedian(np.where(np.isnan(M).all(axis=0), 0.0, M), axis=0)
        self.medians = np.where(np.isnan(med), 0.0, med)
        M = self._impute(M)
        d = M.shape[1]
        mf = self.params.max_features
        if mf == "sqrt":
            k = max(1, int(np.sqrt(d)))
        elif mf is None:
            k = d
        else:
            k = max(1, min(int(mf), d))
        rng = np.random.default_rng(self.params.seed)
        self._importance = np.zeros(d)
        self.trees = []
        n = M.shape[0]
        for _ in range(self.params.n_trees):
            tree = Tree()
            self._build(tree, M, y, np.arange(n), 0, k, rng, n)
            self.trees.append(tree)
        total = self._importance.sum()
        self.importance_ = self._importance / total if total > 0 else self._importance
        return self

    def _impute(self, M: np.ndarray) -> np.ndarray:
        return np.where(np.isnan(M), self.medians[None, :], M)

    def _build(self, tree: Tree, M, y, rows, depth, k, rng, n_total) -> int:
        counts = np.bincount(y[rows], minlength=self.n_classes).astype(float)
        node_imp = _gini(counts)
        leaf = node_imp == 0 or rows.size < self.params.min_samples_split
        if self.params.max_depth is not None and depth >= self.params.max_depth:
            leaf = True
        best = None
        if not leaf:
            Xn = M[rows]
            lo, hi = Xn.min(axis=0), Xn.max(axis=0)
            usable = np.nonzero(hi > lo)[0]
            if usable.size:
                cand = rng.permutation(usable)[:k]
                for j in cand:
                    thr = rng.uniform(lo[j], hi[j])
                    go = Xn[:, j] < thr
                    if go.all() or not go.any():
                        continue
                    cl = np.bincount(y[rows[go]], minlength=self.n_classes).astype(float)
                    cr = counts - cl
                    decrease = node_imp - (cl.sum() * _gini(cl) + cr.sum() * _gini(cr)) / rows.size
                    if best is None or decrease > best[0]:
                        best = (decrease, j, thr, go)
        if best is None:
            # Leaves store the majority class (lowest label on ties).
            return tree.add(value=int(np.argmax(counts)))
        decrease, j, thr, go = best
        self._importance[j] += rows.size / n_total * decrease
        node = tree.add(int(j), float(thr), True)
        tree.left[node] = self._build(tree, M, y, rows[go], depth + 1, k, rng, n_total)
        tree.right[node] = self._build(tree, M, y, rows[~go], depth + 1, k, rng, n_total)
        return node

    def predict_proba(self, X) -> np.ndarray:
        M = self._impute(_as_matrix(X, self.feature_names)[0])
        votes = np.zeros((M.shape[0], self.n_classes))
        for tree in self.trees:
            cls = np.asarray(tree.value, dtype=int)[tree.apply(M)]
            votes[np.arange(M.shape[0]), cls] += 1
        return votes / max(len(self.trees), 1)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def feature_importance(self) -> dict[str, float]:
        return dict(zip(self.feature_names, self.importance_.tolist()))


def random_forest_train(X, y, params: ForestParams = ForestParams(), feature_names=None) -> RandomForest:
    return RandomForest(params).fit(X, y, feature_names)


# -- nearest neighbours --------------------------------------------------------


def knn_predict(train_X, train_y, query, k: int = 5, metric: str = "euclidean", weights: str = "uniform") -> np.ndarray:
    """Majority (or inverse-distance weighted) vote among the k nearest rows.

    Ties between classes go to the lowest label. Exact matches dominate a
    distance-weighted vote.
    """
    A = np.asarray(train_X, dtype=float)
    Q = np.asarray(query, dtype=float)
    if Q.ndim == 1:
        Q = Q[None, :]
    if np.isnan(A).any() or np.isnan(Q).any():
        raise SchemaError("kNN requires complete data; found MISSING values")
    if metric not in ("euclidean", "manhattan"):
        raise ValueError(f"unknown metric {metric!r}")
    if weights not in ("uniform", "distance"):
        raise ValueError(f"unknown weighting {weights!r}")
    y = np.asarray(train_y, dtype=int)
    k = min(k, A.shape[0])
    diff = Q[:, None, :] - A[None, :, :]
    D = np.sqrt((diff**2).sum(-1)) if metric == "euclidean" else np.abs(diff).sum(-1)
    n_classes = int(y.max()) + 1
    out = np.empty(Q.shape[0], dtype=int)
    for i, row in enumerate(D):
        nn = np.argsort(row, kind="stable")[:k]
        if weights == "uniform":
            w = np.ones(k)
        else:
            exact = row[nn] == 0
            w = exact.astype(float) if exact.any() else 1.0 / row[nn]
        out[i] = int(np.argmax(np.bincount(y[nn], weights=w, minlength=n_classes)))
    return out
