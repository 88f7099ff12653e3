"""Speaker-independent cross-validation and speaker-averaged metrics."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np
import pandas as pd

from .. import trees


def loso_splits(speakers: Sequence) -> Iterator[tuple[object, np.ndarray, np.ndarray]]:
    """Yield (speaker, train_idx, test_idx), one fold per speaker in sorted order."""
    spk = np.asarray(speakers, dtype=object)
    for s in sorted(set(spk.tolist()), key=str):
        test = np.nonzero(spk == s)[0]
        train = np.nonzero(spk != s)[0]
        if set(spk[train].tolist()) & set(spk[test].tolist()):
            raise AssertionError(f"speaker {s!r} leaks into its own training fold")
        yield s, train, test


def group_kfold(groups: Sequence, n_folds: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Deterministic group-disjoint folds: sorted groups dealt round-robin."""
    g = np.asarray(groups, dtype=object)
    uniq = sorted(set(g.tolist()), key=str)
    n_folds = min(n_folds, len(uniq))
    out = []
    for f in range(n_folds):
        held = set(uniq[f::n_folds])
        mask = np.array([x in held for x in g.tolist()])
        out.append((np.nonzero(~mask)[0], np.nonzero(mask)[0]))
    return out


def weighted_f1(y_true: Sequence[int], y_pred: Sequence[int]) -> float:
    """Support-weighted F1 (%) over the classes present in ``y_true``."""
    t = np.asarray(y_true)
    p = np.asarray(y_pred)
    if t.size == 0:
        raise ValueError("no predictions")
    total = 0.0
    for c in np.unique(t):
        tp = np.sum((t == c) & (p == c))
        fp = np.sum((t != c) & (p == c))
        fn = np.sum((t == c) & (p != c))
        f1 = 2 * tp / (2 * tp + fp + fn)
        total += np.sum(t == c) * f1
    return float(total / t.size * 100)


def speaker_f1(y_true, y_pred, speakers) -> dict:
    """Weighted F1 per speaker."""
    t, p, s = np.asarray(y_true), np.asarray(y_pred), np.asarray(speakers, dtype=object)
    return {spk: weighted_f1(t[s == spk], p[s == spk]) for spk in sorted(set(s.tolist()), key=str)}


def metrics(y_true, y_pred, speakers) -> dict:
    per = speaker_f1(y_true, y_pred, speakers)
    return {
        "speaker_f1": per,
        "mean_f1": float(np.mean(list(per.values()))),
        "accuracy": float(np.mean(np.asarray(y_true) == np.asarray(y_pred)) * 100),
    }


@dataclass
class CvReport:
    predictions: pd.DataFrame  # utt_id, speaker, language, true, pred
    speaker_f1: dict
    mean_f1: float
    accuracy: float
    language_f1: dict = field(default_factory=dict)
    chosen_params: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "mean_f1": self.mean_f1,
            "accuracy": self.accuracy,
            "language_f1": self.language_f1,
            "speaker_f1": self.speaker_f1,
            "chosen_params": self.chosen_params,
            "config": self.config,
        }


Trainer = Callable[[np.ndarray, np.ndarray, trees.BoostParams], trees.TreeEnsemble]


def _choose(X, y, speakers, grid, trainer, inner_folds) -> trees.BoostParams:
    """Grid point with the best mean speaker-averaged F1 over group folds."""
    if len(grid) == 1:
        return grid[0]
    folds = group_kfold(speakers, inner_folds)
    scores = []
    for params in grid:
        fold_scores = []
        for tr, te in folds:
            model = trainer(X[tr], y[tr], params)
            fold_scores.append(metrics(y[te], model.predict(X[te]), speakers[te])["mean_f1"])
        scores.append(np.mean(fold_scores))
    # First grid point wins ties.
    return grid[int(np.argmax(scores))]


def loso_cv(
    X: pd.DataFrame,
    y: Sequence[int],
    speakers: Sequence,
    grid: Sequence[trees.BoostParams],
    languages: Sequence | None = None,
    utt_ids: Sequence | None = None,
    trainer: Trainer = trees.train,
    inner_folds: int = 3,
    config: dict | None = None,
) -> CvReport:
    """Leave-one-speaker-out evaluation with nested grid selection.

    For each held-out speaker the grid point is chosen by group folds over
    the remaining speakers only, then refit on all of them.
    """
    y = np.asarray(y, dtype=int)
    spk = np.asarray(speakers, dtype=object)
    if len(set(spk.tolist())) < 2:
        raise ValueError("LOSO needs at least two speakers")
    if len(grid) == 0:
        raise ValueError("empty parameter grid")
    names = list(X.columns) if isinstance(X, pd.DataFrame) else None
    M = X.to_numpy(dtype=float) if isinstance(X, pd.DataFrame) else np.asarray(X, dtype=float)
    langs = np.asarray(languages, dtype=object) if languages is not None else np.full(len(y), "", dtype=object)
    ids = np.asarray(utt_ids, dtype=object) if utt_ids is not None else np.arange(len(y)).astype(object)

    pred = np.full(len(y), -1)
    chosen = {}
    for s, train_idx, test_idx in loso_splits(spk):
        params = _choose(M[train_idx], y[train_idx], spk[train_idx], list(grid), trainer, inner_folds)
        model = trainer(M[train_idx], y[train_idx], params)
        pred[test_idx] = model.predict(M[test_idx])
        chosen[str(s)] = asdict(params)
    assert (pred >= 0).all()

    m = metrics(y, pred, spk)
    per_lang = {}
    for lang in sorted(set(langs.tolist()), key=str):
        sel = langs == lang
        per_lang[str(lang)] = float(np.mean([m["speaker_f1"][s] for s in sorted(set(spk[sel].tolist()), key=str)]))
    table = pd.DataFrame({"utt_id": ids, "speaker": spk, "language": langs, "true": y, "pred": pred})
    cfg = dict(config or {})
    if names is not None:
        cfg.setdefault("features", names)
    return CvReport(
        table, {str(k): v for k, v in m["speaker_f1"].items()}, m["mean_f1"], m["accuracy"], per_lang, chosen, cfg
    )
