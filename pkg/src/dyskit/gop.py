"""Goodness-of-pronunciation scores from frame-level phoneme logits."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .stats import UndefinedCoefficientError, kendall_tau

METHODS = ("GMM", "NN", "DNN", "ENTROPY", "MARGIN", "MAXLOGIT", "LOGITMARGIN")
NORMALIZATIONS = ("NONE", "SCALE", "PRIOR")


class GopConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LogitMatrix:
    logits: np.ndarray
    classes: tuple
    frame_shift: float = 0.02

    def __post_init__(self):
        L = np.asarray(self.logits, dtype=float)
        if L.ndim != 2:
            raise ValueError("logits must be a frames x classes matrix")
        if len(self.classes) < 2:
            raise ValueError("need at least two classes")
        if L.shape[1] != len(self.classes):
            raise ValueError(f"{L.shape[1]} logit columns but {len(self.classes)} class labels")
        if not np.all(np.isfinite(L)):
            raise ValueError("logits must be finite")
        object.__setattr__(self, "logits", L)
        object.__setattr__(self, "classes", tuple(self.classes))

    @property
    def n_frames(self) -> int:
        return self.logits.shape[0]

    def index(self, label: str) -> int:
        try:
            return self.classes.index(label)
        except ValueError:
            raise KeyError(f"phoneme {label!r} is not in the class list") from None


@dataclass(frozen=True)
class PhoneSegment:
    label: str
    start: int
    end: int

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise ValueError(f"empty or negative frame range [{self.start}, {self.end})")


@dataclass(frozen=True)
class GopConfig:
    method: str = "GMM"
    normalization: str = "NONE"
    temperature: float = 1.0
    priors: Mapping[str, float] | None = field(default=None)

    def __post_init__(self):
        if self.method not in METHODS:
            raise GopConfigError(f"unknown GoP method {self.method!r}")
        if self.normalization not in NORMALIZATIONS:
            raise GopConfigError(f"unknown normalization {self.normalization!r}")
        if not self.temperature > 0:
            raise GopConfigError("temperature must be positive")
        if self.priors is not None:
            p = np.array(list(self.priors.values()), dtype=float)
            if abs(p.sum() - 1.0) > 1e-9:
                raise GopConfigError("priors must sum to 1")
        if self.normalization == "PRIOR" or self.method == "DNN":
            if self.priors is None:
                raise GopConfigError(f"{self.method}/{self.normalization} needs priors")
            if any(v <= 0 for v in self.priors.values()):
                raise GopConfigError("priors must be positive")

    def prior_vector(self, classes: Sequence[str]) -> np.ndarray:
        try:
            return np.array([self.priors[c] for c in classes], dtype=float)
        except KeyError as e:
            raise GopConfigError(f"no prior for class {e.args[0]!r}") from None


def softmax(L: np.ndarray) -> np.ndarray:
    z = L - L.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(L: np.ndarray) -> np.ndarray:
    z = L - L.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def normalize(L: LogitMatrix, cfg: GopConfig) -> LogitMatrix:
    """Apply the configured logit normalization.

    PRIOR subtracts log P(q) from each class column; SCALE divides by the
    temperature.
    """
    if cfg.normalization == "NONE":
        return L
    if cfg.normalization == "SCALE":
        return LogitMatrix(L.logits / cfg.temperature, L.classes, L.frame_shift)
    log_p = np.log(cfg.prior_vector(L.classes))
    return LogitMatrix(L.logits - log_p[None, :], L.classes, L.frame_shift)


def _others_max(v: np.ndarray, k: int) -> float:
    return float(np.max(np.delete(v, k)))


def score_phoneme(L: LogitMatrix, seg: PhoneSegment, cfg: GopConfig, normalized: bool = False) -> float:
    """GoP score of one phone segment under ``cfg``.

    Pass ``normalized=True`` when ``L`` has already been through
    ``normalize`` (as ``score_utterance`` does).
    """
    if seg.end > L.n_frames:
        raise ValueError(f"segment [{seg.start}, {seg.end}) exceeds {L.n_frames} frames")
    k = L.index(seg.label)
    if not normalized:
        L = normalize(L, cfg)
    X = L.logits[seg.start : seg.end]
    m = cfg.method
    if m == "GMM":
        return float(np.mean(log_softmax(X)[:, k]))
    if m == "MAXLOGIT":
        return float(np.mean(X[:, k]))
    if m == "LOGITMARGIN":
        mean_logit = X.mean(axis=0)
        return float(mean_logit[k] - _others_max(mean_logit, k))
    P = softmax(X).mean(axis=0)
    if m == "NN":
        logP = np.log(P)
        return float(logP[k] - logP.max())
    if m == "DNN":
        return float(P[k] / cfg.prior_vector(L.classes)[k])
    if m == "ENTROPY":
        nz = P[P > 0]
        return float(-np.sum(nz * np.log(nz)))
    return float(P[k] - _others_max(P, k))


def score_segments(L: LogitMatrix, segments: Sequence[PhoneSegment], cfg: GopConfig) -> list[float]:
    N = normalize(L, cfg)
    return [score_phoneme(N, s, cfg, normalized=True) for s in segments]


def score_utterance(L: LogitMatrix, segments: Sequence[PhoneSegment], cfg: GopConfig) -> float:
    """Unweighted mean of the per-phone scores."""
    if len(segments) == 0:
        raise ValueError("no phone segments to score")
    return float(np.mean(score_segments(L, segments, cfg)))


def severity_correlation(scores: Sequence[float], severities: Sequence[float]) -> float:
    """Kendall tau-b between utterance scores and severity; NaN when undefined."""
    try:
        return kendall_tau(scores, severities).coefficient
    except UndefinedCoefficientError:
        return float("nan")


def phoneme_ranking(
    records: Sequence[tuple[str, float, float]], min_support: int = 2, top_k: int | None = None
) -> list[tuple[str, float]]:
    """Per-label Kendall tau between phone scores and utterance severity.

    ``records`` holds (label, score, severity) triples. Labels with fewer
    than ``min_support`` records or an undefined tau are omitted. Sorted by
    tau ascending, so the phones whose scores fall fastest with severity
    come first.
    """
    by_label: dict[str, tuple[list, list]] = {}
    for label, score, sev in records:
        s, v = by_label.setdefault(label, ([], []))
        s.append(score)
        v.append(sev)
    ranked = []
    for label, (s, v) in by_label.items():
        if len(s) < min_support:
            continue
        tau = severity_correlation(s, v)
        if np.isfinite(tau):
            ranked.append((label, tau))
    ranked.sort(key=lambda t: (t[1], t[0]))
    return ranked[:top_k] if top_k is not None else ranked


# -- file formats --------------------------------------------------------------


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def write_logits(path, L: LogitMatrix) -> None:
    """Write a logit matrix as CSV (one row per frame) or .npy plus a JSON sidecar."""
    path = Path(path)
    if path.suffix == ".npy":
        np.save(path, L.logits)
    else:
        pd.DataFrame(L.logits, columns=list(L.classes)).to_csv(path, index=False, float_format="%.17g")
    header = {"classes": list(L.classes), "frame_shift": L.frame_shift}
    _sidecar(path).write_text(json.dumps(header, indent=2), encoding="utf-8")


def read_logits(path) -> LogitMatrix:
    path = Path(path)
    side = _sidecar(path)
    if not side.exists():
        raise FileNotFoundError(f"missing logit header {side}")
    header = json.loads(side.read_text(encoding="utf-8"))
    if path.suffix == ".npy":
        logits = np.load(path)
    else:
        logits = pd.read_csv(path, dtype=float, keep_default_na=False, float_precision="round_trip").to_numpy()
    return LogitMatrix(logits, tuple(header["classes"]), float(header.get("frame_shift", 0.02)))


def write_segments(path, segments: Sequence[PhoneSegment]) -> None:
    rows = [(s.label, s.start, s.end) for s in segments]
    pd.DataFrame(rows, columns=["label", "start_frame", "end_frame"]).to_csv(path, index=False)


def read_segments(path) -> list[PhoneSegment]:
    df = pd.read_csv(path, dtype={"label": str}, keep_default_na=False)
    missing = {"label", "start_frame", "end_frame"} - set(df.columns)
    if missing:
        raise ValueError(f"segment file lacks columns {sorted(missing)}")
    return [PhoneSegment(r.label, int(r.start_frame), int(r.end_frame)) for r in df.itertuples()]
