"""Healthy-reference distance transform, feature validation and table assembly."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from ..biomarkers import DOWN, EITHER, UP
from ..stats import UndefinedCoefficientError, kendall_tau, kruskal_wallis

ALPHA = 0.05
MODES = ("INTERSECTION", "UNION", "PROPOSED", "MONOLINGUAL")


class AssemblyError(ValueError):
    pass


class MissingStatsError(KeyError):
    pass


# -- distance transform --------------------------------------------------------


@dataclass(frozen=True)
class HealthyStats:
    """Mean and population std of each feature over healthy rows, per language."""

    mean: pd.DataFrame  # index language, columns features
    std: pd.DataFrame

    def get(self, language: str, feature: str) -> tuple[float, float]:
        try:
            mu = self.mean.at[language, feature]
            sd = self.std.at[language, feature]
        except KeyError:
            raise MissingStatsError(f"no healthy statistics for ({language!r}, {feature!r})") from None
        if np.isnan(mu) or np.isnan(sd):
            raise MissingStatsError(f"no healthy values for ({language!r}, {feature!r})")
        return float(mu), float(sd)


def healthy_stats(table: pd.DataFrame, features: Sequence[str], language_col="language", severity_col="severity"):
    healthy = table[table[severity_col] == 0]
    g = healthy.groupby(language_col)[list(features)]
    return HealthyStats(g.mean(), g.std(ddof=0))


def distance_value(f: float, mu: float, sd: float) -> float:
    """sd / |f - mu| outside the one-sd band, 1 inside; sd = 0 gives 1 at mu, else 0."""
    if np.isnan(f):
        return np.nan
    dev = abs(f - mu)
    if sd == 0:
        return 1.0 if dev == 0 else 0.0
    return sd / dev if dev > sd else 1.0


def distance_transform(
    table: pd.DataFrame, stats: HealthyStats, features: Sequence[str], language_col: str = "language"
) -> pd.DataFrame:
    """Replace each feature value by its closeness to the healthy mean of its language."""
    out = table.copy()
    for lang, idx in table.groupby(language_col).groups.items():
        for feat in features:
            col = table.loc[idx, feat].to_numpy(dtype=float)
            if np.all(np.isnan(col)):
                continue
            mu, sd = stats.get(lang, feat)
            dev = np.abs(col - mu)
            if sd == 0:
                vals = np.where(dev == 0, 1.0, 0.0)
            else:
                with np.errstate(divide="ignore"):
                    vals = np.where(dev > sd, sd / dev, 1.0)
            out.loc[idx, feat] = np.where(np.isnan(col), np.nan, vals)
    return out


# -- validation ----------------------------------------------------------------


@dataclass(frozen=True)
class ValidationRow:
    feature: str
    h: float
    h_p: float
    tau: float
    tau_p: float
    status: str  # "X", "TRIANGLE" or "O"
    note: str = ""


def validate_feature(values, labels, direction: str, alpha: float = ALPHA, name: str = "") -> ValidationRow:
    """Kruskal-Wallis across severity groups plus Kendall tau against severity.

    X when either p >= alpha; otherwise O when the sign of tau agrees with
    ``direction`` (EITHER always agrees), else TRIANGLE.
    """
    if direction not in (UP, DOWN, EITHER):
        raise ValueError(f"unknown direction {direction!r} for {name}")
    x = np.asarray(values, dtype=float)
    y = np.asarray(labels)
    ok = ~np.isnan(x)
    x, y = x[ok], y[ok]
    groups = [x[y == g] for g in np.unique(y)]
    if len(groups) < 2:
        return ValidationRow(name, np.nan, np.nan, np.nan, np.nan, "X", "fewer than two severity groups")
    try:
        tau = kendall_tau(x, y)
        kw = kruskal_wallis(groups)
    except (UndefinedCoefficientError, ValueError) as e:
        return ValidationRow(name, np.nan, np.nan, np.nan, np.nan, "X", str(e))
    if kw.p_value >= alpha or tau.p_value >= alpha:
        status = "X"
    elif direction == EITHER or (tau.coefficient > 0) == (direction == UP):
        status = "O"
    else:
        status = "TRIANGLE"
    return ValidationRow(name, kw.statistic, kw.p_value, tau.coefficient, tau.p_value, status)


def validate_features(
    table: pd.DataFrame, labels, directions: Mapping[str, str], features: Sequence[str] | None = None, alpha=ALPHA
) -> list[ValidationRow]:
    features = list(features) if features is not None else list(directions)
    missing = [f for f in features if f not in directions]
    if missing:
        raise KeyError(f"no expected direction for {missing}")
    y = np.asarray(labels)
    if len(np.unique(y)) < 2:
        raise ValueError("need at least two severity groups")
    return [validate_feature(table[f], y, directions[f], alpha, f) for f in features]


def validation_frame(rows: Sequence[ValidationRow]) -> pd.DataFrame:
    return pd.DataFrame([r.__dict__ for r in rows])


# -- assembly ------------------------------------------------------------------


@dataclass(frozen=True)
class AssembledTable:
    table: pd.DataFrame  # key columns + feature columns
    features: tuple
    mode: str

    def X(self) -> pd.DataFrame:
        return self.table[list(self.features)]


def assemble(
    feature_sets: Mapping[str, Sequence[str]],
    table: pd.DataFrame,
    mode: str,
    language: str | None = None,
    keys: Sequence[str] = ("utt_id", "speaker", "language", "severity"),
) -> AssembledTable:
    """Build the training table for one experiment mode.

    INTERSECTION keeps features chosen in every language; UNION keeps every
    chosen feature with all values; PROPOSED keeps the union but blanks a
    cell when the feature is not chosen for that row's language;
    MONOLINGUAL keeps one language's rows and features.
    """
    if mode not in MODES:
        raise AssemblyError(f"unknown mode {mode!r}")
    langs = sorted(feature_sets)
    if not langs:
        raise AssemblyError("no feature sets given")
    empty = [lang for lang in langs if not feature_sets[lang]]
    if empty:
        raise AssemblyError(f"empty feature set for languages {empty}")
    keys = [k for k in keys if k in table.columns]

    if mode == "MONOLINGUAL":
        if language is None:
            raise AssemblyError("MONOLINGUAL mode needs a language")
        if language not in feature_sets:
            raise AssemblyError(f"no feature set for language {language!r}")
        feats = list(dict.fromkeys(feature_sets[language]))
        rows = table[table.language == language]
        return AssembledTable(rows[keys + feats].reset_index(drop=True), tuple(feats), mode)

    table = table[table.language.isin(langs)]
    union = sorted(set().union(*map(set, feature_sets.values())))
    if mode == "INTERSECTION":
        feats = sorted(set.intersection(*map(set, feature_sets.values())))
        if not feats:
            culprits = _disjoint_languages(feature_sets)
            raise AssemblyError(f"empty feature intersection across languages {culprits}")
        # Rows are kept even when a cell is MISSING at extraction time, so
        # every mode is evaluated on the same utterances.
        return AssembledTable(table[keys + feats].reset_index(drop=True), tuple(feats), mode)

    out = table[keys + union].copy()
    if mode == "PROPOSED":
        for lang in langs:
            drop = [f for f in union if f not in set(feature_sets[lang])]
            out.loc[out.language == lang, drop] = np.nan
    return AssembledTable(out.reset_index(drop=True), tuple(union), mode)


def _disjoint_languages(feature_sets: Mapping[str, Sequence[str]]) -> list[str]:
    """Languages whose sets share nothing with the running intersection of the others."""
    langs = sorted(feature_sets)
    for i, lang in enumerate(langs):
        rest = [set(feature_sets[o]) for o in langs if o != lang]
        common = set.intersection(*rest) if rest else set()
        if common and not (common & set(feature_sets[lang])):
            return [lang]
    return langs


def membership_mask(feature_sets: Mapping[str, Sequence[str]], languages: Sequence[str], features: Sequence[str]):
    """Boolean matrix: True where the feature belongs to the row's language set."""
    return np.array([[f in set(feature_sets.get(lang, ())) for f in features] for lang in languages])
