"""Utterance manifests and feature-table CSV files."""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd

MANIFEST_COLUMNS = ("utt_id", "speaker", "language", "severity", "sex", "wav", "textgrid", "phones", "logits", "segments")
KEY_COLUMNS = ("utt_id", "speaker", "language", "severity")
NA = "NA"
SEVERITIES = (0, 1, 2, 3)


class ManifestError(ValueError):
    pass


def validate_manifest(df: pd.DataFrame) -> pd.DataFrame:
    """Check columns and the per-speaker invariants; returns a normalized copy."""
    missing = [c for c in MANIFEST_COLUMNS[:5] if c not in df.columns]
    if missing:
        raise ManifestError(f"manifest lacks columns {missing}")
    df = df.copy()
    for c in MANIFEST_COLUMNS:
        if c not in df.columns:
            df[c] = ""
    df = df.fillna("")
    for c in ("utt_id", "speaker", "language", "sex"):
        df[c] = df[c].astype(str)
    dup = df.utt_id[df.utt_id.duplicated()].tolist()
    if dup:
        raise ManifestError(f"duplicate utterance ids {dup[:5]}")
    try:
        df["severity"] = df.severity.astype(int)
    except (TypeError, ValueError) as e:
        raise ManifestError(f"non-integer severity: {e}") from None
    bad = sorted(set(df.severity) - set(SEVERITIES))
    if bad:
        raise ManifestError(f"severity outside 0..3: {bad}")
    bad_sex = sorted(set(df.sex) - {"M", "F"})
    if bad_sex:
        raise ManifestError(f"sex must be M or F, got {bad_sex}")
    for col in ("language", "severity"):
        n = df.groupby("speaker")[col].nunique()
        if (n > 1).any():
            raise ManifestError(f"speakers with more than one {col}: {n[n > 1].index.tolist()}")
    return df[list(MANIFEST_COLUMNS) + [c for c in df.columns if c not in MANIFEST_COLUMNS]]


def read_manifest(path) -> pd.DataFrame:
    """Read a manifest CSV; relative file paths resolve against its directory."""
    path = Path(path)
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    df = validate_manifest(df)
    base = path.parent
    for c in ("wav", "textgrid", "phones", "logits", "segments"):
        df[c] = [str(base / p) if p and not os.path.isabs(p) else p for p in df[c]]
    return df


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def table_to_csv(df: pd.DataFrame) -> str:
    """CSV text with NaN written as "NA" and floats in round-trip precision."""
    return df.to_csv(index=False, na_rep=NA, float_format="%.17g", lineterminator="\n")


def write_table(path, df: pd.DataFrame) -> None:
    atomic_write_text(path, table_to_csv(df))


def read_table(path) -> pd.DataFrame:
    """Read a feature table; only "NA" (and empty cells) mean MISSING."""
    df = pd.read_csv(
        path, keep_default_na=False, na_values=[NA, ""], dtype={"utt_id": str, "speaker": str}, float_precision="round_trip"
    )
    for c in df.columns:
        if c in ("utt_id", "speaker", "language", "sex", "status", "error"):
            df[c] = df[c].fillna("").astype(str)
    return df


def feature_columns(df: pd.DataFrame) -> list[str]:
    """Columns that are neither keys nor bookkeeping."""
    skip = set(MANIFEST_COLUMNS) | {"error"}
    return [c for c in df.columns if c not in skip and np.issubdtype(df[c].dtype, np.number)]
