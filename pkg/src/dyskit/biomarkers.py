"""Clinical voice biomarkers for one utterance.

Every feature is a float; NaN marks a MISSING (uncomputable) value. The 35
feature names and their expected change with increasing severity are fixed
in ``REGISTRY``.
"""

from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np

from . import signal as dsp
from .alignment import (
    CONSONANT,
    CORNERS,
    GAP,
    SILENCE,
    VOWEL,
    Alignment,
    LanguageInventory,
    PhoneSequence,
    align_sequences,
    syllable_count,
)

MISSING = float("nan")

UP, DOWN, EITHER = "UP", "DOWN", "EITHER"

# (name, group, expected direction)
REGISTRY: tuple = (
    ("jitter", "voice_quality", UP),
    ("ppq", "voice_quality", UP),
    ("shimmer", "voice_quality", UP),
    ("apq", "voice_quality", UP),
    ("hnr", "voice_quality", DOWN),
    ("cpp", "voice_quality", DOWN),
    ("n_voice_breaks", "voice_quality", UP),
    ("pct_voice_breaks", "voice_quality", UP),
    ("crr", "phoneme_accuracy", DOWN),
    ("vrr", "phoneme_accuracy", DOWN),
    ("prr", "phoneme_accuracy", DOWN),
    ("vsa_tri", "vowel_distortion", DOWN),
    ("vsa_quad", "vowel_distortion", DOWN),
    ("fcr", "vowel_distortion", UP),
    ("vai", "vowel_distortion", DOWN),
    ("f2_ratio", "vowel_distortion", DOWN),
    ("speaking_rate", "fluency", DOWN),
    ("articulation_rate", "fluency", DOWN),
    ("n_pauses", "fluency", UP),
    ("avg_pause_dur", "fluency", UP),
    ("f0_mean", "f0", EITHER),
    ("f0_median", "f0", EITHER),
    ("f0_std", "f0", DOWN),
    ("f0_min", "f0", EITHER),
    ("f0_max", "f0", EITHER),
    ("energy_mean", "energy", DOWN),
    ("energy_median", "energy", DOWN),
    ("energy_std", "energy", DOWN),
    ("energy_min", "energy", EITHER),
    ("energy_max", "energy", EITHER),
    ("pct_v", "rhythm", UP),
    ("varco_v", "rhythm", EITHER),
    ("varco_c", "rhythm", EITHER),
    ("npvi_v", "rhythm", EITHER),
    ("npvi_c", "rhythm", EITHER),
)

FEATURE_NAMES: tuple = tuple(name for name, _, _ in REGISTRY)
FEATURE_GROUPS: dict = {name: group for name, group, _ in REGISTRY}
EXPECTED_DIRECTION: dict = {name: d for name, _, d in REGISTRY}

# Inter-pulse interval above which a gap counts as a voice break: 1.25 / 70 Hz.
VOICE_BREAK_S = 0.01786
PAUSE_THRESHOLD_S = 0.2
# Successive periods (amplitudes) further apart than these ratios are not
# compared: they mark onsets, offsets or tracking errors, not perturbation.
MAX_PERIOD_FACTOR = 1.3
MAX_AMPLITUDE_FACTOR = 1.6


def empty_vector() -> dict[str, float]:
    return {name: MISSING for name in FEATURE_NAMES}


def is_missing(value) -> bool:
    return value is None or (isinstance(value, float) and math.isnan(value))


# -- voice quality -------------------------------------------------------------


def abs_jitter(periods: Sequence[float]) -> float:
    T = np.asarray(periods, dtype=float)
    if T.size < 2:
        return MISSING
    return float(np.mean(np.abs(np.diff(T))))


def abs_ppq(periods: Sequence[float]) -> float:
    """Five-point period perturbation quotient (absolute)."""
    T = np.asarray(periods, dtype=float)
    n = T.size
    if n < 5:
        return MISSING
    smooth = np.convolve(T, np.ones(5) / 5.0, mode="valid")
    return float(np.sum(np.abs(T[2 : n - 2] - smooth)) / (n - 4))


# Shimmer/APQ are the same operators applied to amplitudes.
abs_shimmer = abs_jitter
abs_apq = abs_ppq


def relative_jitter(periods: Sequence[float]) -> float:
    """absJitter as a percentage of the mean period."""
    v = abs_jitter(periods)
    return MISSING if is_missing(v) else v / float(np.mean(periods)) * 100


def relative_ppq(periods: Sequence[float]) -> float:
    v = abs_ppq(periods)
    return MISSING if is_missing(v) else v / float(np.mean(periods)) * 100


relative_shimmer = relative_jitter
relative_apq = relative_ppq


def _pooled(chunks: list, fn, lost_terms: int) -> float:
    """Apply a perturbation measure per run and pool by number of terms."""
    total, count = 0.0, 0
    for c in chunks:
        v = fn(c)
        if is_missing(v):
            continue
        terms = len(c) - lost_terms
        total += v * terms
        count += terms
    return total / count if count else MISSING


def _runs_where(values: np.ndarray, linked: np.ndarray) -> list:
    """Split ``values`` into runs; ``linked[i]`` joins values[i] and values[i + 1]."""
    runs, start = [], 0
    for i, ok in enumerate(linked):
        if not ok:
            runs.append(values[start : i + 1])
            start = i + 1
    runs.append(values[start:])
    return [r for r in runs if r.size]


def _chunks(pulses: dsp.PulseTrain, max_period: float):
    """Runs of periods and of amplitudes over which perturbation is measured.

    A period longer than ``max_period`` is a voice break and belongs to no
    run. Successive periods differing by more than MAX_PERIOD_FACTOR, or
    amplitudes by more than MAX_AMPLITUDE_FACTOR, start a new run.
    """
    periods = pulses.periods
    amps = pulses.amplitudes
    good = periods <= max_period
    linked = good[:-1] & good[1:] & _ratio_ok(periods, MAX_PERIOD_FACTOR)
    per_runs = [periods[r] for r in _runs_where(np.arange(periods.size), linked) if good[r].all()]
    amp_linked = good & _ratio_ok(amps, MAX_AMPLITUDE_FACTOR)
    amp_runs = [r for r in _runs_where(amps, amp_linked) if r.size >= 2]
    return per_runs, amp_runs


def _ratio_ok(x: np.ndarray, factor: float) -> np.ndarray:
    a, b = x[:-1], x[1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.maximum(a, b) <= factor * np.minimum(a, b)


def voice_quality(
    pulses: dsp.PulseTrain,
    contour: dsp.PitchContour | None = None,
    buf: dsp.AudioBuffer | None = None,
    break_s: float = VOICE_BREAK_S,
) -> dict[str, float]:
    """Jitter, PPQ, shimmer, APQ (all %), HNR, CPP (dB) and voice breaks.

    Perturbation measures are computed over runs of pulses not separated by
    a voice break, normalized by the mean period (or amplitude). HNR and
    CPP need ``buf`` and ``contour``; without them they are MISSING.
    """
    out = {k: MISSING for k in ("jitter", "ppq", "shimmer", "apq", "hnr", "cpp", "n_voice_breaks", "pct_voice_breaks")}
    per_chunks, amp_chunks = _chunks(pulses, break_s)
    all_periods = np.concatenate(per_chunks) if per_chunks else np.empty(0)
    all_amps = np.concatenate(amp_chunks) if amp_chunks else np.empty(0)
    if all_periods.size:
        mean_T = float(all_periods.mean())
        j = _pooled(per_chunks, abs_jitter, 1)
        p = _pooled(per_chunks, abs_ppq, 4)
        out["jitter"] = j / mean_T * 100 if not is_missing(j) else MISSING
        out["ppq"] = p / mean_T * 100 if not is_missing(p) else MISSING
    if all_amps.size:
        mean_A = float(all_amps.mean())
        if mean_A > 0:
            s = _pooled(amp_chunks, abs_shimmer, 1)
            a = _pooled(amp_chunks, abs_apq, 4)
            out["shimmer"] = s / mean_A * 100 if not is_missing(s) else MISSING
            out["apq"] = a / mean_A * 100 if not is_missing(a) else MISSING

    gaps = pulses.periods[pulses.periods > break_s]
    out["n_voice_breaks"] = float(gaps.size)
    out["pct_voice_breaks"] = float(gaps.sum() / pulses.total_duration * 100) if pulses.total_duration > 0 else MISSING

    if buf is not None and contour is not None:
        segs = dsp.voiced_segments(contour)
        frames = [dsp.frame_hnr(buf, s, contour.floor_hz, contour.ceiling_hz) for s in segs]
        frames = np.concatenate(frames) if frames else np.empty(0)
        if frames.size:
            out["hnr"] = float(frames.mean())
        try:
            out["cpp"] = dsp.cpp(buf, segs, contour.floor_hz, contour.ceiling_hz)
        except dsp.UndefinedResultError:
            pass
    return out


# -- pronunciation -----------------------------------------------------------


def phoneme_accuracy(pairs: Sequence[tuple[str, str]], inventory: LanguageInventory) -> dict[str, float]:
    """CRR, VRR and PRR (%) from aligned (canonical, decoded) pairs.

    Only canonical consonants and vowels are scored; a pair is correct when
    both labels are identical.
    """
    hits = {CONSONANT: 0, VOWEL: 0}
    totals = {CONSONANT: 0, VOWEL: 0}
    for canon, dec in pairs:
        if canon == GAP:
            continue
        cls = inventory.classify(canon)
        if cls not in totals:
            continue
        totals[cls] += 1
        if dec == canon:
            hits[cls] += 1

    def rate(h, t):
        return h / t * 100 if t else MISSING

    return {
        "crr": rate(hits[CONSONANT], totals[CONSONANT]),
        "vrr": rate(hits[VOWEL], totals[VOWEL]),
        "prr": rate(hits[CONSONANT] + hits[VOWEL], totals[CONSONANT] + totals[VOWEL]),
    }


# -- vowel space ---------------------------------------------------------------


def polygon_area(points: Sequence[tuple[float, float]]) -> float:
    """Shoelace area of a simple polygon given as (F1, F2) vertices."""
    p = np.asarray(points, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return float(0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def vowel_space(corners: Mapping[str, tuple[float, float] | None]) -> dict[str, float]:
    """VSA (triangle and quadrilateral), FCR, VAI and F2-ratio from corner formants.

    ``corners`` maps 'i', 'u', 'a' and optionally 'ae' to (F1, F2) in Hz.
    """
    out = {k: MISSING for k in ("vsa_tri", "vsa_quad", "fcr", "vai", "f2_ratio")}

    def get(c):
        v = corners.get(c)
        if v is None or any(is_missing(float(z)) for z in v):
            return None
        return float(v[0]), float(v[1])

    i, u, a, ae = get("i"), get("u"), get("a"), get("ae")
    if i and u and a:
        F1i, F2i = i
        F1u, F2u = u
        F1a, F2a = a
        out["vsa_tri"] = 0.5 * abs(F1i * (F2a - F2u) + F1a * (F2u - F2i) + F1u * (F2i - F2a))
        out["fcr"] = (F2u + F2a + F1i + F1u) / (F2i + F1a)
        out["vai"] = (F2i + F1a) / (F2u + F2a + F1i + F1u)
        out["f2_ratio"] = F2i / F2u
        if ae:
            F1ae, F2ae = ae
            out["vsa_quad"] = 0.5 * abs(
                (F2i * F1ae + F2ae * F1a + F2a * F1u + F2u * F1i)
                - (F1i * F2ae + F1ae * F2a + F1a * F2u + F1u * F2i)
            )
    return out


def corner_formants(
    buf: dsp.AudioBuffer,
    alignment: Alignment,
    inventory: LanguageInventory,
    max_formant_hz: float = 5000.0,
    tier: str | None = None,
) -> dict[str, tuple[float, float] | None]:
    """Mean (F1, F2) at the center of each corner-vowel interval."""
    found: dict[str, list] = {c: [] for c in CORNERS}
    for iv in alignment.tier(tier):
        corner = inventory.corner_of(iv.label)
        if corner is None:
            continue
        if iv.t1 > buf.duration + 1e-9:
            continue
        est = dsp.formants(buf, (iv.t0, iv.t1), max_formant_hz)
        if np.isfinite(est.f1) and np.isfinite(est.f2):
            found[corner].append((est.f1, est.f2))
    return {c: (tuple(np.mean(v, axis=0)) if v else None) for c, v in found.items()}


def impute_corners(utterance, speaker):
    """Fill corners missing from an utterance with speaker-level means."""
    speaker = speaker or {}
    return {c: utterance.get(c) if utterance.get(c) is not None else speaker.get(c) for c in CORNERS}


# -- prosody -------------------------------------------------------------------


def _runs(alignment: Alignment, inventory: LanguageInventory, tier=None):
    """Merge consecutive intervals of the same class into (class, t0, t1) runs."""
    runs = []
    for iv in alignment.tier(tier):
        cls = inventory.classify(iv.label)
        if runs and runs[-1][0] == cls and abs(runs[-1][2] - iv.t0) < 1e-9:
            runs[-1] = (cls, runs[-1][1], iv.t1)
        else:
            runs.append((cls, iv.t0, iv.t1))
    return runs


def fluency(
    alignment: Alignment,
    inventory: LanguageInventory,
    pause_threshold: float = PAUSE_THRESHOLD_S,
    tier: str | None = None,
) -> dict[str, float]:
    """Speaking/articulation rate (syll/s), pause count and mean pause duration.

    Rates are taken over the span from the first to the last non-silent
    phone; leading and trailing silence is not a pause.
    """
    out = {k: MISSING for k in ("speaking_rate", "articulation_rate", "n_pauses", "avg_pause_dur")}
    runs = _runs(alignment, inventory, tier)
    speech = [r for r in runs if r[0] != SILENCE]
    if not speech:
        return out
    span0, span1 = speech[0][1], speech[-1][2]
    pauses = [r[2] - r[1] for r in runs if r[0] == SILENCE and r[1] >= span0 and r[2] <= span1]
    pauses = [p for p in pauses if p >= pause_threshold - 1e-9]
    total = span1 - span0
    articulation = total - sum(pauses)
    n_syll = syllable_count(alignment, inventory, tier)
    if total > 0:
        out["speaking_rate"] = n_syll / total
    if articulation > 0:
        out["articulation_rate"] = n_syll / articulation
    out["n_pauses"] = float(len(pauses))
    if pauses:
        out["avg_pause_dur"] = float(np.mean(pauses))
    return out


def _five_stats(values: np.ndarray, prefix: str) -> dict[str, float]:
    names = [f"{prefix}_{s}" for s in ("mean", "median", "std", "min", "max")]
    v = values[values > 0]
    if v.size == 0:
        return {n: MISSING for n in names}
    stats = (v.mean(), np.median(v), v.std(), v.min(), v.max())
    return {n: float(s) for n, s in zip(names, stats)}


def pitch_stats(contour: dsp.PitchContour) -> dict[str, float]:
    """Mean, median, population std, min and max over voiced frames."""
    return _five_stats(np.asarray(contour.f0, dtype=float), "f0")


def energy_stats(contour: dsp.EnergyContour) -> dict[str, float]:
    return _five_stats(np.asarray(contour.energy, dtype=float), "energy")


def varco(durations: Sequence[float]) -> float:
    d = np.asarray(durations, dtype=float)
    if d.size < 2 or d.mean() <= 0:
        return MISSING
    return float(d.std() / d.mean() * 100)


def rpvi(durations: Sequence[float]) -> float:
    d = np.asarray(durations, dtype=float)
    if d.size < 2:
        return MISSING
    return float(np.mean(np.abs(np.diff(d))))


def npvi(durations: Sequence[float]) -> float:
    d = np.asarray(durations, dtype=float)
    if d.size < 2:
        return MISSING
    return float(100 * np.mean(np.abs(np.diff(d)) / ((d[:-1] + d[1:]) / 2)))


def rhythm(alignment: Alignment, inventory: LanguageInventory, tier: str | None = None) -> dict[str, float]:
    """%V (fraction), VarcoV/C and nPVI-V/C from merged vocalic/consonantal runs."""
    runs = _runs(alignment, inventory, tier)
    v = [r[2] - r[1] for r in runs if r[0] == VOWEL]
    c = [r[2] - r[1] for r in runs if r[0] == CONSONANT]
    total = sum(v) + sum(c)
    return {
        "pct_v": sum(v) / total if total > 0 else MISSING,
        "varco_v": varco(v),
        "varco_c": varco(c),
        "npvi_v": npvi(v),
        "npvi_c": npvi(c),
    }


# -- full extraction -----------------------------------------------------------


def extract_all(
    buf: dsp.AudioBuffer,
    alignment: Alignment,
    inventory: LanguageInventory,
    decoded: Sequence[str] | None = None,
    sex: str = "M",
    speaker_corners: Mapping | None = None,
    utterance_corners: Mapping | None = None,
    floor_hz: float = dsp.DEFAULT_FLOOR_HZ,
    ceiling_hz: float = dsp.DEFAULT_CEILING_HZ,
    pause_threshold: float = PAUSE_THRESHOLD_S,
) -> dict[str, float]:
    """All 35 registry features for one utterance; uncomputable ones are NaN.

    ``decoded`` is the recognizer's phone sequence; without it the phoneme
    accuracy rates are MISSING. Corner-vowel formants missing from the
    utterance are taken from ``speaker_corners`` when given.
    """
    fv = empty_vector()

    try:
        contour = dsp.pitch_contour(buf, floor_hz, ceiling_hz)
    except dsp.EmptyContourError:
        contour = None
    if contour is not None and np.any(contour.voiced):
        fv.update(pitch_stats(contour))
        try:
            pulses = dsp.pulse_train(buf, contour)
        except dsp.NoPulsesError:
            pulses = None
        if pulses is not None:
            fv.update(voice_quality(pulses, contour, buf))

    fv.update(energy_stats(dsp.energy_contour(buf)))

    if decoded is not None:
        canonical = PhoneSequence.from_alignment(alignment, inventory)
        if len(canonical) and len(decoded):
            fv.update(phoneme_accuracy(align_sequences(canonical, list(decoded)), inventory))

    if utterance_corners is None:
        utterance_corners = corner_formants(buf, alignment, inventory, dsp.MAX_FORMANT_HZ.get(sex, 5000.0))
    fv.update(vowel_space(impute_corners(utterance_corners, speaker_corners)))
    fv.update(fluency(alignment, inventory, pause_threshold))
    fv.update(rhythm(alignment, inventory))
    for k, v in fv.items():
        if not is_missing(v) and not np.isfinite(v):
            fv[k] = MISSING
    return fv
