"""Seeded synthetic corpora with severity-controlled speech properties.

``synth_corpus`` writes audio, TextGrids, decoded phones, logits and a
manifest whose measurable properties follow the requested effect sizes.
``synth_feature_table`` skips audio entirely and draws a feature table
with planted universal, language-specific, anti-directional and noise
features, for experiments that only need the table.
"""

from __future__ import annotations

import io
import json
import wave
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
from scipy import signal as sps

from ..alignment import BUILTIN_INVENTORIES, CORNERS, alignment_from_phones, serialize_textgrid
from ..biomarkers import EITHER, UP
from ..gop import LogitMatrix, PhoneSegment
from .dataset import atomic_write_bytes, atomic_write_text, table_to_csv

FRAME_SHIFT = 0.02
# Male corner-vowel targets (F1, F2) in Hz; female values are scaled up.
CORNER_FORMANTS = {"i": (300.0, 2300.0), "u": (320.0, 850.0), "a": (750.0, 1250.0), "ae": (650.0, 1750.0)}
FEMALE_FORMANT_SCALE = 1.15
F3_HZ = 3000.0
BANDWIDTHS = (80.0, 100.0, 150.0)
# Mean |N(0,1) - N(0,1)| = 2/sqrt(pi); converts a target mean absolute
# successive difference to a per-cycle standard deviation.
_MAD_IID = 2.0 / np.sqrt(np.pi)


class SynthSpecError(ValueError):
    pass


@dataclass(frozen=True)
class SynthSpec:
    """Per-severity effect sizes (index = severity 0..3)."""

    languages: tuple = ("en", "ko", "ta")
    speakers_per_severity: int = 2
    utterances_per_speaker: int = 2
    syllables: int = 8
    sample_rate: int = 16000
    f0_hz: dict = field(default_factory=lambda: {"M": 120.0, "F": 210.0})
    jitter_pct: tuple = (0.2, 1.0, 2.0, 3.5)
    shimmer_pct: tuple = (1.0, 4.0, 7.0, 10.0)
    substitution_rate: tuple = (0.0, 0.15, 0.3, 0.5)
    speaking_rate: tuple = (4.0, 3.4, 2.8, 2.2)  # syllables per second
    n_pauses: tuple = (1, 1, 2, 3)
    pause_s: tuple = (0.22, 0.3, 0.45, 0.6)
    vowel_centralization: tuple = (0.0, 0.1, 0.2, 0.3)
    target_margin: tuple = (4.0, 2.5, 1.0, -0.5)
    margin_spread: float = 0.3
    edge_silence_s: float = 0.15
    max_utterance_s: float = 20.0
    seed: int = 0

    def __post_init__(self):
        for name in ("jitter_pct", "shimmer_pct", "substitution_rate", "speaking_rate", "n_pauses", "pause_s",
                     "vowel_centralization", "target_margin"):
            v = getattr(self, name)
            if len(v) != 4:
                raise SynthSpecError(f"{name} needs one value per severity 0..3")
            object.__setattr__(self, name, tuple(float(x) for x in v))
        if not self.languages:
            raise SynthSpecError("no languages")
        unknown = [lang for lang in self.languages if lang not in BUILTIN_INVENTORIES]
        if unknown:
            raise SynthSpecError(f"no built-in inventory for {unknown}")
        if self.speakers_per_severity < 1 or self.utterances_per_speaker < 1 or self.syllables < 2:
            raise SynthSpecError("need at least one speaker, one utterance and two syllables")
        if any(r < 0 or r > 1 for r in self.substitution_rate):
            raise SynthSpecError("substitution rates must lie in [0, 1]")
        if any(r <= 0 for r in self.speaking_rate):
            raise SynthSpecError("speaking rates must be positive")
        if any(x < 0 for x in self.jitter_pct + self.shimmer_pct + self.pause_s + self.n_pauses):
            raise SynthSpecError("perturbations and pauses must be non-negative")
        if any(x >= 50 for x in self.jitter_pct + self.shimmer_pct):
            raise SynthSpecError("jitter and shimmer must stay below 50%")
        if any(not 0 <= c < 1 for c in self.vowel_centralization):
            raise SynthSpecError("vowel centralization must lie in [0, 1)")
        if any(n > self.syllables - 1 for n in self.n_pauses):
            raise SynthSpecError("more pauses than syllable boundaries")
        for sev in range(4):
            dur = self.utterance_duration(sev)
            if dur > self.max_utterance_s:
                raise SynthSpecError(
                    f"severity {sev} utterances last {dur:.2f} s, longer than max_utterance_s={self.max_utterance_s}"
                )
        if self.sample_rate < 2 * F3_HZ * 1.2:
            raise SynthSpecError("sample rate too low for the formant model")

    def utterance_duration(self, severity: int) -> float:
        speech = self.syllables / self.speaking_rate[severity]
        return speech + self.n_pauses[severity] * self.pause_s[severity] + 2 * self.edge_silence_s

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        d = dict(d)
        for k, v in list(d.items()):
            if isinstance(v, list):
                d[k] = tuple(v)
        try:
            return cls(**d)
        except TypeError as e:
            raise SynthSpecError(str(e)) from None


# -- waveform pieces -----------------------------------------------------------


def perturbed_sequence(n: int, base: float, rel_mad_pct: float, rng: np.random.Generator) -> np.ndarray:
    """n values around ``base`` whose mean |successive difference| / mean is exactly the target (%)."""
    if n < 2 or rel_mad_pct == 0:
        return np.full(n, base)
    eps = rng.standard_normal(n)
    seq = base * (1 + eps * rel_mad_pct / 100 / _MAD_IID)
    # Rescale deviations so the realized measure hits the target exactly.
    for _ in range(20):
        realized = np.mean(np.abs(np.diff(seq))) / seq.mean() * 100
        dev = seq - seq.mean()
        seq = seq.mean() + dev * (rel_mad_pct / realized)
        if abs(realized - rel_mad_pct) < 1e-9 * rel_mad_pct:
            break
    return seq


def _rosenberg(phase: np.ndarray) -> np.ndarray:
    """Rosenberg glottal flow over one cycle, closed phase first.

    The flow closes exactly at the end of the cycle, so excitation instants
    fall on cycle boundaries and their spacing equals the cycle periods.
    """
    closed, open_end = 0.44, 0.84
    out = np.zeros_like(phase)
    rise = (phase >= closed) & (phase < open_end)
    out[rise] = 0.5 * (1 - np.cos(np.pi * (phase[rise] - closed) / (open_end - closed)))
    fall = phase >= open_end
    out[fall] = np.cos(0.5 * np.pi * (phase[fall] - open_end) / (1.0 - open_end))
    return out


def glottal_source(periods: np.ndarray, amplitudes: np.ndarray, sr: int) -> np.ndarray:
    """Concatenated Rosenberg pulses with per-cycle period and amplitude, differentiated.

    The sign is flipped so the sharp closure excitation is the positive
    peak of each cycle and sits on the cycle boundary.
    """
    edges = np.concatenate(([0.0], np.cumsum(periods)))
    n = int(np.ceil(edges[-1] * sr))
    t = np.arange(n) / sr
    k = np.clip(np.searchsorted(edges, t, side="right") - 1, 0, len(periods) - 1)
    phase = (t - edges[k]) / periods[k]
    flow = amplitudes[k] * _rosenberg(phase)
    return -np.diff(flow, prepend=0.0)


def resonate(x: np.ndarray, freqs: Sequence[float], bws: Sequence[float], sr: int) -> np.ndarray:
    """Cascade of second-order resonators with unit DC gain."""
    y = x
    for f, bw in zip(freqs, bws):
        r = np.exp(-np.pi * bw / sr)
        a = [1.0, -2 * r * np.cos(2 * np.pi * f / sr), r * r]
        y = sps.lfilter([sum(a)], a, y)
    return y


def _noise_burst(n: int, sr: int, rng: np.random.Generator) -> np.ndarray:
    b, a = sps.butter(4, [2000 / (sr / 2), 6000 / (sr / 2)], btype="band")
    return sps.lfilter(b, a, rng.standard_normal(n))


# -- utterances ----------------------------------------------------------------


@dataclass
class Utterance:
    samples: np.ndarray
    phones: list  # (t0, t1, label)
    decoded: list
    logits: LogitMatrix
    segments: list
    truth: dict


def _labels(lang: str):
    inv = BUILTIN_INVENTORIES[lang]
    consonants = sorted(k for k, v in inv.classes.items() if v == "consonant")
    vowels = sorted(k for k, v in inv.classes.items() if v == "vowel")
    return inv, consonants, vowels


def synth_utterance(
    spec: SynthSpec, lang: str, severity: int, sex: str, rng: np.random.Generator, speaker_offsets: dict
) -> Utterance:
    sr = spec.sample_rate
    inv, consonants, vowels = _labels(lang)
    corner_labels = [inv.corner_vowels[c] for c in CORNERS]
    n_syl = spec.syllables
    syl = 1.0 / (spec.speaking_rate[severity] * speaker_offsets["rate"])
    cons_dur, vow_dur = 0.35 * syl, 0.65 * syl
    n_pauses = int(spec.n_pauses[severity])
    pause_after = set(np.linspace(0, n_syl - 1, n_pauses + 2)[1:-1].round().astype(int).tolist()) if n_pauses else set()
    # Spread the pauses over distinct syllable boundaries.
    while len(pause_after) < n_pauses:
        pause_after.add(min(set(range(n_syl - 1)) - pause_after))

    f0 = spec.f0_hz[sex] * speaker_offsets["f0"]
    jit, shim = spec.jitter_pct[severity], spec.shimmer_pct[severity]
    fscale = FEMALE_FORMANT_SCALE if sex == "F" else 1.0
    cent = spec.vowel_centralization[severity]
    center = np.mean([CORNER_FORMANTS[c] for c in CORNERS], axis=0)

    pieces = [np.zeros(int(round(spec.edge_silence_s * sr)))]
    phones = [(0.0, spec.edge_silence_s, "sil")]
    t = spec.edge_silence_s
    all_periods = []
    for s in range(n_syl):
        c_label = consonants[int(rng.integers(len(consonants)))]
        corner = CORNERS[s % len(CORNERS)]
        v_label = corner_labels[s % len(CORNERS)]
        n_c = int(round(cons_dur * sr))
        pieces.append(0.05 * _noise_burst(n_c, sr, rng) / 0.3)
        phones.append((t, t + n_c / sr, c_label))
        t += n_c / sr

        n_cycles = max(int(round(vow_dur * f0)), 2)
        periods = perturbed_sequence(n_cycles, 1.0 / f0, jit, rng)
        amps = perturbed_sequence(n_cycles, 1.0, shim, rng)
        all_periods.append(periods)
        target = np.asarray(CORNER_FORMANTS[corner])
        f1, f2 = (center + (target - center) * (1 - cent)) * fscale * speaker_offsets["formant"]
        src = glottal_source(periods, amps, sr)
        vowel = resonate(src, (f1, f2, F3_HZ * fscale), BANDWIDTHS, sr)
        pieces.append(vowel)
        phones.append((t, t + len(vowel) / sr, v_label))
        t += len(vowel) / sr
        if s in pause_after:
            n_p = int(round(spec.pause_s[severity] * sr))
            pieces.append(np.zeros(n_p))
            phones.append((t, t + n_p / sr, "sil"))
            t += n_p / sr
    n_e = int(round(spec.edge_silence_s * sr))
    pieces.append(np.zeros(n_e))
    phones.append((t, t + n_e / sr, "sil"))

    x = np.concatenate(pieces)
    # Voiced parts are normalized to a common peak; consonant noise stays quieter.
    x = x / np.max(np.abs(x)) * 0.9
    # Phone boundaries from sample counts so the TextGrid matches the audio exactly.
    bounds = np.concatenate(([0], np.cumsum([len(p) for p in pieces]))) / sr
    phones = [(float(bounds[i]), float(bounds[i + 1]), lab) for i, (_, _, lab) in enumerate(phones)]

    canonical = [lab for _, _, lab in phones if lab != "sil"]
    n_sub = int(round(spec.substitution_rate[severity] * len(canonical)))
    sub_at = set(rng.choice(len(canonical), size=n_sub, replace=False).tolist()) if n_sub else set()
    decoded = []
    for i, lab in enumerate(canonical):
        if i in sub_at:
            pool = vowels if inv.classify(lab) == "vowel" else consonants
            others = [p for p in pool if p != lab]
            decoded.append(others[int(rng.integers(len(others)))])
        else:
            decoded.append(lab)

    margin = spec.target_margin[severity] + spec.margin_spread * rng.standard_normal()
    logits, segments = _logits(phones, inv, consonants, vowels, margin, rng, len(x) / sr)
    periods = np.concatenate(all_periods)
    truth = {
        "jitter_pct": jit,
        "shimmer_pct": shim,
        "f0_hz": f0,
        "mean_period_s": float(periods.mean()),
        "substitution_rate": n_sub / len(canonical),
        "n_pauses": n_pauses,
        "pause_s": spec.pause_s[severity] if n_pauses else 0.0,
        "target_margin": margin,
        "duration_s": len(x) / sr,
    }
    return Utterance(x, phones, decoded, logits, segments, truth)


def _logits(phones, inv, consonants, vowels, margin, rng, duration):
    classes = tuple(["sil"] + consonants + vowels)
    n_frames = int(np.floor(duration / FRAME_SHIFT))
    L = rng.standard_normal((n_frames, len(classes)))
    segments = []
    for t0, t1, lab in phones:
        f0, f1 = int(round(t0 / FRAME_SHIFT)), min(int(round(t1 / FRAME_SHIFT)), n_frames)
        if f1 <= f0:
            continue
        k = classes.index(lab)
        others = np.delete(L[f0:f1], k, axis=1)
        m = margin if lab != "sil" else 4.0
        L[f0:f1, k] = others.max(axis=1) + m
        if lab != "sil":
            segments.append(PhoneSegment(lab, f0, f1))
    return LogitMatrix(L, classes, FRAME_SHIFT), segments


def _wav_bytes(x: np.ndarray, sr: int) -> bytes:
    pcm = np.clip(np.round(x * 32767), -32768, 32767).astype("<i2")
    bio = io.BytesIO()
    with wave.open(bio, "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(sr)
        w.writeframes(pcm.tobytes())
    return bio.getvalue()


def _csv_logits(L: LogitMatrix) -> str:
    return pd.DataFrame(L.logits, columns=list(L.classes)).to_csv(index=False, float_format="%.17g", lineterminator="\n")


def speakers(spec: SynthSpec) -> list[tuple[str, str, int, str]]:
    """(speaker, language, severity, sex) in generation order."""
    out = []
    for lang in spec.languages:
        for sev in range(4):
            for k in range(spec.speakers_per_severity):
                out.append((f"{lang}_s{sev}_{k}", lang, sev, "M" if k % 2 == 0 else "F"))
    return out


def synth_corpus(spec: SynthSpec, out_dir) -> pd.DataFrame:
    """Write a corpus under ``out_dir`` and return its manifest.

    Layout: manifest.csv, truth.csv and wav/, textgrid/, phones/, logits/,
    segments/ with one file per utterance. Paths in the manifest are
    relative to ``out_dir``. The same spec and seed give identical bytes.
    """
    out = Path(out_dir)
    rng = np.random.default_rng(spec.seed)
    rows, truth_rows = [], []
    for spk, lang, sev, sex in speakers(spec):
        offsets = {
            "f0": float(np.exp(0.05 * rng.standard_normal())),
            "formant": float(np.exp(0.03 * rng.standard_normal())),
            "rate": float(np.exp(0.05 * rng.standard_normal())),
        }
        for u in range(spec.utterances_per_speaker):
            utt_id = f"{spk}_u{u}"
            utt = synth_utterance(spec, lang, sev, sex, rng, offsets)
            paths = {
                "wav": f"wav/{utt_id}.wav",
                "textgrid": f"textgrid/{utt_id}.TextGrid",
                "phones": f"phones/{utt_id}.txt",
                "logits": f"logits/{utt_id}.csv",
                "segments": f"segments/{utt_id}.csv",
            }
            atomic_write_bytes(out / paths["wav"], _wav_bytes(utt.samples, spec.sample_rate))
            atomic_write_text(out / paths["textgrid"], serialize_textgrid(alignment_from_phones(utt.phones)))
            atomic_write_text(out / paths["phones"], "".join(f"{p}\n" for p in utt.decoded))
            atomic_write_text(out / paths["logits"], _csv_logits(utt.logits))
            header = {"classes": list(utt.logits.classes), "frame_shift": utt.logits.frame_shift}
            atomic_write_text(out / (paths["logits"] + ".json"), json.dumps(header, indent=2))
            seg = pd.DataFrame([(s.label, s.start, s.end) for s in utt.segments],
                               columns=["label", "start_frame", "end_frame"])
            atomic_write_text(out / paths["segments"], seg.to_csv(index=False, lineterminator="\n"))
            rows.append({"utt_id": utt_id, "speaker": spk, "language": lang, "severity": sev, "sex": sex, **paths})
            truth_rows.append({"utt_id": utt_id, **utt.truth})
    manifest = pd.DataFrame(rows)
    atomic_write_text(out / "manifest.csv", table_to_csv(manifest))
    atomic_write_text(out / "truth.csv", table_to_csv(pd.DataFrame(truth_rows)))
    atomic_write_text(out / "spec.json", json.dumps(asdict(spec), indent=2, sort_keys=True))
    return manifest


def read_decoded(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.strip() for line in fh if line.strip()]


# -- feature-level generator ---------------------------------------------------


@dataclass
class SynthTable:
    table: pd.DataFrame
    feature_sets: dict
    directions: dict
    roles: dict  # feature -> "universal" | "specific" | "anti" | "noise"


def synth_feature_table(
    seed: int,
    languages: Sequence[str] = ("en", "ko", "ta"),
    speakers_per_severity: int = 2,
    utterances_per_speaker: int = 5,
    universal_effect: float = 0.35,
    specific_effect: float = 1.2,
    anti_effect: float = 1.0,
    speaker_sd: float = 0.4,
    n_noise: int = 2,
) -> SynthTable:
    """Feature table with planted severity effects.

    ``universal`` rises weakly with severity in every language;
    ``specific_<lang>`` rises strongly in its own language and is noise
    elsewhere; ``anti`` falls with severity although its declared direction
    is UP; ``noise_<k>`` are independent draws. Per-language feature sets
    hold the universal feature and that language's specific one.
    Informative features carry a per-speaker random offset.
    """
    rng = np.random.default_rng(seed)
    langs = list(languages)
    spec_cols = [f"specific_{lang}" for lang in langs]
    noise_cols = [f"noise_{k}" for k in range(n_noise)]
    rows = []
    for lang in langs:
        for sev in range(4):
            for k in range(speakers_per_severity):
                spk = f"{lang}_s{sev}_{k}"
                off = rng.normal(0, speaker_sd, size=2 + len(langs))
                for u in range(utterances_per_speaker):
                    row = {"utt_id": f"{spk}_u{u}", "speaker": spk, "language": lang, "severity": sev}
                    row["universal"] = universal_effect * sev + off[0] + rng.standard_normal()
                    row["anti"] = -anti_effect * sev + off[1] + rng.standard_normal()
                    for j, (col, other) in enumerate(zip(spec_cols, langs)):
                        effect = specific_effect * sev if other == lang else 0.0
                        row[col] = effect + off[2 + j] + rng.standard_normal()
                    for col in noise_cols:
                        row[col] = rng.standard_normal()
                    rows.append(row)
    table = pd.DataFrame(rows)
    feature_sets = {lang: ["universal", f"specific_{lang}"] for lang in langs}
    directions = {"universal": UP, "anti": UP, **{c: UP for c in spec_cols}, **{c: EITHER for c in noise_cols}}
    roles = {"universal": "universal", "anti": "anti", **{c: "specific" for c in spec_cols},
             **{c: "noise" for c in noise_cols}}
    return SynthTable(table, feature_sets, directions, roles)

