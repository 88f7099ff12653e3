"""Audio ingestion and low-level speech DSP.

Everything here is a pure function of its inputs. Contours and pulse trains
are frozen dataclasses holding numpy arrays; callers must not mutate them.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import signal as sps
from scipy.linalg import solve_toeplitz

DEFAULT_FLOOR_HZ = 70.0
DEFAULT_CEILING_HZ = 500.0
DEFAULT_FRAME_S = 0.04
DEFAULT_SHIFT_S = 0.01
VOICING_THRESHOLD = 0.45
# Frames whose peak is below this fraction of the buffer peak count as silence.
SILENCE_THRESHOLD = 0.03
OCTAVE_COST = 0.01
MAX_FORMANT_BANDWIDTH_HZ = 400.0

# Named analysis-window presets (frame_s, shift_s).
WINDOW_PRESETS = {
    "default": (DEFAULT_FRAME_S, DEFAULT_SHIFT_S),
    "phonation": (0.1, 0.08),
}

MAX_FORMANT_HZ = {"M": 5000.0, "F": 5500.0}


class WavFormatError(ValueError):
    """Raised for unreadable, compressed or empty WAV input."""


class EmptyContourError(ValueError):
    pass


class NoPulsesError(ValueError):
    pass


class UndefinedResultError(ValueError):
    """A measure cannot be computed on the given (e.g. unvoiced) input."""


@dataclass(frozen=True)
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int
    downmixed: bool = False

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float)
        if x.ndim != 1 or x.size == 0:
            raise ValueError("audio buffer must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(x)):
            raise ValueError("audio samples must be finite")
        if np.max(np.abs(x)) > 1.0:
            raise ValueError("audio samples must lie in [-1, 1]")
        if int(self.sample_rate) <= 0:
            raise ValueError("sample rate must be positive")
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def segment(self, t0: float, t1: float) -> np.ndarray:
        i0 = max(int(round(t0 * self.sample_rate)), 0)
        i1 = min(int(round(t1 * self.sample_rate)), self.samples.size)
        return self.samples[i0:i1]


@dataclass(frozen=True)
class PitchContour:
    frame_times: np.ndarray
    f0: np.ndarray
    floor_hz: float
    ceiling_hz: float
    frame_s: float = DEFAULT_FRAME_S
    shift_s: float = DEFAULT_SHIFT_S

    @property
    def voiced(self) -> np.ndarray:
        return self.f0 > 0


@dataclass(frozen=True)
class PulseTrain:
    pulse_times: np.ndarray
    amplitudes: np.ndarray
    total_duration: float

    @property
    def periods(self) -> np.ndarray:
        return np.diff(self.pulse_times)


@dataclass(frozen=True)
class EnergyContour:
    frame_times: np.ndarray
    energy: np.ndarray


@dataclass(frozen=True)
class FormantEstimate:
    f1: float
    f2: float
    bandwidths: tuple = field(default=(np.nan, np.nan))
    confident: bool = True


# -- I/O -----------------------------------------------------------------


def read_wav(path) -> AudioBuffer:
    """Read a PCM WAV file into a mono buffer scaled to [-1, 1].

    Multichannel input is averaged to mono and flagged via ``downmixed``.
    """
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as w:
            n_channels = w.getnchannels()
            width = w.getsampwidth()
            rate = w.getframerate()
            raw = w.readframes(w.getnframes())
    except (wave.Error, EOFError) as exc:
        raise WavFormatError(f"{path}: {exc}") from exc
    if not raw:
        raise WavFormatError(f"{path}: zero-length audio")

    if width == 1:
        data = (np.frombuffer(raw, dtype=np.uint8).astype(float) - 128.0) / 128.0
    elif width == 2:
        data = np.frombuffer(raw, dtype="<i2").astype(float) / 32768.0
    elif width == 3:
        b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        v = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        v = np.where(v >= 1 << 23, v - (1 << 24), v)
        data = v.astype(float) / float(1 << 23)
    elif width == 4:
        data = np.frombuffer(raw, dtype="<i4").astype(float) / float(1 << 31)
    else:
        raise WavFormatError(f"{path}: unsupported sample width {width}")

    data = data.reshape(-1, n_channels)
    downmixed = n_channels > 1
    mono = data.mean(axis=1) if downmixed else data[:, 0]
    return AudioBuffer(mono, rate, downmixed=downmixed)


def write_wav(path, buf: AudioBuffer) -> None:
    """Write a buffer as 16-bit mono PCM."""
    pcm = np.clip(np.round(buf.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(buf.sample_rate)
        w.writeframes(pcm.tobytes())


# -- framing helpers -----------------------------------------------------


def _frame_starts(n_samples: int, frame_len: int, hop: int) -> np.ndarray:
    if frame_len > n_samples:
        return np.empty(0, dtype=int)
    return np.arange(0, n_samples - frame_len + 1, hop)


def _normalized_acf(frame: np.ndarray, max_lag: int) -> np.ndarray:
    """Autocorrelation normalized by the energies of the overlapping parts."""
    n = frame.size
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    spec = np.fft.rfft(frame, nfft)
    acf = np.fft.irfft(spec * np.conj(spec), nfft)[: max_lag + 1]
    c = np.concatenate(([0.0], np.cumsum(frame * frame)))
    lags = np.arange(max_lag + 1)
    head = c[n - lags]
    tail = c[n] - c[lags]
    denom = np.sqrt(head * tail)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(denom > 0, acf / denom, 0.0)
    return r


def _best_peak(r: np.ndarray, lag_min: int, lag_max: int) -> tuple[float, float] | None:
    """Best interior local maximum of ``r`` in [lag_min, lag_max].

    Returns (interpolated lag, interpolated r) or None. Longer lags pay a
    small per-octave cost so that the true period wins over its multiples.
    """
    best = None
    best_score = -np.inf
    hi = min(lag_max, r.size - 2)
    for k in range(max(lag_min, 1), hi + 1):
        if not (r[k] > r[k - 1] and r[k] >= r[k + 1]):
            continue
        a, b, c = r[k - 1], r[k], r[k + 1]
        denom = a - 2 * b + c
        delta = 0.5 * (a - c) / denom if denom != 0 else 0.0
        r_peak = min(b - 0.25 * (a - c) * delta, 1.0)
        lag = k + delta
        score = r_peak - OCTAVE_COST * np.log2(lag / lag_min)
        if score > best_score:
            best_score = score
            best = (lag, r_peak)
    return best


def _lag_bounds(sample_rate: int, floor_hz: float, ceiling_hz: float) -> tuple[int, int]:
    return int(np.floor(sample_rate / ceiling_hz)), int(np.ceil(sample_rate / floor_hz))


def _frame_periodicity(buf: AudioBuffer, floor_hz, ceiling_hz, frame_s, shift_s, t0=None, t1=None):
    """Yield (center time, best lag, best r, silent) per frame."""
    sr = buf.sample_rate
    frame_len = int(round(frame_s * sr))
    hop = max(int(round(shift_s * sr)), 1)
    x = buf.samples
    global_peak = float(np.max(np.abs(x)))
    lag_min, lag_max = _lag_bounds(sr, floor_hz, ceiling_hz)
    i_lo = 0 if t0 is None else max(int(round(t0 * sr)), 0)
    i_hi = x.size if t1 is None else min(int(round(t1 * sr)), x.size)
    out = []
    for s in _frame_starts(i_hi - i_lo, frame_len, hop) + i_lo:
        frame = x[s : s + frame_len]
        center = (s + frame_len / 2) / sr
        frame = frame - frame.mean()
        peak = float(np.max(np.abs(frame)))
        if global_peak == 0 or peak < SILENCE_THRESHOLD * global_peak:
            out.append((center, None, 0.0, True))
            continue
        r = _normalized_acf(frame, min(lag_max + 1, frame_len - 1))
        found = _best_peak(r, lag_min, lag_max)
        if found is None:
            out.append((center, None, 0.0, False))
        else:
            out.append((center, found[0], found[1], False))
    return out


# -- pitch, pulses, energy ----------------------------------------------


def pitch_contour(
    buf: AudioBuffer,
    floor_hz: float = DEFAULT_FLOOR_HZ,
    ceiling_hz: float = DEFAULT_CEILING_HZ,
    frame_s: float = DEFAULT_FRAME_S,
    shift_s: float = DEFAULT_SHIFT_S,
    voicing_threshold: float = VOICING_THRESHOLD,
) -> PitchContour:
    """Frame-wise F0 from the normalized autocorrelation peak.

    Frames whose best peak falls below ``voicing_threshold`` are unvoiced
    (f0 = 0). A 3-point median filter is applied to the result.
    """
    if not 0 < floor_hz < ceiling_hz <= buf.sample_rate / 2:
        raise ValueError("require 0 < floor < ceiling <= sample_rate / 2")
    if int(round(frame_s * buf.sample_rate)) > buf.samples.size:
        raise EmptyContourError("analysis frame is longer than the signal")
    frames = _frame_periodicity(buf, floor_hz, ceiling_hz, frame_s, shift_s)
    times = np.array([f[0] for f in frames])
    f0 = np.zeros(len(frames))
    for i, (_, lag, r, silent) in enumerate(frames):
        if silent or lag is None or r < voicing_threshold:
            continue
        hz = buf.sample_rate / lag
        if floor_hz <= hz <= ceiling_hz:
            f0[i] = hz
    smoothed = f0.copy()
    if f0.size >= 3:
        smoothed[1:-1] = np.median(np.stack([f0[:-2], f0[1:-1], f0[2:]]), axis=0)
    return PitchContour(times, smoothed, float(floor_hz), float(ceiling_hz), frame_s, shift_s)


def voiced_segments(contour: PitchContour) -> list[tuple[float, float]]:
    """Time spans of consecutive voiced frames (frame centers +- half a shift)."""
    spans = []
    voiced = contour.voiced
    half = contour.shift_s / 2
    i = 0
    n = voiced.size
    while i < n:
        if not voiced[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and voiced[j + 1]:
            j += 1
        spans.append((float(contour.frame_times[i] - half), float(contour.frame_times[j] + half)))
        i = j + 1
    return spans


def _refine_peak(x: np.ndarray, k: int) -> tuple[float, float]:
    if 0 < k < x.size - 1:
        a, b, c = x[k - 1], x[k], x[k + 1]
        denom = a - 2 * b + c
        # Parabolic refinement only at a true local maximum (|delta| <= 0.5).
        if denom < 0 and b >= a and b >= c:
            delta = 0.5 * (a - c) / denom
            return k + delta, b - 0.25 * (a - c) * delta
    return float(k), float(x[k])


def pulse_train(buf: AudioBuffer, contour: PitchContour) -> PulseTrain:
    """Place glottal pulses on successive positive waveform peaks.

    Within each voiced run the next pulse is searched within +-30% of one
    local period (1/f0) after the previous one. Amplitudes are the
    interpolated peak values at each pulse.
    """
    if not np.any(contour.voiced):
        raise NoPulsesError("pitch contour has no voiced frames")
    x = buf.samples
    sr = buf.sample_rate
    vt = contour.frame_times[contour.voiced]
    vf = contour.f0[contour.voiced]
    times: list[float] = []
    amps: list[float] = []

    for t_start, t_end in voiced_segments(contour):
        lo = max(int(t_start * sr), 0)
        hi = min(int(t_end * sr), x.size)
        if hi - lo < 3:
            continue
        run_peak = float(np.max(np.abs(x[lo:hi])))
        min_amp = 0.1 * run_peak

        def local_period(t):
            return sr / float(np.interp(t, vt, vf))

        # First pulse: largest positive peak in the first period of the run.
        pos = lo
        first = None
        while first is None and pos < hi:
            T = local_period(pos / sr)
            end = min(int(pos + T), hi)
            if end - pos < 1:
                break
            k = pos + int(np.argmax(x[pos:end]))
            if x[k] >= min_amp:
                first = k
            pos = end
        if first is None:
            continue
        t_k, a_k = _refine_peak(x, first)
        times.append(t_k / sr)
        amps.append(a_k)
        cur = t_k
        while True:
            T = local_period(cur / sr)
            w_lo = int(np.ceil(cur + 0.7 * T))
            w_hi = int(np.floor(cur + 1.3 * T)) + 1
            if w_hi > hi or w_lo >= w_hi:
                break
            k = w_lo + int(np.argmax(x[w_lo:w_hi]))
            if x[k] < min_amp:
                break
            t_k, a_k = _refine_peak(x, k)
            times.append(t_k / sr)
            amps.append(a_k)
            cur = t_k

    if len(times) == 0:
        raise NoPulsesError("no pulses found in voiced runs")
    return PulseTrain(np.asarray(times), np.abs(np.asarray(amps)), buf.duration)


def energy_contour(
    buf: AudioBuffer, frame_s: float = DEFAULT_FRAME_S, shift_s: float = DEFAULT_SHIFT_S
) -> EnergyContour:
    """Per-frame mean squared amplitude (linear scale)."""
    if frame_s <= 0 or shift_s <= 0:
        raise ValueError("frame and shift must be positive")
    sr = buf.sample_rate
    frame_len = max(int(round(frame_s * sr)), 1)
    hop = max(int(round(shift_s * sr)), 1)
    x = buf.samples
    if frame_len > x.size:
        return EnergyContour(np.array([x.size / 2 / sr]), np.array([np.mean(x * x)]))
    starts = _frame_starts(x.size, frame_len, hop)
    idx = starts[:, None] + np.arange(frame_len)[None, :]
    frames = x[idx]
    energy = np.mean(frames * frames, axis=1)
    return EnergyContour((starts + frame_len / 2) / sr, energy)


# -- formants --------------------------------------------------------------


def _lpc(x: np.ndarray, order: int) -> np.ndarray:
    r = np.correlate(x, x, mode="full")[x.size - 1 : x.size + order]
    if r[0] <= 0:
        raise UndefinedResultError("zero-energy segment")
    r = r.copy()
    r[0] *= 1.0 + 1e-9
    a = solve_toeplitz((r[:-1], r[:-1]), -r[1:])
    return np.concatenate(([1.0], a))


def _formant_candidates(x: np.ndarray, sr: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    alpha = np.exp(-2 * np.pi * 50.0 / sr)
    x = np.append(x[0], x[1:] - alpha * x[:-1])
    x = x * np.hamming(x.size)
    roots = np.roots(_lpc(x, order))
    roots = roots[(np.imag(roots) > 0) & (np.abs(roots) < 1)]
    freqs = np.angle(roots) * sr / (2 * np.pi)
    bws = -np.log(np.abs(roots)) * sr / np.pi
    keep = (freqs > 50.0) & (freqs < sr / 2 - 50.0)
    freqs, bws = freqs[keep], bws[keep]
    idx = np.argsort(freqs)
    return freqs[idx], bws[idx]


def _two_lowest(freqs, bws):
    good = bws < MAX_FORMANT_BANDWIDTH_HZ
    if np.count_nonzero(good) >= 2:
        return freqs[good][:2], bws[good][:2], True
    if freqs.size >= 2:
        pick = np.sort(np.argsort(bws)[:2])
        return freqs[pick], bws[pick], False
    return None, None, False


def formants(
    buf: AudioBuffer,
    segment: tuple[float, float],
    max_formant_hz: float = 5000.0,
    n_formants: int = 5,
    window_s: float = 0.05,
    stability_tolerance: float = 0.1,
) -> FormantEstimate:
    """Estimate F1/F2 at the center of ``segment`` by linear prediction.

    The signal is resampled to twice ``max_formant_hz``, pre-emphasized and
    fit with an LPC model of order 2 * n_formants + 2. Stable roots with
    bandwidth below 400 Hz are formant candidates. The estimate is flagged
    ``confident=False`` when fewer than two candidates exist, or when the
    estimates from windows shifted by a quarter window either side move by
    more than ``stability_tolerance`` (relative).
    """
    t0, t1 = segment
    if not (0 <= t0 < t1 <= buf.duration + 1e-9):
        raise ValueError(f"segment {segment} lies outside the buffer")
    target = int(round(2 * max_formant_hz))
    if buf.sample_rate < target:
        raise ValueError("sample rate too low for the requested formant ceiling")
    order = 2 * n_formants + 2
    g = np.gcd(target, buf.sample_rate)
    x = buf.samples
    if target != buf.sample_rate:
        x = sps.resample_poly(x, target // g, buf.sample_rate // g)

    win = min(window_s, t1 - t0)
    center = 0.5 * (t0 + t1)

    def window_at(c):
        i0 = max(int(round((c - win / 2) * target)), 0)
        return x[i0 : i0 + int(round(win * target))]

    main = window_at(center)
    if main.size <= order + 1:
        raise ValueError("segment too short for the LPC order")
    try:
        f, b, confident = _two_lowest(*_formant_candidates(main, target, order))
    except UndefinedResultError:  # silent window: no roots at all
        f = None
    if f is None:
        return FormantEstimate(np.nan, np.nan, (np.nan, np.nan), False)

    shift = min(win / 4, (t1 - t0 - win) / 2)
    if confident and shift > 0:
        for c in (center - shift, center + shift):
            try:
                fs, _, ok = _two_lowest(*_formant_candidates(window_at(c), target, order))
            except UndefinedResultError:
                ok = False
            if not ok or np.any(np.abs(fs - f) > stability_tolerance * f):
                confident = False
                break
    return FormantEstimate(float(f[0]), float(f[1]), (float(b[0]), float(b[1])), confident)


# -- harmonicity and cepstral peak prominence -----------------------------


def hnr_from_r(r: float) -> float:
    """Harmonics-to-noise ratio in dB for a normalized autocorrelation peak r."""
    r = min(max(float(r), 1e-6), 1.0 - 1e-9)
    return 10.0 * np.log10(r / (1.0 - r))


def frame_hnr(
    buf: AudioBuffer,
    segment: tuple[float, float] | None = None,
    floor_hz: float = DEFAULT_FLOOR_HZ,
    ceiling_hz: float = DEFAULT_CEILING_HZ,
    frame_s: float = DEFAULT_FRAME_S,
    shift_s: float = DEFAULT_SHIFT_S,
) -> np.ndarray:
    """Per-frame HNR (dB) over non-silent frames that show a periodicity peak."""
    t0, t1 = segment if segment is not None else (None, None)
    frames = _frame_periodicity(buf, floor_hz, ceiling_hz, frame_s, shift_s, t0, t1)
    return np.array([hnr_from_r(r) for _, lag, r, silent in frames if not silent and lag is not None])


def hnr(
    buf: AudioBuffer,
    segment: tuple[float, float] | None = None,
    floor_hz: float = DEFAULT_FLOOR_HZ,
    ceiling_hz: float = DEFAULT_CEILING_HZ,
    frame_s: float = DEFAULT_FRAME_S,
    shift_s: float = DEFAULT_SHIFT_S,
) -> float:
    """Mean frame HNR, 10*log10(r / (1 - r)), over ``segment``."""
    values = frame_hnr(buf, segment, floor_hz, ceiling_hz, frame_s, shift_s)
    if values.size == 0:
        raise UndefinedResultError("no periodic frames in segment")
    return float(np.mean(values))


def _cpp_frame(frame: np.ndarray, sr: int, q_lo: float, q_hi: float) -> float:
    n = frame.size
    nfft = 1 << int(np.ceil(np.log2(n)))
    spec = np.abs(np.fft.rfft(frame * np.hanning(n), nfft)) ** 2
    log_spec = 10.0 * np.log10(spec + 1e-12)
    ceps = np.fft.irfft(log_spec, nfft)
    ceps_db = 10.0 * np.log10(ceps * ceps + 1e-12)
    q = np.arange(nfft) / sr
    band = np.nonzero((q >= q_lo) & (q <= q_hi))[0]
    slope, intercept = np.polyfit(q[band], ceps_db[band], 1)
    k = band[int(np.argmax(ceps_db[band]))]
    return float(ceps_db[k] - (slope * q[k] + intercept))


def cpp(
    buf: AudioBuffer,
    voiced: Sequence[tuple[float, float]],
    floor_hz: float = DEFAULT_FLOOR_HZ,
    ceiling_hz: float = DEFAULT_CEILING_HZ,
    frame_s: float = 0.048,
    shift_s: float = DEFAULT_SHIFT_S,
) -> float:
    """Cepstral peak prominence (dB) averaged over frames in ``voiced`` spans.

    Per frame: power cepstrum of the dB spectrum, a straight-line trend fit
    over quefrencies [1/ceiling, 1/floor], and the height of the cepstral
    peak in that range above the trend.
    """
    sr = buf.sample_rate
    frame_len = int(round(frame_s * sr))
    hop = max(int(round(shift_s * sr)), 1)
    values = []
    for t0, t1 in voiced:
        i0 = max(int(round(t0 * sr)), 0)
        i1 = min(int(round(t1 * sr)), buf.samples.size)
        if i1 - i0 < frame_len:
            # Short voiced span: one frame centered on it, if the buffer allows.
            c = (i0 + i1) // 2
            i0 = max(c - frame_len // 2, 0)
            i1 = min(i0 + frame_len, buf.samples.size)
            if i1 - i0 < frame_len:
                continue
        for s in range(i0, i1 - frame_len + 1, hop):
            frame = buf.samples[s : s + frame_len]
            if not np.any(frame):
                continue
            values.append(_cpp_frame(frame, sr, 1.0 / ceiling_hz, 1.0 / floor_hz))
    if not values:
        raise UndefinedResultError("no voiced frames for CPP")
    return float(np.mean(values))
