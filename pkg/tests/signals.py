"""Small synthetic-signal generators shared by the DSP tests."""

import numpy as np
from scipy import signal as sps

from dyskit.signal import AudioBuffer

SR = 16000


def tone(freq, dur=1.0, amp=0.5, sr=SR, phase=0.0):
    t = np.arange(int(dur * sr)) / sr
    return AudioBuffer(amp * np.sin(2 * np.pi * freq * t + phase), sr)


def noise(dur=1.0, amp=0.3, seed=0, sr=SR):
    x = np.random.default_rng(seed).normal(0, amp / 3, int(dur * sr))
    return AudioBuffer(np.clip(x, -1, 1), sr)


def warped_sine(periods_s, amp=0.5, sr=SR, amps=None):
    """One sine cycle per entry of ``periods_s``; phase advances 2*pi per cycle."""
    edges = np.concatenate(([0.0], np.cumsum(periods_s)))
    t = np.arange(int(edges[-1] * sr)) / sr
    cycle = np.searchsorted(edges, t, side="right") - 1
    frac = (t - edges[cycle]) / np.asarray(periods_s)[cycle]
    a = np.full(len(periods_s), amp) if amps is None else np.asarray(amps)
    return AudioBuffer(a[cycle] * np.sin(2 * np.pi * frac), sr)


def jittered_periods(mean_s, rel_sd, n, seed=0):
    rng = np.random.default_rng(seed)
    return mean_s * (1 + rel_sd * rng.standard_normal(n))


def two_formant_vowel(f1, f2, f0=100.0, dur=0.3, sr=SR, bw=(80.0, 100.0)):
    """Impulse train at ``f0`` through two cascaded second-order resonators."""
    n = int(dur * sr)
    src = np.zeros(n)
    src[:: int(round(sr / f0))] = 1.0
    y = src
    for f, b in zip((f1, f2), bw):
        r = np.exp(-np.pi * b / sr)
        theta = 2 * np.pi * f / sr
        y = sps.lfilter([1.0 - r], [1.0, -2 * r * np.cos(theta), r * r], y)
    y = y / np.max(np.abs(y)) * 0.8
    return AudioBuffer(y, sr)


def pulse_click_train(f0=150.0, dur=1.0, sr=SR):
    n = int(dur * sr)
    x = np.zeros(n)
    x[:: int(round(sr / f0))] = 0.9
    return AudioBuffer(x, sr)
