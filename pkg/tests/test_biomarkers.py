import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyskit import alignment as al
from dyskit import biomarkers as bm
from dyskit import signal as dsp
from oracles import shoelace
from signals import SR, tone

EN = al.BUILTIN_INVENTORIES["en"]

# Canonical / decoded rows of the worked phoneme-accuracy example, gaps as '*'.
WORKED_CANONICAL = "HH IY W IH L AH L AW AH * R EH L AY".split()
WORKED_DECODED = "SH IY W AO L AH L AW AE N L IY * AY".split()
CORNERS = {"i": (300.0, 2300.0), "a": (800.0, 1300.0), "u": (300.0, 800.0), "ae": (700.0, 1800.0)}


def _pulses(periods_s, amps=None):
    t = np.concatenate(([0.0], np.cumsum(periods_s)))
    a = np.ones(t.size) if amps is None else np.asarray(amps, dtype=float)
    return dsp.PulseTrain(t, a, float(t[-1]))


def test_registry_shape():
    assert len(bm.FEATURE_NAMES) == 35
    assert set(bm.EXPECTED_DIRECTION) == set(bm.FEATURE_NAMES)
    sizes = {g: sum(1 for f in bm.FEATURE_NAMES if bm.FEATURE_GROUPS[f] == g) for g in set(bm.FEATURE_GROUPS.values())}
    assert sorted(sizes.values()) == [3, 4, 5, 5, 5, 5, 8]


def test_jitter_examples():
    assert bm.relative_jitter([0.010, 0.010, 0.010]) == 0
    assert bm.abs_jitter([0.010, 0.011, 0.010]) == pytest.approx(0.001)
    assert bm.relative_jitter([0.010, 0.011, 0.010]) == pytest.approx(100 * 0.001 / (0.031 / 3))
    assert round(bm.relative_jitter([10, 11, 10]), 2) == 9.68
    assert bm.abs_ppq([0.01] * 5) == 0
    assert bm.is_missing(bm.abs_ppq([0.01] * 4))
    assert bm.is_missing(bm.abs_jitter([0.01]))


def test_ppq_against_loop():
    T = np.random.default_rng(0).uniform(5, 6, 12)
    expected = np.mean([abs(T[i] - np.mean(T[i - 2 : i + 3])) for i in range(2, 10)])
    assert bm.abs_ppq(T) == pytest.approx(expected)


@given(st.lists(st.floats(2e-3, 14e-3), min_size=5, max_size=30), st.floats(0.1, 10))
@settings(max_examples=60, deadline=None)
def test_jitter_time_scaling(periods, k):
    scaled = [k * p for p in periods]
    assert bm.abs_jitter(scaled) == pytest.approx(k * bm.abs_jitter(periods), rel=1e-9, abs=1e-15)
    assert bm.relative_jitter(scaled) == pytest.approx(bm.relative_jitter(periods), rel=1e-9, abs=1e-9)
    assert bm.relative_ppq(scaled) == pytest.approx(bm.relative_ppq(periods), rel=1e-9, abs=1e-9)


def test_voice_quality_constant_pulses():
    vq = bm.voice_quality(_pulses([0.01] * 20))
    for k in ("jitter", "ppq", "shimmer", "apq"):
        assert vq[k] == pytest.approx(0, abs=1e-9)
    assert vq["n_voice_breaks"] == 0 and vq["pct_voice_breaks"] == 0
    assert bm.is_missing(vq["hnr"]) and bm.is_missing(vq["cpp"])


def test_voice_breaks_counted_and_excluded():
    periods = [0.01] * 10 + [0.05] + [0.01] * 10
    vq = bm.voice_quality(_pulses(periods))
    assert vq["n_voice_breaks"] == 1
    assert vq["pct_voice_breaks"] == pytest.approx(0.05 / sum(periods) * 100)
    assert vq["jitter"] == pytest.approx(0, abs=1e-9)


def test_voice_quality_too_few_pulses():
    vq = bm.voice_quality(_pulses([0.01, 0.0101]))
    assert vq["jitter"] > 0
    assert bm.is_missing(vq["ppq"]) and bm.is_missing(vq["apq"])


def test_voice_quality_with_audio():
    buf = tone(150, 1.0)
    c = dsp.pitch_contour(buf)
    vq = bm.voice_quality(dsp.pulse_train(buf, c), c, buf)
    assert vq["hnr"] > 30 and np.isfinite(vq["cpp"])


def test_worked_example_from_table_pairs():
    pairs = list(zip(WORKED_CANONICAL, WORKED_DECODED))
    r = bm.phoneme_accuracy(pairs, EN)
    assert (round(r["crr"], 2), round(r["vrr"], 2), round(r["prr"], 2)) == (40.00, 62.50, 53.85)


def test_worked_example_through_aligner():
    canonical = [p for p in WORKED_CANONICAL if p != "*"]
    decoded = [p for p in WORKED_DECODED if p != "*"]
    r = bm.phoneme_accuracy(al.align_sequences(canonical, decoded), EN)
    assert r["crr"] == pytest.approx(40.0) and r["vrr"] == pytest.approx(62.5)
    assert r["prr"] == pytest.approx(700 / 13)


def test_phoneme_accuracy_trivial_cases():
    seq = ["HH", "IY", "L"]
    assert bm.phoneme_accuracy(list(zip(seq, seq)), EN) == {"crr": 100.0, "vrr": 100.0, "prr": 100.0}
    assert bm.phoneme_accuracy(list(zip(seq, ["ZZ"] * 3)), EN) == {"crr": 0.0, "vrr": 0.0, "prr": 0.0}
    only_v = bm.phoneme_accuracy([("IY", "IY")], EN)
    assert bm.is_missing(only_v["crr"]) and only_v["vrr"] == 100


def test_vowel_space_hand_values():
    vs = bm.vowel_space(CORNERS)
    assert vs["vsa_tri"] == 375000.0
    assert vs["vsa_quad"] == 450000.0
    assert vs["fcr"] == pytest.approx(2700 / 3100)
    assert round(vs["fcr"], 4) == 0.8710 and round(vs["vai"], 4) == 1.1481
    assert vs["f2_ratio"] == 2.875


def test_vowel_space_matches_shoelace_oracle():
    pts = [(CORNERS[c][1], CORNERS[c][0]) for c in ("i", "ae", "a", "u")]
    assert bm.vowel_space(CORNERS)["vsa_quad"] == pytest.approx(shoelace(pts))
    tri = [(CORNERS[c][1], CORNERS[c][0]) for c in ("i", "a", "u")]
    assert bm.vowel_space(CORNERS)["vsa_tri"] == pytest.approx(shoelace(tri))


formant = st.tuples(st.floats(200, 1000), st.floats(600, 3000))


@given(st.fixed_dictionaries({"i": formant, "u": formant, "a": formant, "ae": formant}))
@settings(max_examples=100, deadline=None)
def test_vowel_space_properties(c):
    vs = bm.vowel_space(c)
    assert vs["fcr"] * vs["vai"] == pytest.approx(1.0, abs=1e-9)
    assert vs["vsa_tri"] >= 0 and vs["vsa_quad"] >= 0
    # Relabeling the triangle vertices does not change its area.
    rotated = bm.vowel_space({"i": c["u"], "u": c["a"], "a": c["i"]})
    assert rotated["vsa_tri"] == pytest.approx(vs["vsa_tri"], rel=1e-9, abs=1e-6)


def test_vowel_space_missing_corners():
    vs = bm.vowel_space({"i": CORNERS["i"], "u": CORNERS["u"], "a": CORNERS["a"]})
    assert bm.is_missing(vs["vsa_quad"]) and vs["vsa_tri"] == 375000
    assert all(bm.is_missing(v) for v in bm.vowel_space({"i": CORNERS["i"]}).values())


def test_impute_corners_prefers_utterance():
    utt = {"i": (1.0, 2.0), "u": None, "a": None, "ae": None}
    spk = {"i": (9.0, 9.0), "u": (3.0, 4.0), "a": None, "ae": None}
    out = bm.impute_corners(utt, spk)
    assert out["i"] == (1.0, 2.0) and out["u"] == (3.0, 4.0) and out["a"] is None


def _phones(spec):
    """[(label, duration)] -> alignment starting at 0."""
    t, out = 0.0, []
    for label, d in spec:
        out.append((t, t + d, label))
        t += d
    return al.alignment_from_phones(out)


def test_fluency_rates():
    ten = [("B", 0.2), ("AA", 0.2)] * 10
    fl = bm.fluency(_phones(ten), EN)
    assert fl["speaking_rate"] == pytest.approx(2.5)
    assert fl["speaking_rate"] == fl["articulation_rate"]
    assert fl["n_pauses"] == 0 and bm.is_missing(fl["avg_pause_dur"])
    with_pause = ten[:10] + [("sil", 1.0)] + ten[10:]
    fl = bm.fluency(_phones(with_pause), EN)
    assert fl["speaking_rate"] == pytest.approx(2.0)
    assert fl["articulation_rate"] == pytest.approx(2.5)


def test_fluency_articulation_example():
    # 10 syllables in 4 s total with 1 s of pause.
    seq = [("AA", 0.3)] * 5 + [("sil", 1.0)] + [("AA", 0.3)] * 5
    fl = bm.fluency(_phones(seq), EN)
    assert fl["speaking_rate"] == pytest.approx(2.5)
    assert fl["articulation_rate"] == pytest.approx(10 / 3)
    assert fl["n_pauses"] == 1 and fl["avg_pause_dur"] == pytest.approx(1.0)


def test_fluency_edges_and_short_silences():
    seq = [("sil", 0.5), ("AA", 0.2), ("sp", 0.1), ("AA", 0.2), ("sil", 0.5)]
    fl = bm.fluency(_phones(seq), EN)
    assert fl["n_pauses"] == 0
    assert fl["speaking_rate"] == pytest.approx(2 / 0.5)


@given(st.lists(st.tuples(st.sampled_from(["AA", "B", "sil"]), st.floats(0.01, 0.6)), min_size=1, max_size=20))
@settings(max_examples=80, deadline=None)
def test_speaking_rate_never_exceeds_articulation_rate(seq):
    fl = bm.fluency(_phones(seq), EN)
    if bm.is_missing(fl["speaking_rate"]) or bm.is_missing(fl["articulation_rate"]):
        return
    if fl["n_pauses"] > 0:
        assert fl["speaking_rate"] <= fl["articulation_rate"] + 1e-12
    else:
        assert fl["speaking_rate"] == pytest.approx(fl["articulation_rate"])


def test_pitch_and_energy_stats():
    c = dsp.PitchContour(np.arange(3.0), np.array([100.0, 0.0, 300.0]), 70, 500)
    ps = bm.pitch_stats(c)
    assert ps["f0_mean"] == 200 and ps["f0_min"] == 100 and ps["f0_max"] == 300
    flat = bm.pitch_stats(dsp.PitchContour(np.arange(4.0), np.full(4, 200.0), 70, 500))
    assert flat["f0_std"] == 0 and flat["f0_median"] == 200
    es = bm.energy_stats(dsp.EnergyContour(np.arange(2.0), np.array([1.0, 4.0])))
    assert es["energy_std"] == 1.5
    silent = bm.energy_stats(dsp.EnergyContour(np.arange(2.0), np.zeros(2)))
    assert all(bm.is_missing(v) for v in silent.values())


def test_rhythm_examples():
    assert bm.npvi([0.1, 0.2]) == pytest.approx(200 / 3)
    assert round(bm.varco([0.1, 0.2, 0.3]), 2) == 40.82
    assert bm.varco([0.2, 0.2]) == 0 and bm.npvi([0.2, 0.2]) == 0
    r = bm.rhythm(_phones([("AA", 0.1), ("B", 0.1), ("IY", 0.2), ("D", 0.3)]), EN)
    assert r["pct_v"] == pytest.approx(0.3 / 0.7)
    assert r["npvi_v"] == pytest.approx(200 / 3)
    vocalic = bm.rhythm(_phones([("AA", 0.1), ("IY", 0.2)]), EN)
    assert vocalic["pct_v"] == 1
    # Adjacent vowels merge into one vocalic interval.
    assert bm.is_missing(vocalic["varco_v"]) and bm.is_missing(vocalic["npvi_c"])


@given(st.lists(st.floats(0.01, 2.0), min_size=2, max_size=30))
@settings(max_examples=80, deadline=None)
def test_pvi_properties(d):
    assert 0 <= bm.npvi(d) < 200
    loop = sum(abs(d[i + 1] - d[i]) for i in range(len(d) - 1)) / (len(d) - 1)
    assert bm.rpvi(d) == pytest.approx(loop)


def _utterance():
    phones = [(0.0, 0.1, "sil")]
    t = 0.1
    for lab in ["B", "IY", "D", "AA", "K", "UW", "T", "AE"]:
        phones.append((t, t + 0.15, lab))
        t += 0.15
    phones.append((t, t + 0.1, "sil"))
    return al.alignment_from_phones(phones), t + 0.1


def test_extract_all_on_tone():
    a, dur = _utterance()
    buf = tone(150, dur)
    canonical = [iv.label for iv in a.tier() if iv.label != "sil"]
    fv = bm.extract_all(buf, a, EN, decoded=canonical)
    assert list(fv) == list(bm.FEATURE_NAMES)
    assert fv["prr"] == 100
    assert fv["f0_mean"] == pytest.approx(150, rel=0.01)
    no_dec = bm.extract_all(buf, a, EN)
    assert all(bm.is_missing(no_dec[k]) for k in ("crr", "vrr", "prr"))
    assert sum(not bm.is_missing(v) for v in no_dec.values()) == sum(not bm.is_missing(v) for v in fv.values()) - 3


def test_extract_all_unvoiced():
    a, dur = _utterance()
    fv = bm.extract_all(dsp.AudioBuffer(np.zeros(int(dur * SR)), SR), a, EN)
    for k in ("jitter", "shimmer", "hnr", "f0_mean", "f0_max"):
        assert bm.is_missing(fv[k])
    assert np.isfinite(fv["speaking_rate"])
