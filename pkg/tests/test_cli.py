import json
import shutil

import numpy as np
import pandas as pd
import pytest

from dyskit import __version__, biomarkers as bm, cli, gop
from dyskit.pipeline import dataset

SPEC = {"languages": ["en", "ko"], "speakers_per_severity": 2, "utterances_per_speaker": 2, "syllables": 6}


def _run(*argv):
    try:
        return cli.main([str(a) for a in argv])
    except SystemExit as e:  # argument errors exit from inside argparse
        return e.code


def _config(tmp, name, obj):
    p = tmp / name
    p.write_text(json.dumps(obj))
    return p


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    assert _run("synth", "--config", _config(tmp, "synth.json", {"spec": SPEC}), "--out", tmp / "corpus",
                "--seed", 3) == 0
    assert _run("extract", "--manifest", tmp / "corpus" / "manifest.csv", "--out", tmp / "features.csv") == 0
    return tmp


def test_synth_shape(corpus):
    m = dataset.read_manifest(corpus / "corpus" / "manifest.csv")
    assert m.speaker.nunique() == 16 and len(m) == 32
    for col in ("wav", "textgrid", "phones", "logits", "segments"):
        assert all(pd.io.common.file_exists(p) for p in m[col])


def test_synth_same_seed_same_bytes(corpus, tmp_path):
    spec = {"spec": {**SPEC, "languages": ["en"], "speakers_per_severity": 1}}
    cfg = _config(tmp_path, "s.json", spec)
    assert _run("synth", "--config", cfg, "--out", tmp_path / "a", "--seed", 1) == 0
    assert _run("synth", "--config", cfg, "--out", tmp_path / "b", "--seed", 1) == 0
    for f in (tmp_path / "a").rglob("*"):
        if f.is_file():
            assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes()


def test_synth_infeasible_spec(tmp_path):
    cfg = _config(tmp_path, "s.json", {"spec": {"pause_s": [0.2, 0.2, 0.2, 60]}})
    assert _run("synth", "--config", cfg, "--out", tmp_path / "x") == 65


def test_extract_shape_and_determinism(corpus, tmp_path):
    text = (corpus / "features.csv").read_text()
    t = dataset.read_table(corpus / "features.csv")
    assert len(t) == 32 and t.utt_id.tolist() == sorted(t.utt_id)
    assert [c for c in t.columns if c in bm.FEATURE_NAMES] == list(bm.FEATURE_NAMES)
    assert len(bm.FEATURE_NAMES) == 35
    assert (t.error == "").all()
    assert _run("extract", "--manifest", corpus / "corpus" / "manifest.csv", "--out", tmp_path / "again.csv") == 0
    assert (tmp_path / "again.csv").read_text() == text


def test_extract_missing_wav_partial(corpus, tmp_path):
    m = pd.read_csv(corpus / "corpus" / "manifest.csv", dtype=str, keep_default_na=False)
    m = m.iloc[:2].copy()
    m["wav"] = [str(corpus / "corpus" / m.wav.iloc[0]), str(tmp_path / "nope.wav")]
    for c in ("textgrid", "phones", "logits", "segments"):
        m[c] = [str(corpus / "corpus" / p) for p in m[c]]
    m.to_csv(tmp_path / "m.csv", index=False)
    assert _run("extract", "--manifest", tmp_path / "m.csv", "--out", tmp_path / "f.csv") == 2
    t = dataset.read_table(tmp_path / "f.csv")
    assert t.error.iloc[0] == "" and t.error.iloc[1]
    assert t.loc[1, list(bm.FEATURE_NAMES)].isna().all()


def test_gop_outputs(corpus, tmp_path):
    assert _run("gop", "--manifest", corpus / "corpus" / "manifest.csv", "--out", tmp_path) == 0
    scores = dataset.read_table(tmp_path / "gop_scores.csv")
    cols = [f"{m}_{n}" for m in gop.METHODS for n in gop.NORMALIZATIONS]
    assert len(cols) == 21 and set(cols) <= set(scores.columns)
    tau = dataset.read_table(tmp_path / "gop_kendall.csv")
    assert len(tau) == 21 and {"en", "ko", "average"} <= set(tau.columns)
    maxlogit = tau[(tau.method == "MAXLOGIT") & (tau.normalization == "PRIOR")]
    assert maxlogit.average.iloc[0] < -0.5
    # Temperature scaling leaves MaxLogit and LogitMargin rankings alone.
    for m in ("MAXLOGIT", "LOGITMARGIN"):
        rows = tau[tau.method == m].set_index("normalization")
        assert rows.loc["NONE", "average"] == rows.loc["SCALE", "average"]
    report = json.loads((tmp_path / "gop_report.json").read_text())
    assert report["config"]["temperature"] == 2.0 and report["config"]["version"] == __version__


def test_gop_empty_manifest(tmp_path):
    pd.DataFrame(columns=list(dataset.MANIFEST_COLUMNS)).to_csv(tmp_path / "m.csv", index=False)
    assert _run("gop", "--manifest", tmp_path / "m.csv", "--out", tmp_path / "o") == 0
    assert len(dataset.read_table(tmp_path / "o" / "gop_scores.csv")) == 0


def test_gop_malformed_logits(corpus, tmp_path):
    m = pd.read_csv(corpus / "corpus" / "manifest.csv", dtype=str, keep_default_na=False).iloc[:2].copy()
    shutil.copytree(corpus / "corpus", tmp_path / "c")
    (tmp_path / "c" / m.logits.iloc[1]).write_text("garbage\n\"")
    m.to_csv(tmp_path / "c" / "m.csv", index=False)
    assert _run("gop", "--manifest", tmp_path / "c" / "m.csv", "--out", tmp_path / "o") == 2
    scores = dataset.read_table(tmp_path / "o" / "gop_scores.csv")
    assert scores.error.iloc[0] == "" and scores.error.iloc[1]


def test_validate_outputs(corpus, tmp_path):
    assert _run("validate", "--features", corpus / "features.csv", "--out", tmp_path) == 0
    v = dataset.read_table(tmp_path / "validation.csv")
    assert {"feature", "h", "h_p", "tau", "tau_p", "status"} <= set(v.columns)
    assert set(v.status) <= {"X", "TRIANGLE", "O"}
    assert (tmp_path / "featuresets" / "en.txt").exists()
    o = v[v.status == "O"]
    assert (o.h_p < 0.05).all() and (o.tau_p < 0.05).all()


def test_validate_missing_direction(corpus, tmp_path):
    t = dataset.read_table(corpus / "features.csv")
    t["mystery"] = np.arange(len(t), dtype=float)
    dataset.write_table(tmp_path / "f.csv", t)
    assert _run("validate", "--features", tmp_path / "f.csv", "--out", tmp_path / "o") == 65
    cfg = _config(tmp_path, "c.json", {"directions": {"mystery": "UP"}})
    assert _run("validate", "--features", tmp_path / "f.csv", "--config", cfg, "--out", tmp_path / "o") == 0


def test_select_outputs(corpus, tmp_path):
    feats = ["jitter", "shimmer", "crr", "vrr", "prr", "speaking_rate"]
    t = dataset.read_table(corpus / "features.csv")
    dataset.write_table(tmp_path / "f.csv", t[["utt_id", "speaker", "language", "severity", *feats]])
    for method in ("filter", "embedded", "lasso"):
        assert _run("select", "--features", tmp_path / "f.csv", "--method", method, "--out", tmp_path) == 0
        names = (tmp_path / f"{method}_en.txt").read_text().split()
        assert set(names) <= set(feats) and len(set(names)) == len(names)
        report = json.loads((tmp_path / f"{method}_report.json").read_text())
        assert report["results"]["en"]["selected"] == names
        assert report["config"]["method"] == method


def test_select_usage_errors(corpus, tmp_path):
    assert _run("select", "--features", corpus / "features.csv", "--method", "magic", "--out", tmp_path) == 64
    assert _run("select", "--features", corpus / "features.csv", "--out", tmp_path) == 64


def _featuresets(tmp, sets):
    d = tmp / "sets"
    d.mkdir(exist_ok=True)
    for lang, names in sets.items():
        (d / f"{lang}.txt").write_text("".join(f"{n}\n" for n in names))
    return d


FAST_GRID = {"grid": {"rounds": [5], "max_depth": [2], "learning_rate": [0.3]}}


@pytest.mark.parametrize("mode", ["PROPOSED", "UNION", "INTERSECTION", "monolingual"])
def test_train_eval_modes(corpus, tmp_path, mode, capsys):
    sets = _featuresets(tmp_path, {"en": ["jitter", "crr"], "ko": ["jitter", "shimmer"]})
    cfg = _config(tmp_path, "c.json", FAST_GRID)
    args = ["train-eval", "--features", corpus / "features.csv", "--featuresets-dir", sets, "--mode", mode,
            "--config", cfg, "--out", tmp_path / "o"]
    if mode == "monolingual":
        args += ["--language", "ko"]
    assert _run(*args) == 0
    report = json.loads((tmp_path / "o" / "cv_report.json").read_text())
    assert report["mode"] == mode.upper()
    assert report["config"]["grid"] == FAST_GRID["grid"] and report["config"]["version"] == __version__
    assert 0 <= report["mean_f1"] <= 100
    preds = dataset.read_table(tmp_path / "o" / "predictions.csv")
    assert preds.speaker.nunique() == (8 if mode == "monolingual" else 16)
    assert "mean speaker weighted F1" in capsys.readouterr().out
    if mode == "PROPOSED":
        assert set(report["language_f1"]) == {"en", "ko"}
        assert report["features"] == ["crr", "jitter", "shimmer"]
    assert (tmp_path / "o" / "model.gbdt").read_text().startswith("dyskit-gbdt 1")


def test_train_eval_empty_intersection(corpus, tmp_path):
    sets = _featuresets(tmp_path, {"en": ["crr"], "ko": ["shimmer"]})
    rc = _run("train-eval", "--features", corpus / "features.csv", "--featuresets-dir", sets, "--mode",
              "INTERSECTION", "--out", tmp_path / "o")
    assert rc == 65


def test_train_eval_needs_language_for_monolingual(corpus, tmp_path):
    sets = _featuresets(tmp_path, {"en": ["crr"], "ko": ["shimmer"]})
    rc = _run("train-eval", "--features", corpus / "features.csv", "--featuresets-dir", sets, "--mode",
              "MONOLINGUAL", "--out", tmp_path / "o")
    assert rc == 64


def test_usage_and_data_errors(tmp_path):
    assert _run("extract", "--bogus") == 64
    assert _run() == 64
    assert _run("extract", "--out", tmp_path / "f.csv") == 64
    (tmp_path / "bad.csv").write_text("utt_id,speaker\nu1,s\n")
    assert _run("extract", "--manifest", tmp_path / "bad.csv", "--out", tmp_path / "f.csv") == 65
    (tmp_path / "bad.json").write_text("{not json")
    assert _run("gop", "--manifest", tmp_path / "bad.csv", "--config", tmp_path / "bad.json", "--out", tmp_path) == 65


def test_config_precedence(tmp_path):
    cfg = _config(tmp_path, "c.json", {"seed": 5, "temperature": 3.0})
    args = cli.build_parser().parse_args(["gop", "--config", str(cfg), "--seed", "9"])
    resolved = cli.resolve_config("gop", args)
    assert resolved["seed"] == 9 and resolved["temperature"] == 3.0 and resolved["prior_smoothing"] == 1.0
    assert resolved["command"] == "gop" and resolved["version"] == __version__


def test_help_lists_defaults(capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["train-eval", "--help"])
    assert e.value.code == 0
    assert "learning_rate" in capsys.readouterr().out
