"""Command-line interface.

Subcommands: synth, extract, gop, validate, select, train-eval. Settings
come from built-in defaults, then a JSON ``--config`` file, then flags.
Exit codes: 0 success, 2 partial data failures, 64 usage, 65 invalid data
or synthesis settings.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from . import biomarkers as bm
from . import gop, selection, trees
from . import signal as dsp
from .alignment import BUILTIN_INVENTORIES, TextGridError, load_inventory, read_textgrid
from .pipeline import cv, dataset, synth, transform

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE, EXIT_DATA = 0, 2, 64, 65

log = logging.getLogger("dyskit")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


DEFAULTS = {
    "synth": {"spec": {}},
    "extract": {
        "floor_hz": dsp.DEFAULT_FLOOR_HZ,
        "ceiling_hz": dsp.DEFAULT_CEILING_HZ,
        "pause_threshold_s": bm.PAUSE_THRESHOLD_S,
        "inventories": {},
    },
    "gop": {"temperature": 2.0, "priors": None, "prior_smoothing": 1.0},
    "validate": {"alpha": transform.ALPHA, "directions": {}},
    "select": {"lambdas": None, "l1_ratios": list(selection.L1_RATIOS), "cluster_threshold": 0.5,
               "rounds": 30, "max_depth": 3, "learning_rate": 0.3, "top_k": None},
    "train-eval": {
        "grid": {"rounds": [300], "max_depth": [4, 5, 6], "learning_rate": [0.3, 0.4, 0.5]},
        "n_classes": 4,
        "distance_transform": True,
        "inner_folds": 3,
        "featuresets": {},
    },
}


# -- helpers -------------------------------------------------------------------


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise UsageError(f"cannot read config {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise DataError(f"config {path} is not valid JSON: {e}") from None
    if not isinstance(cfg, dict):
        raise DataError("config must be a JSON object")
    return cfg


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then command-line flags."""
    cfg = json.loads(json.dumps(DEFAULTS[command]))
    cfg.update(_load_config(args.config))
    for key in ("manifest", "features", "out", "seed", "jobs", "mode", "method", "language", "featuresets_dir"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    cfg.setdefault("seed", 0)
    cfg.setdefault("jobs", 1)
    cfg["command"] = command
    cfg["version"] = __version__
    return cfg


def _require(cfg, key):
    if not cfg.get(key):
        raise UsageError(f"--{key.replace('_', '-')} is required")
    return cfg[key]


def _write_json(path, obj) -> None:
    dataset.atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return None if np.isnan(o) else float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _map(fn, items, jobs: int):
    if jobs and jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def _read_manifest(path) -> pd.DataFrame:
    try:
        return dataset.read_manifest(path)
    except OSError as e:
        raise DataError(f"cannot read manifest: {e}") from None
    except dataset.ManifestError as e:
        raise DataError(str(e)) from None


def _read_features(path) -> pd.DataFrame:
    try:
        return dataset.read_table(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"cannot read feature table {path}: {e}") from None


def _inventory(lang: str, cfg: dict):
    custom = cfg.get("inventories", {}).get(lang)
    if custom:
        return load_inventory(custom)
    if lang not in BUILTIN_INVENTORIES:
        raise DataError(f"no phone inventory for language {lang!r}; add one under 'inventories'")
    return BUILTIN_INVENTORIES[lang]


# -- synth ---------------------------------------------------------------------


def cmd_synth(cfg: dict) -> int:
    out = Path(_require(cfg, "out"))
    spec_cfg = dict(cfg.get("spec", {}))
    spec_cfg["seed"] = cfg["seed"]
    try:
        spec = synth.SynthSpec.from_dict(spec_cfg)
    except synth.SynthSpecError as e:
        raise DataError(f"infeasible synthesis spec: {e}") from None
    manifest = synth.synth_corpus(spec, out)
    log.info("wrote %d utterances from %d speakers to %s", len(manifest), manifest.speaker.nunique(), out)
    return EXIT_OK


# -- extract -------------------------------------------------------------------


def _utt_corners(job):
    row, cfg = job
    try:
        buf = dsp.read_wav(row["wav"])
        al = read_textgrid(row["textgrid"])
        inv = _inventory(row["language"], cfg)
        return bm.corner_formants(buf, al, inv, dsp.MAX_FORMANT_HZ.get(row["sex"], 5000.0))
    except Exception:  # reported by the extraction pass
        return None


def _utt_features(job):
    row, cfg, speaker_corners, corners = job
    try:
        buf = dsp.read_wav(row["wav"])
        al = read_textgrid(row["textgrid"])
        inv = _inventory(row["language"], cfg)
        decoded = synth.read_decoded(row["phones"]) if row.get("phones") else None
        fv = bm.extract_all(
            buf, al, inv, decoded, sex=row["sex"], speaker_corners=speaker_corners, utterance_corners=corners,
            floor_hz=cfg["floor_hz"], ceiling_hz=cfg["ceiling_hz"], pause_threshold=cfg["pause_threshold_s"],
        )
        return fv, ""
    except (OSError, dsp.WavFormatError, TextGridError, DataError, ValueError, KeyError) as e:
        return bm.empty_vector(), f"{type(e).__name__}: {e}"


def _speaker_means(corners: list, speakers: list) -> dict:
    out = {}
    for spk in dict.fromkeys(speakers):
        per = {}
        for c in ("i", "u", "a", "ae"):
            vals = [cs[c] for cs, s in zip(corners, speakers) if s == spk and cs and cs.get(c) is not None]
            per[c] = tuple(np.mean(vals, axis=0)) if vals else None
        out[spk] = per
    return out


def cmd_extract(cfg: dict) -> int:
    manifest = _read_manifest(_require(cfg, "manifest"))
    out = _require(cfg, "out")
    manifest = manifest.sort_values("utt_id", kind="stable").reset_index(drop=True)
    rows = manifest.to_dict("records")
    corners = _map(_utt_corners, [(r, cfg) for r in rows], cfg["jobs"])
    spk_means = _speaker_means(corners, [r["speaker"] for r in rows])
    jobs = [(r, cfg, spk_means[r["speaker"]], c) for r, c in zip(rows, corners)]
    results = _map(_utt_features, jobs, cfg["jobs"])
    records = []
    for r, (fv, err) in zip(rows, results):
        rec = {k: r[k] for k in ("utt_id", "speaker", "language", "severity", "sex")}
        rec.update(fv)
        rec["error"] = err
        records.append(rec)
    cols = ["utt_id", "speaker", "language", "severity", "sex", *bm.FEATURE_NAMES, "error"]
    table = pd.DataFrame(records, columns=cols)
    dataset.write_table(out, table)
    n_fail = int((table.error != "").sum())
    if n_fail:
        log.error("%d of %d utterances failed; see the error column of %s", n_fail, len(table), out)
        return EXIT_PARTIAL
    return EXIT_OK


# -- gop -----------------------------------------------------------------------


def _column(method, norm):
    return f"{method}_{norm}"


def _estimate_priors(items, smoothing: float) -> dict:
    """Frame-level label frequencies over all segments, add-``smoothing`` over classes."""
    counts: dict[str, float] = {}
    for L, segs in items:
        for c in L.classes:
            counts.setdefault(c, smoothing)
        for s in segs:
            counts[s.label] = counts.get(s.label, smoothing) + (s.end - s.start)
    total = sum(counts.values())
    return {k: v / total for k, v in sorted(counts.items())}


def cmd_gop(cfg: dict) -> int:
    manifest = _read_manifest(_require(cfg, "manifest"))
    out = Path(_require(cfg, "out"))
    manifest = manifest.sort_values("utt_id", kind="stable").reset_index(drop=True)
    loaded, errors = {}, {}
    for r in manifest.itertuples():
        try:
            L = gop.read_logits(r.logits)
            segs = gop.read_segments(r.segments)
            for s in segs:
                L.index(s.label)
                if s.end > L.n_frames:
                    raise ValueError(f"segment {s} beyond {L.n_frames} frames")
            if not segs:
                raise ValueError("no phone segments")
            loaded[r.utt_id] = (L, segs)
        except (OSError, ValueError, KeyError, json.JSONDecodeError, pd.errors.ParserError) as e:
            errors[r.utt_id] = f"{type(e).__name__}: {e}"

    cfg_priors = cfg.get("priors")
    by_lang: dict[str, dict] = {}
    for r in manifest.itertuples():
        if r.utt_id in loaded:
            by_lang.setdefault(r.language, {})[r.utt_id] = loaded[r.utt_id]
    priors = {}
    for lang, items in by_lang.items():
        priors[lang] = cfg_priors.get(lang) if isinstance(cfg_priors, dict) and lang in cfg_priors else \
            _estimate_priors(items.values(), cfg["prior_smoothing"])

    cols = [_column(m, n) for m in gop.METHODS for n in gop.NORMALIZATIONS]
    records = []
    phone_records: dict[str, list] = {}
    for r in manifest.itertuples():
        rec = {"utt_id": r.utt_id, "speaker": r.speaker, "language": r.language, "severity": r.severity}
        if r.utt_id in loaded:
            L, segs = loaded[r.utt_id]
            for m in gop.METHODS:
                for n in gop.NORMALIZATIONS:
                    gc = gop.GopConfig(m, n, cfg["temperature"], priors[r.language])
                    scores = gop.score_segments(L, segs, gc)
                    rec[_column(m, n)] = float(np.mean(scores))
                    if (m, n) == ("MAXLOGIT", "PRIOR"):
                        phone_records.setdefault(r.language, []).extend(
                            (s.label, sc, r.severity) for s, sc in zip(segs, scores)
                        )
            rec["error"] = ""
        else:
            rec.update({c: np.nan for c in cols})
            rec["error"] = errors.get(r.utt_id, "")
        records.append(rec)
    scores = pd.DataFrame(records, columns=["utt_id", "speaker", "language", "severity", *cols, "error"])
    dataset.write_table(out / "gop_scores.csv", scores)

    # Kendall tau table: rows method x normalization, one column per language and the average.
    langs = sorted(scores.language.unique()) if len(scores) else []
    tau_rows = []
    for m in gop.METHODS:
        for n in gop.NORMALIZATIONS:
            row = {"normalization": n, "method": m}
            for lang in langs:
                sub = scores[(scores.language == lang) & scores[_column(m, n)].notna()]
                row[lang] = gop.severity_correlation(sub[_column(m, n)], sub.severity) if len(sub) >= 2 else np.nan
            row["average"] = float(np.nanmean([row[l] for l in langs])) if langs and \
                not all(np.isnan(row[l]) for l in langs) else np.nan
            tau_rows.append(row)
    dataset.write_table(out / "gop_kendall.csv", pd.DataFrame(tau_rows, columns=["normalization", "method", *langs,
                                                                                  "average"]))
    ranking = {lang: gop.phoneme_ranking(recs, top_k=5) for lang, recs in phone_records.items()}
    _write_json(out / "gop_report.json", {"config": cfg, "phoneme_ranking": ranking, "errors": errors})
    return EXIT_PARTIAL if errors else EXIT_OK


# -- validate ------------------------------------------------------------------


def _labels_from(features: pd.DataFrame, cfg: dict) -> pd.DataFrame:
    """Attach severity/language from the manifest when the table lacks them."""
    if {"severity", "language"} <= set(features.columns):
        return features
    manifest = _read_manifest(_require(cfg, "manifest"))
    keep = [c for c in ("utt_id", "speaker", "language", "severity") if c not in features.columns or c == "utt_id"]
    return features.merge(manifest[keep], on="utt_id", how="inner")


def cmd_validate(cfg: dict) -> int:
    table = _labels_from(_read_features(_require(cfg, "features")), cfg)
    out = Path(_require(cfg, "out"))
    directions = dict(bm.EXPECTED_DIRECTION)
    directions.update(cfg.get("directions") or {})
    feats = [c for c in dataset.feature_columns(table)]
    missing = [f for f in feats if f not in directions]
    if missing:
        raise DataError(f"no expected direction for features {missing}; add them under 'directions'")
    bad = {f: d for f, d in directions.items() if d not in (bm.UP, bm.DOWN, bm.EITHER)}
    if bad:
        raise DataError(f"directions must be UP, DOWN or EITHER: {bad}")
    langs = [cfg["language"]] if cfg.get("language") else sorted(table.language.unique())
    frames = []
    for lang in langs:
        sub = table[table.language == lang]
        if sub.severity.nunique() < 2:
            log.warning("skipping %s: fewer than two severity groups", lang)
            continue
        rows = transform.validate_features(sub, sub.severity.to_numpy(), directions, feats, cfg["alpha"])
        f = transform.validation_frame(rows)
        f.insert(0, "language", lang)
        frames.append(f)
        fs = [r.feature for r in rows if r.status == "O"]
        selection.write_feature_set(out / "featuresets" / f"{lang}.txt", fs)
    report = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(
        columns=["language", "feature", "h", "h_p", "tau", "tau_p", "status", "note"])
    dataset.write_table(out / "validation.csv", report)
    _write_json(out / "validation_report.json", {"config": cfg, "counts": report.groupby(
        ["language", "status"]).size().unstack(fill_value=0).to_dict(orient="index") if len(report) else {}})
    return EXIT_OK


# -- select --------------------------------------------------------------------

METHODS = ("lasso", "elastic_net", "cluster", "filter", "rfe", "embedded", "iterative")


def cmd_select(cfg: dict) -> int:
    method = _require(cfg, "method")
    if method not in METHODS:
        raise UsageError(f"unknown selection method {method!r}; choose from {', '.join(METHODS)}")
    table = _labels_from(_read_features(_require(cfg, "features")), cfg)
    out = Path(_require(cfg, "out"))
    feats = dataset.feature_columns(table)
    langs = [cfg["language"]] if cfg.get("language") else sorted(table.language.unique())
    params = trees.BoostParams(rounds=cfg["rounds"], max_depth=cfg["max_depth"],
                               learning_rate=cfg["learning_rate"], n_classes=4)
    summary = {}
    for lang in langs:
        sub = table[table.language == lang].reset_index(drop=True)
        if sub.empty:
            raise DataError(f"no rows for language {lang!r}")
        X, y, groups = sub[feats], sub.severity.to_numpy(), sub.speaker.to_numpy()
        if method == "lasso":
            res = selection.lasso_select(X, y, cfg["lambdas"], groups)
        elif method == "elastic_net":
            res = selection.elastic_net_select(X, y, cfg["l1_ratios"], cfg["lambdas"], groups)
        elif method == "cluster":
            res = selection.cluster_select(X, y, cfg["cluster_threshold"], seed=cfg["seed"])
        elif method == "filter":
            res = selection.filter_select(X, y)
        elif method == "rfe":
            res = selection.rfe_select(X, y, params, groups)
        elif method == "embedded":
            res = selection.embedded_select(X, y, cfg["top_k"], seed=cfg["seed"])
        else:
            res = selection.iterative_gain_select(X, y, groups, params)
        selection.write_feature_set(out / f"{method}_{lang}.txt", res.selected)
        dataset.atomic_write_text(out / f"{method}_{lang}_diagnostics.csv",
                                  res.diagnostics.to_csv(na_rep=dataset.NA, float_format="%.17g"))
        summary[lang] = {"selected": res.selected, "chosen": res.chosen,
                         "curve": [(len(s), a) for s, a in res.curve]}
    _write_json(out / f"{method}_report.json", {"config": cfg, "results": summary})
    return EXIT_OK


# -- train-eval ----------------------------------------------------------------


def _grid(cfg) -> list:
    g = cfg["grid"]
    out = []
    for r in g.get("rounds", [300]):
        for d in g.get("max_depth", [6]):
            for eta in g.get("learning_rate", [0.3]):
                out.append(trees.BoostParams(rounds=int(r), max_depth=int(d), learning_rate=float(eta),
                                             n_classes=cfg["n_classes"]))
    if not out:
        raise DataError("empty parameter grid")
    return out


def _feature_sets(cfg, langs) -> dict:
    sets = {}
    fs_dir = cfg.get("featuresets_dir")
    for lang in langs:
        path = cfg["featuresets"].get(lang) if cfg.get("featuresets") else None
        if path is None and fs_dir:
            path = Path(fs_dir) / f"{lang}.txt"
        if path is None:
            raise UsageError(f"no feature set for language {lang!r}; pass --featuresets-dir or set 'featuresets'")
        try:
            sets[lang] = selection.read_feature_set(path)
        except OSError as e:
            raise DataError(f"cannot read feature set for {lang}: {e}") from None
    return sets


def run_train_eval(table: pd.DataFrame, feature_sets: dict, mode: str, cfg: dict, language=None):
    """Distance transform (optional), assembly and LOSO evaluation; returns (report, assembled, final model)."""
    feats = sorted(set().union(*map(set, feature_sets.values())))
    unknown = [f for f in feats if f not in table.columns]
    if unknown:
        raise DataError(f"feature sets name columns absent from the table: {unknown}")
    if cfg.get("distance_transform", True):
        stats = transform.healthy_stats(table, feats)
        try:
            table = transform.distance_transform(table, stats, feats)
        except transform.MissingStatsError as e:
            raise DataError(f"{e.args[0]}; drop the feature from the feature sets or set "
                            f"\"distance_transform\": false") from None
    try:
        assembled = transform.assemble(feature_sets, table, mode, language)
    except transform.AssemblyError as e:
        raise DataError(str(e)) from None
    t = assembled.table
    grid = _grid(cfg)
    report = cv.loso_cv(t[list(assembled.features)], t.severity.to_numpy(), t.speaker.to_numpy(), grid,
                        languages=t.language.to_numpy(), utt_ids=t.utt_id.to_numpy(),
                        inner_folds=cfg.get("inner_folds", 3), config=cfg)
    chosen = pd.Series([json.dumps(p, sort_keys=True) for p in report.chosen_params.values()]).mode().iloc[0]
    final = trees.train(t[list(assembled.features)], t.severity.to_numpy(), trees.BoostParams(**json.loads(chosen)),
                        list(assembled.features))
    return report, assembled, final


def cmd_train_eval(cfg: dict) -> int:
    mode = _require(cfg, "mode").upper()
    if mode not in transform.MODES:
        raise UsageError(f"unknown mode {mode!r}; choose from {', '.join(transform.MODES)}")
    table = _labels_from(_read_features(_require(cfg, "features")), cfg)
    out = Path(_require(cfg, "out"))
    langs = sorted(table.language.unique())
    if mode == "MONOLINGUAL":
        lang = _require(cfg, "language")
        sets = _feature_sets(cfg, [lang])
    else:
        lang = None
        sets = _feature_sets(cfg, langs)
    report, assembled, final = run_train_eval(table, sets, mode, cfg, lang)
    dataset.write_table(out / "predictions.csv", report.predictions)
    dataset.atomic_write_text(out / "model.gbdt", trees.dumps(final))
    summary = report.summary()
    summary["mode"] = mode
    summary["features"] = list(assembled.features)
    _write_json(out / "cv_report.json", summary)
    lines = [f"mode {mode}", f"mean speaker weighted F1 {report.mean_f1:.2f}", f"accuracy {report.accuracy:.2f}"]
    lines += [f"{k} weighted F1 {v:.2f}" for k, v in report.language_f1.items()]
    dataset.atomic_write_text(out / "cv_report.txt", "\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _defaults_help(command):
    return "defaults: " + json.dumps(DEFAULTS[command], sort_keys=True)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dyskit", description="Dysarthria severity analysis toolkit.")
    p.add_argument("--version", action="version", version=f"dyskit {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config file; flags override its values")
        sp.add_argument("--out", help="output file or directory")
        sp.add_argument("--seed", type=int, help="random seed (default 0)")
        sp.add_argument("--jobs", type=int, help="parallel worker processes (default 1)")
        return sp

    s = common(sub.add_parser("synth", help="generate a synthetic corpus", epilog=_defaults_help("synth")))
    del s
    s = common(sub.add_parser("extract", help="extract the 35 biomarkers per utterance",
                              epilog=_defaults_help("extract")))
    s.add_argument("--manifest", help="manifest CSV")
    s = common(sub.add_parser("gop", help="goodness-of-pronunciation scores and severity correlations",
                              epilog=_defaults_help("gop")))
    s.add_argument("--manifest", help="manifest CSV")
    s = common(sub.add_parser("validate", help="statistical and clinical feature validation",
                              epilog=_defaults_help("validate")))
    s.add_argument("--features", help="feature table CSV")
    s.add_argument("--manifest", help="manifest CSV (when the table lacks labels)")
    s.add_argument("--language", help="validate one language only")
    s = common(sub.add_parser("select", help="feature selection", epilog=_defaults_help("select")))
    s.add_argument("--features", help="feature table CSV")
    s.add_argument("--manifest", help="manifest CSV (when the table lacks labels)")
    s.add_argument("--method", choices=METHODS, help="selection method")
    s.add_argument("--language", help="select for one language only")
    s = common(sub.add_parser("train-eval", help="LOSO training and evaluation", epilog=_defaults_help("train-eval")))
    s.add_argument("--features", help="feature table CSV")
    s.add_argument("--manifest", help="manifest CSV (when the table lacks labels)")
    s.add_argument("--mode", type=str.upper, choices=transform.MODES, help="table assembly mode")
    s.add_argument("--language", help="language for MONOLINGUAL mode")
    s.add_argument("--featuresets-dir", dest="featuresets_dir", help="directory of <language>.txt feature sets")
    return p


COMMANDS = {
    "synth": cmd_synth,
    "extract": cmd_extract,
    "gop": cmd_gop,
    "validate": cmd_validate,
    "select": cmd_select,
    "train-eval": cmd_train_eval,
}


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("DYSKIT_LOG", "WARNING").upper(), format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args.command, args)
        return COMMANDS[args.command](cfg)
    except UsageError as e:
        print(f"dyskit {args.command}: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as e:
        print(f"dyskit {args.command}: invalid data: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
