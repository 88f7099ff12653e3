# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# %% [markdown]
# # Command-line walkthrough
#
# The same stages from the shell: synthesize a corpus, extract biomarkers,
# score GoP, validate, select and train. Each call below is equivalent to
# running `dyskit <command> ...` in a terminal.

# %%
import json
import tempfile
from pathlib import Path

import pandas as pd

from dyskit.cli import main

work = Path(tempfile.mkdtemp(prefix="dyskit-demo-"))
(work / "synth.json").write_text(json.dumps({"spec": {"languages": ["en", "ko"], "speakers_per_severity": 2,
                                                       "utterances_per_speaker": 2, "syllables": 6}}))


def run(*argv):
    rc = main([str(a) for a in argv])
    print("exit code", rc)
    return rc


run("synth", "--config", work / "synth.json", "--out", work / "corpus", "--seed", 3)
print(pd.read_csv(work / "corpus" / "manifest.csv").head())

# %%
run("extract", "--manifest", work / "corpus" / "manifest.csv", "--out", work / "features.csv")
run("gop", "--manifest", work / "corpus" / "manifest.csv", "--out", work / "gop")
print(sorted(p.name for p in (work / "gop").iterdir()))

# %% [markdown]
# ## Validation writes one feature set per language

# %%
run("validate", "--features", work / "features.csv", "--out", work / "validation")
for f in sorted((work / "validation" / "featuresets").iterdir()):
    print(f.name, f.read_text().split())

# %%
run("select", "--features", work / "features.csv", "--method", "filter", "--out", work / "selection")

# %% [markdown]
# ## Train and evaluate
#
# A tiny grid keeps this quick; the default grid is larger.

# %%
(work / "grid.json").write_text(json.dumps({"grid": {"rounds": [10], "max_depth": [2], "learning_rate": [0.3]}}))
run("train-eval", "--features", work / "features.csv", "--featuresets-dir", work / "validation" / "featuresets",
    "--mode", "PROPOSED", "--config", work / "grid.json", "--out", work / "model")
print(json.loads((work / "model" / "cv_report.json").read_text())["language_f1"])
