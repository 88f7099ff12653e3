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
# # Goodness of pronunciation
#
# Score synthetic recognizer logits with each GoP method and normalization,
# then correlate utterance scores with severity using Kendall's tau.

# %%
import numpy as np
import pandas as pd

from dyskit import gop
from dyskit.pipeline import synth

spec = synth.SynthSpec(languages=("en",), speakers_per_severity=3, utterances_per_speaker=2, syllables=6)
rng = np.random.default_rng(1)
items = []
for sev in range(4):
    for _ in range(spec.speakers_per_severity * spec.utterances_per_speaker):
        u = synth.synth_utterance(spec, "en", sev, "F", rng, {"rate": 1.0, "f0": 1.0, "formant": 1.0})
        items.append((u.logits, u.segments, sev))
classes = items[0][0].classes
uniform = {c: 1 / len(classes) for c in classes}
print(len(items), "utterances,", len(classes), "phone classes")

# %% [markdown]
# ## Severity correlation per method
#
# Temperature scaling divides every logit by the same constant, so the
# rank-based tau of MaxLogit and LogitMargin cannot move. A uniform prior
# shifts MaxLogit by log|Q| and leaves the other scores alone.

# %%
sev = [s for *_, s in items]
table = {}
for norm, temp in (("NONE", 1.0), ("SCALE", 2.0), ("PRIOR", 1.0)):
    row = {}
    for method in gop.METHODS:
        cfg = gop.GopConfig(method, norm, temp, uniform)
        scores = [gop.score_utterance(L, segs, cfg) for L, segs, _ in items]
        row[method] = gop.severity_correlation(scores, sev)
    table[norm] = row
print(pd.DataFrame(table).round(4).to_string())

# %% [markdown]
# ## Uniform logits
#
# With flat logits the closed forms are -log|Q| for the posterior score,
# log|Q| for the entropy and 0 for the margin.

# %%
flat = gop.LogitMatrix(np.zeros((5, len(classes))), classes)
seg = gop.PhoneSegment(classes[0], 0, 5)
for method in ("GMM", "ENTROPY", "MARGIN"):
    print(method, gop.score_phoneme(flat, seg, gop.GopConfig(method)), "log|Q| =", np.log(len(classes)))
