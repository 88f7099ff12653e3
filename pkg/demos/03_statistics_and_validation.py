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
# # Statistics and feature validation
#
# Kruskal-Wallis and Kendall's tau drive the two-step validation: a feature
# must differ across severity groups and move in its clinically expected
# direction.

# %%
import numpy as np
import pandas as pd

from dyskit import stats
from dyskit.pipeline import synth, transform

print(stats.kruskal_wallis([[1, 2, 3], [4, 5, 6]]))
print(stats.kendall_tau([1, 2, 3, 4], [1, 3, 2, 4]))

# %% [markdown]
# ## Validation statuses
#
# The synthetic table plants a language-specific feature that rises with
# severity, an anti-directional feature declared UP, and pure noise.
# Expected outcome: O, TRIANGLE and X respectively.

# %%
st = synth.synth_feature_table(0)
frames = []
for lang in ("en", "ko", "ta"):
    part = st.table[st.table.language == lang]
    v = transform.validation_frame(transform.validate_features(part, part.severity, st.directions))
    frames.append(v.assign(language=lang))
print(pd.concat(frames).pivot(index="feature", columns="language", values="status").to_string())

# %% [markdown]
# ## Distance to healthy controls
#
# Values within one healthy standard deviation map to 1; further out the
# value is sd / |f - mu|, so a 2-sigma deviation gives 0.5.

# %%
for f in (10.0, 11.5, 14.0, 30.0):
    print(f, transform.distance_value(f, 10.0, 2.0))

# %% [markdown]
# ## Collinearity
#
# VIF flags features that are nearly linear combinations of the others.

# %%
rng = np.random.default_rng(0)
a, b = rng.normal(size=100), rng.normal(size=100)
t = pd.DataFrame({"a": a, "b": b, "a_plus_b": a + b + rng.normal(0, 0.05, 100)})
print({k: round(v, 1) for k, v in stats.vif_all(t).items()})
