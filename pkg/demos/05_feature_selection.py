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
# # Two-step feature selection
#
# First reduce multicollinearity, then pick features with filter, wrapper
# or embedded methods. The table below has ten columns, four of which are
# exact linear combinations of the other six.

# %%
import numpy as np
import pandas as pd

from dyskit import selection as sel
from dyskit import stats
from dyskit import trees
from dyskit.pipeline import synth

rng = np.random.default_rng(0)
n = 200
B = rng.normal(size=(n, 6))
extra = np.column_stack([B[:, 0] + B[:, 1], B[:, 2] - B[:, 3], 2 * B[:, 4] + B[:, 0], B[:, 1] - B[:, 5]])
table = pd.DataFrame(np.column_stack([B, extra]), columns=[f"x{i}" for i in range(10)])
score = 1.2 * B[:, 0] + 0.8 * B[:, 2] - 0.6 * B[:, 4] + rng.normal(0, 0.5, n)
y = np.digitize(score, np.quantile(score, [0.25, 0.5, 0.75]))
groups = np.arange(n) % 10
print("VIF > 10 before:", sum(v > 10 for v in stats.vif_all(table).values()))

# %% [markdown]
# ## Lasso and Elastic-Net
#
# The penalty is chosen by grouped cross-validation; a feature survives only
# if its coefficient is non-zero in every fold.

# %%
for fn in (sel.lasso_select, sel.elastic_net_select):
    res = fn(table, y, groups=groups)
    vifs = stats.vif_all(table[res.selected]) if len(res.selected) >= 2 else {}
    print(fn.__name__, res.selected, "VIF > 10 after:", sum(v > 10 for v in vifs.values()), res.chosen)

# %% [markdown]
# ## Correlation clustering
#
# Ward clustering on 1 - |Spearman| groups redundant features; the member
# with the highest permutation importance represents each cluster.

# %%
res = sel.cluster_select(table, y)
print(res.selected)

# %% [markdown]
# ## Filter, wrapper and embedded selection on a planted table

# %%
st = synth.synth_feature_table(1)
ko = st.table[st.table.language == "ko"]
feats = ko[[c for c in st.directions]]
fast = trees.BoostParams(rounds=10, max_depth=2)
print("filter   ", sel.filter_select(feats, ko.severity).selected)
print("embedded ", sel.embedded_select(feats, ko.severity, top_k=3).selected)
print("rfe      ", sel.rfe_select(feats, ko.severity, params=fast, groups=ko.speaker).selected)
print("iterative", sel.iterative_gain_select(feats, ko.severity, ko.speaker, params=fast).selected)
