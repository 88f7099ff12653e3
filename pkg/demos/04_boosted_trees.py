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
# # Gradient-boosted trees with missing values
#
# The booster learns a default direction for MISSING at every split, so a
# column can be blank for whole groups of rows without imputation.

# %%
import numpy as np

from dyskit import trees

rng = np.random.default_rng(0)
n = 300
group = rng.integers(0, 2, n)
signal = rng.normal(size=n)
y = (signal > 0).astype(int) + 2 * group
X = np.column_stack([np.where(group == 0, signal, np.nan), np.where(group == 1, signal, np.nan),
                     group + rng.normal(0, 0.1, n)])
ens = trees.train(X, y, trees.BoostParams(rounds=20, max_depth=3), ["signal_a", "signal_b", "group"])
print("training accuracy", (ens.predict(X) == y).mean())

# %% [markdown]
# ## Training loss per round and feature importance

# %%
print([round(trees.log_loss(y, ens.predict_proba(X, r)), 3) for r in range(0, 21, 4)])
print({k: round(v, 2) for k, v in trees.gain_importance(ens).items()})

# %% [markdown]
# ## Serialization
#
# The text format stores floats by repr, so a reload predicts bit-identically.

# %%
text = trees.dumps(ens)
print(text.splitlines()[0])
again = trees.loads(text)
print("identical scores:", np.array_equal(again.decision_function(X), ens.decision_function(X)))

# %% [markdown]
# ## Other learners
#
# An extra-trees forest (median imputation) and kNN are available as
# comparison classifiers.

# %%
Xf = np.column_stack([signal, group])
forest = trees.random_forest_train(Xf, y, trees.ForestParams(seed=0))
print("forest accuracy", (forest.predict(Xf) == y).mean())
print("kNN accuracy", (trees.knn_predict(Xf, y, Xf, k=5) == y).mean())
