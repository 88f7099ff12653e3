import math

import numpy as np
import pandas as pd
import pytest

from dyskit import selection as sel
from dyskit import stats, trees
from oracles import ward_merge_order
from tables import collinear_table

FAST = trees.BoostParams(rounds=5, max_depth=2)


def _signal_and_noise(seed, n=80):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 4, n)
    table = pd.DataFrame({"signal": y + rng.normal(0, 0.1, n), "noise": rng.normal(size=n)})
    return table, y


def test_lasso_drops_noise_across_seeds():
    # A moderate fixed penalty, about 5% of the full-shrinkage value.
    picks = [sel.lasso_select(*_signal_and_noise(s), lambdas=[0.05]).selected for s in range(20)]
    assert sum("noise" in p for p in picks) <= 1
    assert all("signal" in p for p in picks)


def test_lasso_huge_penalty_selects_nothing():
    table, y = _signal_and_noise(0)
    assert sel.lasso_select(table, y, lambdas=[1e6]).selected == []


def test_lasso_order_of_unrelated_columns_irrelevant():
    rng = np.random.default_rng(1)
    table, y = _signal_and_noise(1)
    table["dup"] = table["signal"]
    for i in range(3):
        table[f"z{i}"] = rng.normal(size=len(y))
    a = sel.lasso_select(table, y)
    b = sel.lasso_select(table[["z2", "signal", "z0", "dup", "noise", "z1"]], y)
    assert set(a.selected) == set(b.selected)
    # The twins share one effect: their combined coefficient is not inflated.
    solo = sel.lasso_select(table[["signal", "noise"]], y).diagnostics.loc["signal", "coefficient"]
    pair = a.diagnostics.loc[["signal", "dup"], "coefficient"].sum()
    assert pair == pytest.approx(solo, rel=0.05)


def test_constant_column_dropped():
    table, y = _signal_and_noise(2)
    table["flat"] = 1.0
    res = sel.lasso_select(table, y)
    assert "flat" not in res.selected and not res.diagnostics.loc["flat", "selected"]


def test_l1_norm_non_increasing_in_lambda():
    table, y, _ = collinear_table(3)
    X = table.to_numpy()
    grid = sel.lambda_grid(sel._standardize(X), y.astype(float))
    for ratio in (1.0, 0.5):
        path = sel.fit_path(X, y.astype(float), grid, ratio)
        norms = np.abs(path.coefs).sum(axis=1)  # grid is descending
        assert np.all(np.isfinite(path.coefs))
        assert np.all(np.diff(norms) >= -1e-6)


def test_lambda_max_zeroes_everything():
    table, y, _ = collinear_table(4)
    Z = sel._standardize(table.to_numpy())
    yc = y - y.mean()
    top = sel.lambda_max(Z, yc)
    assert not sel.coordinate_descent(Z, yc, top * 1.0001).any()
    assert sel.coordinate_descent(Z, yc, top * 0.9).any()


def test_coordinate_descent_matches_normal_equations():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(100, 4))
    X -= X.mean(axis=0)
    y = X @ np.array([1.0, -2.0, 0.0, 0.5]) + rng.normal(0, 0.1, 100)
    y -= y.mean()
    lam = 1e-9
    b = sel.coordinate_descent(X, y, lam, tol=1e-14)
    assert np.allclose(b, np.linalg.lstsq(X, y, rcond=None)[0], atol=1e-6)
    # Ridge limit: l1_ratio 0 has a closed form.
    b = sel.coordinate_descent(X, y, 0.3, l1_ratio=0.0, tol=1e-14)
    ridge = np.linalg.solve(X.T @ X / 100 + 0.3 * np.eye(4), X.T @ y / 100)
    assert np.allclose(b, ridge, atol=1e-8)


def test_elastic_net_ratio_one_equals_lasso():
    table, y = _signal_and_noise(6)
    table["other"] = np.random.default_rng(6).normal(size=len(y))
    a = sel.lasso_select(table, y)
    b = sel.elastic_net_select(table, y, l1_ratios=[1.0])
    assert a.selected == b.selected
    assert np.array_equal(a.diagnostics.coefficient, b.diagnostics.coefficient)


def test_elastic_net_grouping_effect():
    table, y = _signal_and_noise(7)
    table["twin"] = table["signal"]
    res = sel.elastic_net_select(table, y, l1_ratios=[0.1])
    assert {"signal", "twin"} <= set(res.selected)
    c = res.diagnostics.coefficient
    assert c["signal"] == pytest.approx(c["twin"], rel=0.05)


def test_elastic_net_all_noise_large_penalty():
    rng = np.random.default_rng(8)
    table = pd.DataFrame(rng.normal(size=(60, 4)), columns=list("abcd"))
    assert sel.elastic_net_select(table, rng.integers(0, 4, 60), lambdas=[1e3]).selected == []


def test_collinearity_reduced_by_linear_selectors():
    table, y, groups = collinear_table(0)
    before = sum(v > 10 for v in stats.vif_all(table).values())
    assert before >= 4
    for fn in (sel.lasso_select, sel.elastic_net_select):
        kept = fn(table, y, groups=groups).selected
        after = sum(v > 10 for v in stats.vif_all(table[kept]).values()) if len(kept) >= 3 else 0
        assert after <= 1, (fn.__name__, kept)


def test_ward_hand_trace():
    # a-b close, c-d close; the Lance-Williams updates were worked by hand.
    D = np.array([[0, 0.1, 0.8, 0.9], [0.1, 0, 0.7, 0.6], [0.8, 0.7, 0, 0.2], [0.9, 0.6, 0.2, 0]])
    Z = sel.ward_merges(D)
    assert [tuple(map(int, z[:2])) for z in Z] == [(0, 1), (2, 3), (4, 5)]
    assert Z[:, 2] == pytest.approx([0.1, 0.2, math.sqrt(1.125)])


@pytest.mark.parametrize("seed", range(10))
def test_ward_matches_naive_agglomeration(seed):
    rng = np.random.default_rng(seed)
    P = rng.normal(size=(6, 3))
    D = np.sqrt(((P[:, None] - P[None]) ** 2).sum(-1))
    Z = sel.ward_merges(D)
    members = {i: frozenset([i]) for i in range(6)}
    for i, (a, b, h, _) in enumerate(Z):
        members[6 + i] = members[int(a)] | members[int(b)]
    ours = [({members[int(a)], members[int(b)]}, h) for a, b, h, _ in Z]
    ref = [({x, y}, h) for x, y, h in ward_merge_order(D.tolist())]
    for (ma, ha), (mb, hb) in zip(ours, ref):
        assert ma == mb and ha == pytest.approx(hb, rel=1e-9)


def test_cluster_select_drops_a_twin():
    rng = np.random.default_rng(9)
    y = rng.integers(0, 4, 100)
    a = y + rng.normal(0, 0.3, 100)
    table = pd.DataFrame({"a": a, "a2": a, "c": rng.normal(size=100)})
    res = sel.cluster_select(table, y)
    assert len(res.selected) == 2 and "c" in res.selected
    assert res.diagnostics.loc["a", "cluster"] == res.diagnostics.loc["a2", "cluster"]


def test_cluster_select_keeps_independent_columns():
    rng = np.random.default_rng(10)
    table = pd.DataFrame(rng.normal(size=(200, 5)), columns=list("abcde"))
    rho = stats.spearman_matrix(table).to_numpy()
    assert np.max(np.abs(rho - np.eye(5))) < 0.2
    assert sorted(sel.cluster_select(table, rng.integers(0, 3, 200)).selected) == list("abcde")


def test_cluster_select_single_feature():
    table = pd.DataFrame({"a": np.arange(10.0)})
    assert sel.cluster_select(table, np.arange(10) % 2).selected == ["a"]


def test_filter_select():
    rng = np.random.default_rng(11)
    y = rng.integers(0, 4, 100)
    table = pd.DataFrame({"lab": y + rng.normal(0, 0.01, 100), "flat": 3.0})
    res = sel.filter_select(table, y)
    assert res.selected == ["lab"]
    assert res.diagnostics.loc["flat", "note"]


def test_filter_null_rate():
    hits = 0
    for s in range(30):
        rng = np.random.default_rng(100 + s)
        table = pd.DataFrame({"z": rng.normal(size=500)})
        hits += bool(sel.filter_select(table, rng.integers(0, 4, 500)).selected)
    assert hits <= 3


def test_rfe_keeps_predictive_feature():
    rng = np.random.default_rng(12)
    y = rng.integers(0, 4, 80)
    table = pd.DataFrame(rng.normal(size=(80, 5)), columns=[f"n{i}" for i in range(5)])
    table["good"] = y + rng.normal(0, 0.2, 80)
    res = sel.rfe_select(table, y, FAST)
    assert "good" in res.selected
    assert len(res.curve) == 6


def test_rfe_label_copies_give_singleton():
    y = np.arange(40) % 4
    table = pd.DataFrame({c: y.astype(float) for c in "abc"})
    assert len(sel.rfe_select(table, y, FAST).selected) == 1


def test_rfe_single_feature():
    y = np.arange(20) % 2
    assert sel.rfe_select(pd.DataFrame({"a": y * 1.0}), y, FAST).selected == ["a"]


def test_embedded_select():
    rng = np.random.default_rng(13)
    y = rng.integers(0, 4, 120)
    table = pd.DataFrame({"copy": y * 1.0, "n1": rng.normal(size=120), "n2": rng.normal(size=120)})
    base = sel.embedded_select(table, y, n_trees=30)
    assert base.selected[0] == "copy"
    assert sel.embedded_select(table, y, top_k=3, n_trees=30).selected.__len__() == 3
    for s in range(5):
        shuffled = table.copy()
        shuffled["n1"] = np.random.default_rng(s).permutation(shuffled["n1"].to_numpy())
        assert sel.embedded_select(shuffled, y, n_trees=30).selected == base.selected


def _speaker_table(seed, n_informative=3, noise=0):
    rng = np.random.default_rng(seed)
    spk = np.repeat(np.arange(8), 6)
    y = np.repeat(np.arange(8) % 4, 6)
    cols = {f"i{j}": y + rng.normal(0, 0.6 + 0.3 * j, y.size) for j in range(n_informative)}
    cols.update({f"z{j}": rng.normal(size=y.size) for j in range(noise)})
    return pd.DataFrame(cols), y, spk


def test_iterative_curve_drops_after_last_informative():
    table, y, spk = _speaker_table(14)
    res = sel.iterative_gain_select(table, y, spk, FAST)
    accs = [a for _, a in res.curve]
    assert len(accs) == 3 and res.selected
    # Once a single informative feature remains, accuracy cannot exceed the best.
    assert accs[-1] <= max(accs)


def test_iterative_single_feature():
    table, y, spk = _speaker_table(15, n_informative=1)
    res = sel.iterative_gain_select(table, y, spk, FAST)
    assert res.selected == ["i0"] and len(res.curve) == 1


def test_iterative_noise_does_not_inflate_best():
    gaps = []
    for s in range(10):
        table, y, spk = _speaker_table(200 + s, noise=1)
        with_noise = max(a for _, a in sel.iterative_gain_select(table, y, spk, FAST).curve)
        without = max(a for _, a in sel.iterative_gain_select(table.drop(columns="z0"), y, spk, FAST).curve)
        gaps.append(with_noise - without)
    assert np.mean(gaps) <= 2


def test_selection_subset_and_no_duplicates():
    with pytest.raises(ValueError):
        sel.SelectionResult(["a", "a"], "x")


def test_feature_set_file_round_trip(tmp_path):
    p = tmp_path / "sets" / "en.txt"
    sel.write_feature_set(p, ["jitter", "crr"])
    assert p.read_text() == "jitter\ncrr\n"
    assert sel.read_feature_set(p) == ["jitter", "crr"]


def test_planted_features_recovered():
    from dyskit.pipeline.synth import synth_feature_table

    hits = {"lasso": 0, "iterative": 0, "cluster": 0}
    for s in range(10):
        st = synth_feature_table(s)
        t = st.table[st.table.language == "ko"].reset_index(drop=True)
        X, y, g = t[list(st.roles)], t.severity.to_numpy(), t.speaker.to_numpy()
        hits["lasso"] += "specific_ko" in sel.lasso_select(X, y, groups=g).selected
        params = trees.BoostParams(rounds=10, max_depth=2, n_classes=4)
        hits["iterative"] += "specific_ko" in sel.iterative_gain_select(X, y, g, params).selected
        # Clustering keeps one member per correlated group; the group holding
        # the planted feature must be represented by an informative member.
        res = sel.cluster_select(X, y)
        cid = res.diagnostics.cluster
        rep = [f for f in res.selected if cid[f] == cid["specific_ko"]]
        hits["cluster"] += rep[0] in ("specific_ko", "anti", "universal")
    assert min(hits.values()) >= 9, hits
