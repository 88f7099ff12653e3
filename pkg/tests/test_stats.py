import numpy as np
import pandas as pd
import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from dyskit import stats
from oracles import kendall_tau_b, kruskal_h, spearman


def test_kendall_hand_case():
    r = stats.kendall_tau([1, 2, 3, 4], [1, 3, 2, 4])
    assert r.coefficient == pytest.approx(2 / 3, abs=1e-12)
    assert r.n == 4


@pytest.mark.parametrize("y, expected", [([1, 2, 3, 4, 5], 1.0), ([5, 4, 3, 2, 1], -1.0)])
def test_kendall_extremes(y, expected):
    assert stats.kendall_tau([1, 2, 3, 4, 5], y).coefficient == pytest.approx(expected)


def test_kendall_constant_input_raises():
    with pytest.raises(stats.UndefinedCoefficientError):
        stats.kendall_tau([1, 1, 1], [1, 2, 3])


def test_kendall_matches_pair_counting_with_ties():
    rng = np.random.default_rng(5)
    for _ in range(200):
        n = int(rng.integers(2, 11))
        x = rng.integers(0, 4, n).tolist()
        y = rng.integers(0, 4, n).tolist()
        if len(set(x)) < 2 or len(set(y)) < 2:
            continue
        assert stats.kendall_tau(x, y).coefficient == kendall_tau_b(x, y)


def test_kendall_p_value_against_scipy_asymptotic():
    rng = np.random.default_rng(1)
    x = rng.integers(0, 4, 80)
    y = x + rng.normal(0, 2, 80)
    ours = stats.kendall_tau(x, y)
    ref = scipy.stats.kendalltau(x, y, method="asymptotic")
    assert ours.coefficient == pytest.approx(ref.statistic, abs=1e-12)
    assert ours.p_value == pytest.approx(ref.pvalue, rel=1e-9)


def test_kruskal_hand_case():
    r = stats.kruskal_wallis([[1, 2, 3], [4, 5, 6]])
    assert r.statistic == pytest.approx(27 / 7, abs=1e-9)
    assert round(r.statistic, 3) == 3.857
    assert r.df == 1


def test_kruskal_identical_values():
    r = stats.kruskal_wallis([[2, 2], [2, 2, 2]])
    assert r.statistic == 0 and r.p_value == 1


def test_kruskal_matches_rank_oracle():
    rng = np.random.default_rng(2)
    for _ in range(100):
        k = int(rng.integers(2, 5))
        groups = [rng.integers(0, 6, int(rng.integers(1, 7))).tolist() for _ in range(k)]
        if sum(map(len, groups)) < 3 or len({v for g in groups for v in g}) < 2:
            continue
        assert stats.kruskal_wallis(groups).statistic == pytest.approx(kruskal_h(groups), abs=1e-9)


def test_kruskal_shifted_group_near_maximum():
    groups = [[1, 2, 3], [4, 5, 6], [100, 101, 102]]
    # Fully separated groups give the largest H attainable for these sizes.
    h_max = 12 / (9 * 10) * sum((3 * (3 * i + 2)) ** 2 / 3 for i in range(3)) - 30
    assert stats.kruskal_wallis(groups).statistic == pytest.approx(h_max)


@given(st.lists(st.lists(st.integers(-20, 20), min_size=1, max_size=6), min_size=2, max_size=4))
@settings(max_examples=60, deadline=None)
def test_kruskal_invariant_under_monotone_transform(groups):
    pooled = [v for g in groups for v in g]
    if len(pooled) < 3:
        return
    a = stats.kruskal_wallis(groups)
    b = stats.kruskal_wallis([[np.exp(v / 5) + v**3 for v in g] for g in groups])
    assert a.statistic == pytest.approx(b.statistic, abs=1e-9)


def test_spearman_matches_rank_then_pearson():
    rng = np.random.default_rng(3)
    t = pd.DataFrame(rng.integers(0, 6, (20, 5)).astype(float), columns=list("abcde"))
    m = stats.spearman_matrix(t)
    for a in t.columns:
        for b in t.columns:
            assert m.at[a, b] == pytest.approx(spearman(t[a].tolist(), t[b].tolist()), abs=1e-9)


def test_spearman_monotone_transform_and_missing():
    x = np.linspace(0.1, 3, 15)
    t = pd.DataFrame({"x": x, "g": np.exp(x), "c": np.r_[1.0, [np.nan] * 14]})
    m = stats.spearman_matrix(t)
    assert m.at["x", "g"] == pytest.approx(1.0)
    assert m.at["x", "x"] == 1.0
    assert np.isnan(m.at["x", "c"])


def test_vif_orthogonal_and_duplicate():
    n = 8
    X = np.array([[1, 1, 1], [1, 1, -1], [1, -1, 1], [1, -1, -1], [-1, 1, 1], [-1, 1, -1], [-1, -1, 1], [-1, -1, -1]])
    t = pd.DataFrame(X[:n], columns=list("abc"), dtype=float)
    for c in t.columns:
        assert stats.vif(t, c).value == pytest.approx(1.0, abs=1e-6)
    t["d"] = t["a"]
    r = stats.vif(t, "d")
    assert r.capped and r.value == stats.VIF_CAP


def test_vif_near_sum_exceeds_100():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=50), rng.normal(size=50)
    t = pd.DataFrame({"a": a, "b": b, "s": a + b + rng.normal(0, 0.01, 50)})
    assert stats.vif(t, "s").value > 100


def test_vif_affine_invariance():
    rng = np.random.default_rng(4)
    t = pd.DataFrame(rng.normal(size=(40, 4)), columns=list("abcd"))
    t["d"] += t["a"]
    base = stats.vif(t, "a").value
    for _ in range(3):
        u = t.copy()
        col = rng.choice(list("abcd"))
        u[col] = u[col] * rng.uniform(0.1, 10) + rng.normal(0, 5)
        assert stats.vif(u, "a").value == pytest.approx(base, rel=1e-8)


def test_descriptive_examples():
    d = stats.descriptive([1, 4])
    assert d["mean"] == 2.5 and d["std"] == 1.5
    flat = stats.descriptive([2, 2, 2])
    assert flat["std"] == 0 and np.isnan(flat["skewness"])
    assert stats.descriptive([-3, -1, 0, 1, 3])["skewness"] == pytest.approx(0, abs=1e-9)
    ref = scipy.stats.kurtosis([1, 2, 2, 9, 4])
    assert stats.descriptive([1, 2, 2, 9, 4])["kurtosis"] == pytest.approx(ref)
