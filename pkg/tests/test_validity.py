import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from qualcode import validity
from qualcode.errors import DegenerateTable, IndexMismatch, UnknownClass
from qualcode.special import chi2_sf, gammainc, gammaincc


def test_chi2_examples():
    flat = validity.chi2_homogeneity([[10, 10], [10, 10]])
    assert flat.chi2 == 0 and flat.p_value == 1.0 and flat.cramers_v == 0
    r = validity.chi2_homogeneity([[30, 20], [20, 30]])
    assert r.chi2 == pytest.approx(4.0) and r.dof == 1 and r.n == 100
    assert r.p_value == pytest.approx(0.04550026, abs=1e-8)
    assert r.cramers_v == pytest.approx(0.2)
    assert chi2_sf(3.841, 1) == pytest.approx(0.0500, abs=1e-4)


def test_empty_columns_are_dropped():
    r = validity.chi2_homogeneity([[30, 0, 20], [20, 0, 30]])
    assert r.dof == 1 and r.chi2 == pytest.approx(4.0) and r.shape == (2, 2)


def test_degenerate_tables():
    with pytest.raises(DegenerateTable):
        validity.chi2_homogeneity([[0, 0], [1, 2]])
    with pytest.raises(DegenerateTable):
        validity.chi2_homogeneity([[5, 0], [7, 0]])
    with pytest.raises(DegenerateTable):
        validity.chi2_homogeneity([[1, 2, 3]])


def test_cramers_v_examples():
    assert validity.cramers_v(1147.722, 3000, 2, 21) == pytest.approx(0.6185, abs=1e-4)
    assert validity.cramers_v(807.627, 6000, 4, 2) == pytest.approx(0.3669, abs=1e-4)
    assert validity.cramers_v(0, 10, 2, 2) == 0


def test_bonferroni_examples():
    adj, rej = validity.bonferroni([0.001] * 435)
    assert adj[0] == pytest.approx(0.435) and not rej[0]
    assert validity.bonferroni([0.0, 0.5])[1] == [True, False]
    assert validity.bonferroni([0.03]) == ([0.03], [True])


def test_bh_examples():
    assert validity.benjamini_hochberg([0.01, 0.02, 0.03, 0.04])[1] == [True] * 4
    assert validity.benjamini_hochberg([1.0, 1.0])[1] == [False, False]
    assert validity.benjamini_hochberg([0.04])[1] == [True]
    assert validity.benjamini_hochberg([]) == ([], [])
    with pytest.raises(ValueError):
        validity.bonferroni([1.2])


p_vectors = st.lists(st.floats(0, 1), min_size=1, max_size=30)


@given(p_vectors, st.sampled_from([0.01, 0.05, 0.1]))
def test_bonferroni_subset_of_bh(p, q):
    _, bonf = validity.bonferroni(p, q)
    adj, bh = validity.benjamini_hochberg(p, q)
    assert all(b <= h for b, h in zip(bonf, bh))
    assert bh == oracles.bh_reject(p, q)
    assert adj == oracles.bh_adjusted(p)
    # rejecting by adjusted p agrees with the step-up rule
    assert bh == [a <= q for a in adj] or any(math.isclose(a, q) for a in adj)


tables = st.integers(2, 5).flatmap(lambda r: st.integers(2, 8).flatmap(
    lambda c: st.lists(st.lists(st.integers(0, 50), min_size=c, max_size=c), min_size=r, max_size=r)))


@settings(max_examples=200)
@given(tables)
def test_chi2_matches_brute_force(table):
    t = np.array(table)
    if (t.sum(axis=1) == 0).any() or (t.sum(axis=0) > 0).sum() < 2:
        with pytest.raises(DegenerateTable):
            validity.chi2_homogeneity(t)
        return
    res = validity.chi2_homogeneity(t)
    stat, dof, n, r, c = oracles.chi2(table)
    assert res.chi2 == pytest.approx(stat, rel=1e-9, abs=1e-12)
    assert res.dof == dof
    assert 0 <= res.cramers_v <= 1 + 1e-12
    assert 0 <= res.p_value <= 1


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 40), st.floats(0, 200))
def test_p_value_matches_integration_oracle(dof, x):
    assert chi2_sf(x, dof) == pytest.approx(oracles.chi2_pvalue(x, dof), abs=1e-8)


@given(st.integers(1, 40), st.floats(0.01, 150), st.floats(0.01, 20))
def test_p_value_strictly_decreasing(dof, x, step):
    hi = chi2_sf(x + step, dof)
    lo = chi2_sf(x, dof)
    assert hi <= lo
    if lo > 1e-300 and lo < 1:
        assert hi < lo


@given(st.floats(0.1, 50), st.floats(0, 100))
def test_gamma_halves_sum_to_one(a, x):
    assert gammainc(a, x) + gammaincc(a, x) == pytest.approx(1.0, abs=1e-12)


def test_suites():
    a = [["x"] * 20 + ["y"] * 10, ["x"] * 15 + ["y"] * 15, ["x"] * 25 + ["y"] * 5]
    within = validity.within_method_suite(a, "A")
    assert within.total_tests == 3 and within.scope == "within"
    same = validity.between_method_suite(a, a, ("A", "A"))
    assert same.n_sig_raw == 0 and same.mean_chi2 == 0 and same.total_tests == 3
    with pytest.raises(IndexMismatch):
        validity.between_method_suite(a, a[:2])
    two = validity.within_method_suite([a[0], a[0]])
    assert two.results[0].chi2 == 0 and two.results[0].p_value == 1.0 and two.n_sig_raw == 0
    assert two.std_chi2 == 0.0


def test_summary_uses_sample_std():
    runs = [["x"] * 20 + ["y"] * 10, ["x"] * 10 + ["y"] * 20, ["x"] * 15 + ["y"] * 15]
    s = validity.within_method_suite(runs)
    chis = [r.chi2 for r in s.results]
    assert s.std_chi2 == pytest.approx(np.std(chis, ddof=1))
    assert s.to_dict()["std_kind"].startswith("sample")


def test_pooled_and_classwise():
    m = {"A": [["x"] * 30 + ["y"] * 20], "B": [["x"] * 20 + ["y"] * 30]}
    pooled = validity.pooled_pair_test(m["A"], m["B"])
    assert pooled.chi2 == pytest.approx(4.0) and pooled.n == 100
    cw = validity.classwise_disagreement(m, "x")
    assert cw.chi2 == pytest.approx(4.0)
    same = {"A": [["x", "y"] * 5], "B": [["y", "x"] * 5]}
    assert validity.classwise_disagreement(same, "x").chi2 == 0
    with pytest.raises(UnknownClass):
        validity.classwise_disagreement(m, "z")
    with pytest.raises(IndexMismatch):
        validity.classwise_disagreement({"A": [["x"]], "B": [["x", "y"]]}, "x")


def test_classwise_published_counts():
    # 4 methods x 1500 items; chi2 back-solved tables reproduce the published V
    assert validity.cramers_v(437.382, 6000, 4, 2) == pytest.approx(0.270, abs=0.002)


@pytest.mark.parametrize("v,band", [(0.25, "High Disagreement"), (0.2, "High Disagreement"),
                                    (0.15, "Moderate Disagreement"), (0.05, "Low Disagreement"),
                                    (0.01, "Very Low Disagreement")])
def test_bands(v, band):
    assert validity.disagreement_band(v) == band


def test_v_matrix():
    runs = {"A": [["x"] * 30 + ["y"] * 20], "B": [["x"] * 20 + ["y"] * 30], "C": [["x"] * 25 + ["y"] * 25]}
    methods, m, tests = validity.pairwise_v_matrix(runs)
    assert methods == ["A", "B", "C"] and np.allclose(m, m.T) and np.allclose(np.diag(m), 1)
    assert m[0, 1] == pytest.approx(0.2) and len(tests) == 3
