"""Tests for free/Coxeter group words, growth, and the kernel lemma model."""

import pytest

from qrball.words import (
    AB_A1,
    AB_A2,
    AB_B1,
    AB_B2,
    ABWord,
    BudgetExceeded,
    CoxeterPresentation,
    KERNEL_X,
    KERNEL_Y,
    KERNEL_Z,
    ab_enumerate,
    ab_phi,
    coxeter_reduce,
    free_growth_closed_form,
    free_reduce,
    growth_bfs,
    growth_bfs_coxeter,
    growth_bfs_free,
    is_trivial_bounded,
    kernel_lemma_check,
    sphere_count,
)


def test_free_reduce():
    assert free_reduce((1, -1)) == ()
    assert free_reduce((1, 2, -2, 1)) == (1, 1)
    assert free_reduce((1, 2, 3)) == (1, 2, 3)
    assert free_reduce(free_reduce((1, 2, -2, -1, 3))) == (3,)


def test_growth_closed_form_values():
    assert free_growth_closed_form(3, 1) == 7
    assert sphere_count(3, 1) == 6
    assert free_growth_closed_form(3, 2) == 37
    assert sphere_count(3, 2) == 30
    assert free_growth_closed_form(2, 3) == 53
    assert free_growth_closed_form(3, 0) == 1


def test_growth_bfs_matches_closed_form():
    for m in (2, 3):
        for k in range(0, 5):
            assert growth_bfs_free(m, k) == free_growth_closed_form(m, k)


def test_sphere_count_is_growth_difference():
    for m in (2, 3, 4):
        for k in range(1, 6):
            assert sphere_count(m, k) == free_growth_closed_form(
                m, k
            ) - free_growth_closed_form(m, k - 1)


def test_growth_budget_guard():
    with pytest.raises(BudgetExceeded):
        growth_bfs_free(4, 12, budget=10**6)


def _dihedral(m):
    return CoxeterPresentation(((1, m), (m, 1)))


def test_coxeter_reduce_dihedral():
    pres = _dihedral(3)
    red, cert = coxeter_reduce((0, 0), pres)
    assert red == () and cert
    red, cert = coxeter_reduce((0, 1, 0, 1, 0, 1), pres)  # (st)^3 = e
    assert red == () and cert
    red, cert = coxeter_reduce((0, 1, 0), pres)
    assert len(red) == 3 and cert


def test_is_trivial_bounded():
    pres = _dihedral(3)
    assert is_trivial_bounded((0, 0), pres) == "trivial"
    assert is_trivial_bounded((0, 1) * 3, pres) == "trivial"
    assert is_trivial_bounded((0, 1), pres) == "nontrivial"
    inf = CoxeterPresentation(((1, 0), (0, 1)))
    assert is_trivial_bounded((0, 1) * 5, inf) == "nontrivial"
    assert is_trivial_bounded((0, 1, 0), inf) == "nontrivial"  # odd length


def test_budgets_never_flip_verdicts():
    pres = CoxeterPresentation(((1, 3, 2), (3, 1, 3), (2, 3, 1)))
    w = (0, 1, 2, 1, 0, 1, 2, 1)
    verdicts = set()
    for budget in (10, 100, 10000):
        v = is_trivial_bounded(w, pres, budget=budget)
        if v != "unknown":
            verdicts.add(v)
    assert len(verdicts) <= 1


def test_coxeter_growth_finite_group():
    # A1 x A1: Klein four-group, sizes 1, 3, 4, 4...
    pres = CoxeterPresentation(((1, 2), (2, 1)))
    assert growth_bfs_coxeter(pres, 0) == 1
    assert growth_bfs_coxeter(pres, 1) == 3
    assert growth_bfs_coxeter(pres, 2) == 4
    assert growth_bfs_coxeter(pres, 5) == 4
    # A2 (symmetric group S3): order 6
    pres3 = _dihedral(3)
    assert growth_bfs_coxeter(pres3, 6) == 6


def test_coxeter_growth_free_product_of_z2():
    # all m_ij infinite on 4 generators: growth of Z2 * Z2 * Z2 * Z2
    n = 4
    mat = [[1 if i == j else 0 for j in range(n)] for i in range(n)]
    pres = CoxeterPresentation(tuple(map(tuple, mat)))
    # direct formula: 1 + sum n*(n-1)^(i-1)
    for k in range(0, 5):
        expect = 1 + sum(n * (n - 1) ** (i - 1) for i in range(1, k + 1))
        assert growth_bfs_coxeter(pres, k) == expect


def test_growth_dispatcher():
    assert growth_bfs("free", 2, m=3) == 37
    pres = _dihedral(3)
    assert growth_bfs("coxeter", 6, pres=pres) == 6


def test_ab_word_normal_form():
    a3 = AB_A1 * AB_A2
    assert a3.syllables == ((0, 3),)
    assert (AB_A1 * AB_A1).is_identity()
    w = AB_A1 * AB_B1 * AB_B1 * AB_A1
    assert w.is_identity()
    assert (KERNEL_Z).syllables == ((0, 3), (1, 2), (0, 1))


def test_ab_phi():
    assert ab_phi(AB_A1 * AB_B1) == 0
    assert ab_phi(AB_A1 * AB_A2) == 3
    assert ab_phi(AB_A1 * AB_B2) == 3  # c1 c2 = c3 != e
    assert ab_phi(KERNEL_X) == 0 and ab_phi(KERNEL_Y) == 0 and ab_phi(KERNEL_Z) == 0


def test_ab_enumerate_counts():
    # 1 + sum over n of 2 * 3^n alternating normal forms
    elems = ab_enumerate(3)
    assert len(elems) == 1 + 2 * (3 + 9 + 27)
    keys = {e.syllables for e in elems}
    assert len(keys) == len(elems)


def test_a1a2_not_in_kernel():
    assert ab_phi(AB_A1 * AB_A2) != 0


def test_kernel_lemma_small():
    report = kernel_lemma_check(4)
    assert report["membership_ok"] and report["freeness_ok"]
    assert report["kernel_elements_checked"] > 0


def test_kernel_lemma_L6():
    report = kernel_lemma_check(6)
    assert report["membership_ok"] and report["freeness_ok"]
