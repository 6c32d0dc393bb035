import math

import numpy as np
import pytest
from dataclasses import replace
from hypothesis import given, settings, strategies as st

from ccekit import cce, dgp, selection as sel
from ccekit._errors import InadmissibleSubsetError, SelectionError
from oracles import brute_select, naive_objective


def make_instance(seed, N=12, T=30, tau=0.0, mode="weak_cs"):
    cfg = dgp.PanelConfig(N=N, T=T, errors=dgp.ErrorConfig.for_mode(mode)).with_cell(N, T, tau)
    panel = dgp.simulate_panel(cfg, dgp.make_rng(seed))
    cs = cce.cs_averages(panel)
    fit = cce.cce_pooled(panel, cs)
    return panel, cs, fit


@pytest.mark.parametrize("N,T,expected1,expected2", [
    # 30-digit evaluations of the two penalty formulas
    (100, 100, 0.0782404601085629, 0.0921034037197618),
    (50, 10, 0.254431624344011, 0.276310211159285),
])
def test_penalty_values(N, T, expected1, expected2):
    assert sel.penalty("P1", N, T) == pytest.approx(expected1, rel=1e-14)
    assert sel.penalty("P2", N, T) == pytest.approx(expected2, rel=1e-14)


def test_all_masks_enumeration():
    bits, member, g = sel.all_masks(3)
    assert bits.tolist() == [1, 2, 3, 4, 5, 6, 7]
    assert g.tolist() == [1, 1, 2, 1, 2, 2, 3]
    assert member[4].tolist() == [True, False, True]


def test_subset_mask():
    m = sel.SubsetMask.from_members([0, 3])
    assert m.bits == 9 and m.g == 2 and m.members() == [0, 3]
    with pytest.raises(ValueError):
        sel.SubsetMask.from_members([])


@pytest.mark.parametrize("seed,T,tau", [(1, 20, 0.0), (2, 35, 0.5), (3, 50, 0.9)])
def test_cache_matches_naive_annihilator_on_every_mask(seed, T, tau):
    panel, cs, fit = make_instance(seed, N=8, T=T, tau=tau)
    reg = cce.regressor_candidates(cs)
    mw = sel.build_cache(panel, cs, fit)
    dv = sel.build_cache(panel, reg)
    _, m9, _ = sel.all_masks(9)
    _, m8, _ = sel.all_masks(8)
    got_mw = sel.objectives(mw, "MW", m9)
    got_dvs = sel.objectives(dv, "DVS", m8)
    got_adj = sel.objectives(dv, "DVS_adjusted", m8, tau=tau)
    for j in range(len(m9)):
        want = naive_objective(panel, cs.c, m9[j], "MW", residuals=fit.residuals)
        assert got_mw[j] == pytest.approx(want, rel=1e-10, abs=1e-10)
    for j in range(len(m8)):
        want = naive_objective(panel, reg.c, m8[j], "DVS")
        assert got_dvs[j] == pytest.approx(want, rel=1e-10, abs=1e-10)
        want = naive_objective(panel, reg.c, m8[j], "DVS_adjusted", tau=tau)
        assert got_adj[j] == pytest.approx(want, rel=1e-10, abs=1e-10)


@pytest.mark.parametrize("crit", ["MW", "DVS"])
@pytest.mark.parametrize("pen", ["P1", "P2"])
def test_select_agrees_with_brute_force(crit, pen):
    panel, cs, fit = make_instance(4, N=20, T=40, tau=0.5)
    cands = cs if crit == "MW" else cce.regressor_candidates(cs)
    cache = sel.build_cache(panel, cands, fit)
    res = sel.select(cache, crit, pen)
    assert res.chosen.bits == brute_select(lambda b: sel.ic_value(cache, crit, pen, b), cands.K)
    assert res.g_hat == res.chosen.g
    assert len(res.table()) == 2 ** cands.K - 1


def test_nested_monotonicity_over_100_instances():
    for seed in range(100):
        panel, cs, fit = make_instance(1000 + seed, N=10, T=25, tau=0.9 * (seed % 2))
        for crit, cands in (("MW", cs), ("DVS", cce.regressor_candidates(cs))):
            cache = sel.build_cache(panel, cands, fit)
            b, mem, _ = sel.all_masks(cands.K)
            v = sel.objectives(cache, crit, mem)
            for j, bb in enumerate(b):
                for extra in range(cands.K):
                    sup = int(bb) | (1 << extra)
                    if sup != bb:
                        assert v[j] >= v[sup - 1] - 1e-10


def test_permutation_equivariance():
    panel, cs, fit = make_instance(5, N=30, T=40)
    order = np.random.default_rng(0).permutation(cs.K)
    for crit, cands in (("MW", cs), ("DVS", cce.regressor_candidates(cs))):
        order = np.random.default_rng(1).permutation(cands.K)
        base = sel.select(sel.build_cache(panel, cands, fit), crit, "P1")
        perm = sel.select(sel.build_cache(panel, cands.permuted(order), fit), crit, "P1")
        assert perm.g_hat == base.g_hat
        mapped = sorted(int(order[j]) for j in perm.chosen.members())
        assert mapped == base.chosen.members()


def test_determinant_identity():
    panel, cs, _ = make_instance(6, N=40, T=50)
    cache = sel.build_cache(panel, cce.regressor_candidates(cs))
    m0 = sel.SubsetMask.from_members(range(4))
    q0 = sel.dvs_moments(cache, sel._member_of(cache, m0))[0] / (cache.N * cache.T)
    for members in ([0, 1, 2], [0, 1, 2, 3, 4], [5, 6], list(range(8))):
        m = sel.SubsetMask.from_members(members)
        q = sel.dvs_moments(cache, sel._member_of(cache, m))[0] / (cache.N * cache.T)
        lhs = sel.objective_difference(cache, "DVS", m, m0)
        rhs = np.linalg.slogdet(np.eye(8) + (q - q0) @ np.linalg.inv(q0))[1]
        assert lhs == pytest.approx(rhs, abs=1e-8)


@pytest.mark.parametrize("tau", [0.0, 0.3, 0.9])
def test_adjusted_shift_identity(tau):
    panel, cs, _ = make_instance(7, N=20, T=40, tau=tau)
    cache = sel.build_cache(panel, cce.regressor_candidates(cs))
    _, mem, _ = sel.all_masks(8)
    plain = sel.objectives(cache, "DVS", mem)
    adj = sel.objectives(cache, "DVS_adjusted", mem, tau=tau)
    np.testing.assert_allclose(adj, plain - 8 * tau * math.log(40), atol=1e-10)


def test_tie_break_prefers_smaller_mask_integer():
    panel, cs, fit = make_instance(8, N=15, T=30)
    c = cs.c[:, [1, 1]]  # duplicated column: masks 1 and 2 tie, mask 3 ties too
    cache = sel.build_cache(panel, cce.CandidateSet(c, ["a", "b"], "regressors_only"))
    res = sel.select(cache, "DVS", "P1")
    assert res.chosen.bits == 1
    assert res.objective[0] == pytest.approx(res.objective[1], abs=1e-12)


def test_inadmissible_subsets():
    panel, cs, _ = make_instance(9, N=10, T=20)
    zero = replace(panel, x=np.zeros_like(panel.x))
    cache = sel.build_cache(zero, cce.regressor_candidates(cs))
    with pytest.raises(SelectionError):
        sel.select(cache, "DVS", "P1")
    assert math.isinf(sel.ic_value(cache, "DVS", "P1", 3))
    with pytest.raises(InadmissibleSubsetError):
        sel.objective_difference(cache, "DVS", 1, 3)
    with pytest.raises(ValueError):
        sel.ic_value(cache, "DVS", "P1", 0)


def test_mw_needs_fit_and_adjusted_needs_tau():
    panel, cs, _ = make_instance(10)
    cache = sel.build_cache(panel, cs)
    with pytest.raises(ValueError):
        sel.select(cache, "MW", "P1")
    with pytest.raises(ValueError):
        sel.select(cache, "DVS_adjusted", "P1")


def test_er_constructed_spectrum():
    # diagonal-like candidates with Gram spectrum (100,100,100,100,1,1,1,1) * T
    T = 8
    c = np.zeros((T, 8))
    for j in range(8):
        c[j, j] = math.sqrt(T * (100.0 if j < 4 else 1.0))
    assert sel.er_count(c) == 4
    assert sel.er_count(c[:, [0, 5]]) == 1
    with pytest.raises(ValueError):
        sel.er_count(c[:, :1])


def test_er_scaled_identity_sigma_is_unscaled():
    c = np.random.default_rng(0).standard_normal((50, 5)) @ np.diag([5, 4, 3, 0.1, 0.1])
    assert sel.er_count(c, scaled=True, sigma=np.eye(5)) == sel.er_count(c)


def test_sigma_hat_oracle():
    z = np.random.default_rng(1).standard_normal((6, 10, 3))
    d = z - z.mean(axis=0)
    want = sum(d[i].T @ d[i] for i in range(6)) / 60
    np.testing.assert_allclose(sel.sigma_hat(z), want, atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31), st.sampled_from([15, 30]), st.sampled_from([0.0, 0.9]))
def test_select_is_deterministic_and_in_range(seed, T, tau):
    panel, cs, fit = make_instance(seed, N=10, T=T, tau=tau)
    cache = sel.build_cache(panel, cs, fit)
    a = sel.select(cache, "MW", "P2")
    b = sel.select(sel.build_cache(panel, cs, fit), "MW", "P2")
    assert a.chosen == b.chosen and 1 <= a.g_hat <= 9
