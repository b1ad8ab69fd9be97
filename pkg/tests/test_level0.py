import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsfm.core import CapabilityError, CertificateError, check_submodular, DecomposableInstance, InputError, TablePotential, check_base_membership
from dsfm.level0 import (
    Level0,
    OraclePolicy,
    OracleRequest,
    brute_force_sfm,
    fujishige_wolfe,
    quad_oracle_from_sfm,
    sfm_from_quad_oracle,
)
from dsfm.potentials import EdgeCutPotential, RegionPotential, SquarePotential, oracle_edge_cut
from oracles import greedy_vertices, hull_min_norm, random_submodular_table, subsets


def brute_sfm_reference(pot, w):
    best = min(pot.value(S) + sum(w[pot.local[e]] for e in S) for S in subsets(pot.support.tolist()))
    return best


def test_wolfe_edge_cold_start():
    y, st_ = fujishige_wolfe(OracleRequest(EdgeCutPotential(0, 1, 1.0), np.zeros(2)))
    np.testing.assert_allclose(y, 0.0, atol=1e-12)
    assert st_.converged and st_.major <= 2


def test_wolfe_warm_start_at_optimum():
    pot = RegionPotential(range(5))
    w = np.array([3.0, -1.0, 0.5, 2.0, -4.0])
    opt = pot.quad_oracle(w)
    y, st_ = fujishige_wolfe(OracleRequest(pot, w, warm_start=opt))
    np.testing.assert_allclose(y, opt, atol=1e-12)
    assert st_.major == 0 and len(st_.history) == 1


def test_wolfe_matches_vertex_hull_qp(rng):
    for _ in range(10):
        pot = TablePotential(range(5), random_submodular_table(rng, 5))
        w = rng.normal(size=5) * 3
        y, st_ = fujishige_wolfe(OracleRequest(pot, w, eps=1e-14))
        ref = hull_min_norm(greedy_vertices(pot), w)
        assert np.sum((y + w) ** 2) <= np.sum((ref + w) ** 2) + 1e-6
        np.testing.assert_allclose(y, ref, atol=1e-4)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(1, 7))
def test_wolfe_monotone_and_member(seed, k):
    rng = np.random.default_rng(seed)
    pot = TablePotential(range(k), random_submodular_table(rng, k))
    w = rng.normal(size=k) * 4
    y, st_ = fujishige_wolfe(OracleRequest(pot, w))
    assert np.all(np.diff(st_.history) <= 1e-9 * (1 + max(st_.history)))
    assert check_base_membership(pot, y, 1e-8)


def test_wolfe_cap_flags_nonconverged():
    pot = RegionPotential(range(30))
    w = np.linspace(-20, 20, 30) ** 3 / 400
    y, st_ = fujishige_wolfe(OracleRequest(pot, w, max_major=3))
    assert not st_.converged and st_.major == 3
    assert y.sum() == pytest.approx(pot.total)


def test_request_validation():
    with pytest.raises(InputError):
        OracleRequest(EdgeCutPotential(0, 1, 1.0), np.zeros(2), eps=0)


def test_brute_force_sfm_examples():
    mask, val = brute_force_sfm(RegionPotential(range(3)), np.zeros(3))
    assert not mask.any() and val == 0
    mask, val = brute_force_sfm(EdgeCutPotential(0, 1, 1.0), np.array([-2.0, 2.0]))
    assert mask.tolist() == [True, False] and val == -1.0


def test_brute_force_sfm_region_enumeration():
    # enumeration over all 16 subsets: the whole support attains -6
    pot = RegionPotential(range(4))
    w = np.array([-3.0, -3.0, 0.0, 0.0])
    mask, val = brute_force_sfm(pot, w)
    assert mask.all() and val == -6.0
    assert pot.value([0, 1]) + w[:2].sum() == -2.0
    assert val == brute_sfm_reference(pot, w)


def test_brute_force_sfm_edge_cases():
    pot = EdgeCutPotential(7, 3, 1.0)
    assert pot.support.tolist() == [7, 3]
    # w on (7, 3) = (0, -1): {} -> 0, {7} -> 1, {3} -> 0, {3, 7} -> -1
    mask, val = brute_force_sfm(pot, np.array([0.0, -1.0]))
    assert mask.all() and val == -1.0


def test_brute_force_tie_prefers_smallest_ids():
    # 2-5-9 path cut, w = (0, 0, 0): {} and the full set both give 0
    table = TablePotential([2, 5, 9], [0, 1, 2, 1, 1, 2, 1, 0])
    mask, val = brute_force_sfm(table, np.zeros(3))
    assert not mask.any() and val == 0.0
    # w = (-1, 0, 0): {2} -> 0, {2, 5, 9} -> -1, {2, 5} -> 0; unique
    mask, val = brute_force_sfm(table, np.array([-1.0, 0.0, 0.0]))
    assert mask.all() and val == -1.0
    # w = (-1, 2, -1): {} -> 0, {2} -> 0, {9} -> 0, {2, 9} -> 0, full -> 0
    mask, val = brute_force_sfm(table, np.array([-1.0, 2.0, -1.0]))
    assert not mask.any() and val == 0.0


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(1, 6))
def test_brute_force_tie_rule_matches_enumeration(seed, k):
    rng = np.random.default_rng(seed)
    ids = sorted(rng.choice(20, k, replace=False).tolist())
    pot = TablePotential(rng.permutation(ids), random_submodular_table(rng, k))
    w = rng.integers(-2, 3, size=k).astype(float)
    loc = {int(e): j for j, e in enumerate(pot.support)}
    scored = [(pot.value(S) + sum(w[loc[e]] for e in S), tuple(sorted(S))) for S in subsets(ids)]
    best_val = min(v for v, _ in scored)
    best_set = min(S for v, S in scored if v == best_val)
    mask, val = brute_force_sfm(pot, w)
    assert val == best_val
    assert tuple(sorted(pot.support[mask].tolist())) == best_set


def test_brute_force_capability():
    with pytest.raises(CapabilityError):
        brute_force_sfm(RegionPotential(range(25)), np.zeros(25))


def test_quad_from_sfm_matches_edge_closed_form(rng):
    for _ in range(100):
        pot = EdgeCutPotential(0, 1, rng.random() * 3)
        w = rng.normal(size=2) * 3
        np.testing.assert_allclose(quad_oracle_from_sfm(pot, w, brute_force_sfm), oracle_edge_cut(pot, w), atol=1e-8)


def test_quad_from_sfm_matches_wolfe_on_tables(rng):
    for _ in range(40):
        k = int(rng.integers(1, 6))
        pot = TablePotential(range(k), random_submodular_table(rng, k))
        w = rng.normal(size=k) * 3
        ref, st_ = fujishige_wolfe(OracleRequest(pot, w, eps=1e-14))
        stats = {}
        y = quad_oracle_from_sfm(pot, w, brute_force_sfm, stats=stats)
        np.testing.assert_allclose(y, ref, atol=1e-6)
        assert stats["sfm_calls"] <= 2 * k - 1
        np.testing.assert_allclose(quad_oracle_from_sfm(pot, w), y, atol=1e-12)


def test_quad_from_sfm_symmetric_region_zero():
    np.testing.assert_allclose(quad_oracle_from_sfm(RegionPotential(range(4)), np.zeros(4)), 0.0, atol=1e-12)


def test_quad_from_sfm_detects_bad_inner_oracle():
    pot = RegionPotential(range(4))

    def lazy(p, w):
        return np.zeros(p.size, dtype=bool), 0.0

    with pytest.raises(CertificateError):
        quad_oracle_from_sfm(pot, np.array([-8.0, 8.0, 0.0, 0.0]), lazy)


def test_sfm_from_quad_matches_brute(rng):
    for _ in range(300):
        k = int(rng.integers(1, 6))
        pot = TablePotential(rng.permutation(8)[:k], random_submodular_table(rng, k))
        w = rng.integers(-8, 9, size=k).astype(float)
        mask, val = sfm_from_quad_oracle(pot, w)
        assert val == pytest.approx(brute_force_sfm(pot, w)[1], abs=1e-9)
        assert val == pytest.approx(pot.value_mask(mask) + w[mask].sum(), abs=1e-9)


def test_sfm_from_quad_examples():
    mask, val = sfm_from_quad_oracle(RegionPotential(range(3)), np.zeros(3))
    assert val == 0.0
    mask, val = sfm_from_quad_oracle(EdgeCutPotential(0, 1, 1.0), np.array([-2.0, 2.0]))
    assert mask.tolist() == [True, False] and val == -1.0


def test_sfm_from_quad_returns_smallest_minimizer():
    # {} and {0, 1} both minimize the plain edge cut; the smallest is {}
    mask, val = sfm_from_quad_oracle(EdgeCutPotential(0, 1, 1.0), np.zeros(2))
    assert not mask.any() and val == 0.0


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(1, 8))
def test_reduction_round_trip(seed, k):
    rng = np.random.default_rng(seed)
    pot = TablePotential(range(k), random_submodular_table(rng, k))
    w = rng.integers(-10, 11, size=k).astype(float)
    quad = lambda p, ww: quad_oracle_from_sfm(p, ww, brute_force_sfm)  # noqa: E731
    mask, val = sfm_from_quad_oracle(pot, w, quad)
    assert val == brute_force_sfm(pot, w)[1]


def test_greedy_coordinates_bounded_by_fmax(rng):
    for _ in range(30):
        pot = TablePotential(range(5), random_submodular_table(rng, 5))
        fmax = np.abs(pot.all_values).max()
        assert np.abs(greedy_vertices(pot)).max() <= 2 * fmax + 1e-12


def test_policy_parse_and_exactness():
    assert OraclePolicy.parse("wolfe:10:warm") == OraclePolicy("wolfe", 10, None, True)
    assert str(OraclePolicy.parse("wolfe:10:warm")) == "wolfe:10:warm"
    assert OraclePolicy.parse("brute").exact and OraclePolicy.parse("wolfe").exact
    assert not OraclePolicy.parse("wolfe:10").exact
    with pytest.raises(InputError):
        OraclePolicy.parse("magic")


def test_level0_dispatch_and_counts(rng):
    inst = DecomposableInstance(4, [EdgeCutPotential(0, 1, 1.0), RegionPotential(range(4)),
                                    SquarePotential([0, 1, 2, 3], 1.0)])
    l0 = Level0(inst, per_kind={"region": OraclePolicy.parse("wolfe")}, eps=1e-12)
    w = rng.normal(size=4)
    for i, p in enumerate(inst.potentials):
        y = l0.quad(i, w[: p.size] if p.size == 4 else w[:2])
    assert l0.calls.tolist() == [1, 1, 1]
    assert l0.exact and l0.inexact_calls == 0
    np.testing.assert_allclose(l0.quad(1, w), inst.potentials[1].quad_oracle(w), atol=1e-6)
    mask, val = Level0(inst, OraclePolicy("brute")).sfm(0, np.array([-2.0, 2.0]))
    assert val == -1.0
