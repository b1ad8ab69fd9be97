import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsfm.core import BlockVector, DecomposableInstance, InputError, TablePotential
from dsfm.gradient import (
    AcdmState,
    ProxState,
    acdm_epoch,
    rcdm_step,
    round_and_certify,
    solve_acdm,
    solve_ap,
    solve_rcdm,
)
from dsfm.level0 import Level0, OraclePolicy
from dsfm.potentials import EdgeCutPotential, RegionPotential, UnaryPotential
from oracles import exhaustive_minimum, random_submodular_table, random_table_instance


def test_round_and_certify_examples():
    inst = DecomposableInstance(2, [UnaryPotential(0, 0.0, -1.0), UnaryPotential(1, 0.0, 2.0)])
    S, value, gap = round_and_certify(np.array([-1.0, 2.0]), inst)
    assert S == {0} and value == -1.0 and gap == 0.0
    # a non-optimal point in B(f) still yields a valid upper bound and a positive gap
    inst = DecomposableInstance(2, [EdgeCutPotential(0, 1, 1.0), UnaryPotential(0, 0.0, -0.5)])
    S, value, gap = round_and_certify(np.array([0.5, -1.0]), inst)
    assert value == inst.evaluate(S) and gap == pytest.approx(value + 1.0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_round_and_certify_bounds_the_minimum(seed):
    rng = np.random.default_rng(seed)
    inst = random_table_instance(rng, n_max=8)
    y = BlockVector.greedy(inst, rng.normal(size=inst.n))
    S, value, gap = round_and_certify(y, inst)
    opt = exhaustive_minimum(inst)
    assert value == pytest.approx(inst.evaluate(S))
    assert value - gap <= opt + 1e-9 <= value + 2e-9
    assert value <= inst.evaluate([]) + 1e-12


def test_single_block_one_step_is_exact(rng):
    for _ in range(20):
        k = int(rng.integers(1, 7))
        inst = DecomposableInstance(k, [TablePotential(range(k), random_submodular_table(rng, k))])
        state = ProxState.start(inst)
        rcdm_step(state)
        S, value, gap = round_and_certify(state.y, inst)
        assert value == pytest.approx(exhaustive_minimum(inst))
        assert gap == pytest.approx(0.0, abs=1e-7)


def test_rcdm_objective_monotone(rng):
    inst = random_table_instance(rng, n_max=10, r_max=6)
    state = ProxState.start(inst, seed=4)
    prev = state.y.objective()
    for _ in range(200):
        rcdm_step(state)
        cur = state.y.objective()
        assert cur <= prev + 1e-10
        prev = cur
    assert state.y.is_member(1e-6)


def test_rcdm_seed_reproducible(rng):
    inst = random_table_instance(rng, n_max=9)
    a = solve_rcdm(inst, 50, seed=7)
    b = solve_rcdm(inst, 50, seed=7)
    np.testing.assert_array_equal(a.x.aggregate, b.x.aggregate)
    c = solve_rcdm(inst, 50, seed=8)
    assert a.iterations == c.iterations == 50


def test_frozen_acdm_equals_rcdm(rng):
    inst = random_table_instance(rng, n_max=10, r_max=6)
    rc = ProxState.start(inst, seed=3)
    ac = AcdmState(ProxState.start(inst, seed=3), frozen=True)
    for _ in range(100):
        rcdm_step(rc)
        ac.step()
    np.testing.assert_array_equal(ac.point().aggregate, rc.y.aggregate)


def test_acdm_epoch_never_worsens(rng):
    inst = random_table_instance(rng, n_max=10, r_max=6)
    state = AcdmState(ProxState.start(inst, seed=1))
    prev = state.prox.y.objective()
    for _ in range(5):
        acdm_epoch(state)
        cur = state.prox.y.objective()
        assert cur <= prev + 1e-12
        prev = cur


@pytest.mark.parametrize("solver", [solve_rcdm, solve_acdm])
def test_descent_solvers_reach_optimum(solver, rng):
    for _ in range(15):
        inst = random_table_instance(rng, n_max=9)
        rep = solver(inst, 1000 * inst.r, seed=0, tol=1e-9)
        assert rep.value == pytest.approx(exhaustive_minimum(inst), abs=1e-8)
        assert rep.certified and rep.x.is_member(1e-6)


def test_ap_reaches_optimum_and_distance_decreases(rng):
    for _ in range(10):
        inst = random_table_instance(rng, n_max=9)
        rep = solve_ap(inst, 1000, tol=1e-9)
        assert rep.value == pytest.approx(exhaustive_minimum(inst), abs=1e-8)
        hist = np.array(rep.history)
        assert np.all(np.diff(hist) <= 1e-9 * (1 + hist[0]))


def test_min_norm_point_is_fixed(rng):
    inst = random_table_instance(rng, n_max=8, r_max=4)
    rep = solve_rcdm(inst, 20000 * inst.r, seed=0)
    state = ProxState.start(inst, y0=rep.x, seed=1)
    before = state.y.aggregate.copy()
    for _ in range(5 * inst.r):
        rcdm_step(state)
    np.testing.assert_allclose(state.y.aggregate, before, atol=1e-5)


def test_budget_validation():
    inst = DecomposableInstance(1, [UnaryPotential(0, 0.0, 1.0)])
    with pytest.raises(InputError):
        solve_rcdm(inst, 0)
    assert solve_ap(inst).iterations == 1000


def test_inexact_oracle_still_bounds(rng):
    inst = DecomposableInstance(8, [RegionPotential(range(8)), EdgeCutPotential(0, 7, 2.0),
                                    *[UnaryPotential(j, 0.0, float(d)) for j, d in enumerate(rng.normal(size=8) * 4)]])
    level0 = Level0(inst, OraclePolicy.parse("wolfe:2"), eps=1e-6)
    rep = solve_rcdm(inst, 200 * inst.r, level0=level0)
    opt = exhaustive_minimum(inst)
    assert rep.value >= opt - 1e-9 and rep.lower_bound <= opt + 1e-9
    assert rep.x.is_member(1e-6)
