import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mobility_game.model import Capacities, CostModel, Scenario, eval_potential
from mobility_game.solver import solve_equilibrium
from mobility_game.verifier import (
    brute_force_equilibria,
    check_equilibrium,
    check_feasible,
    grid_min_potential,
    saturation_mask,
)

from conftest import capped_green, twin_modes, random_instance


def ex1_flows(x1, x2):
    x = np.zeros((2, 2, 2, 3))
    x[0, 1, 0] = [2 - x1, x1, 0]
    x[0, 1, 1] = [0, x2, 2 - x2]
    return x


def test_case1_flows_feasible_and_equilibrium():
    ok, viol = check_feasible(capped_green(), ex1_flows(0.0, 1.0))
    assert ok and not viol
    assert check_equilibrium(capped_green(), ex1_flows(0.0, 1.0)).is_equilibrium


def test_demand_shortfall_is_infeasible():
    x = ex1_flows(0.0, 1.0)
    x[0, 1, 0, 0] -= 1.0
    ok, viol = check_feasible(capped_green(), x)
    assert not ok
    assert [v.kind for v in viol] == ["demand"]


def test_ride_capacity_excess_is_infeasible():
    x = ex1_flows(1.0, 1.5)
    ok, viol = check_feasible(capped_green(), x)
    assert not ok
    assert any(v.kind == "ride" and v.value == pytest.approx(2.5) for v in viol)
    rep = check_equilibrium(capped_green(), x)
    assert not rep.feasible and not rep.is_equilibrium and not rep.violations


def test_case2_saturated_green_blocks_improvement():
    # x1 + x2 = 2 with x1 > 1: green is full, so blue riders cannot move
    for x1 in (1.25, 1.5, 2.0):
        rep = check_equilibrium(capped_green(), ex1_flows(x1, 2.0 - x1))
        assert rep.is_equilibrium, x1


def test_population2_on_blue_is_not_equilibrium():
    rep = check_equilibrium(capped_green(), ex1_flows(0.0, 0.0))
    assert rep.feasible and not rep.is_equilibrium
    v = [e for e in rep.violations if e.k == 1]
    assert v and v[0].used_mode == 2 and v[0].better_mode == 1
    assert v[0].cost_gap == pytest.approx(1.0)
    assert all(e.cost_gap > rep.tol_cost and not e.saturated for e in rep.violations)


def test_saturation_mask_uses_each_constraint_kind():
    sc = capped_green()
    sat = saturation_mask(sc, ex1_flows(1.0, 1.0))
    assert sat[0, 1, 1] and not sat[0, 1, 0] and not sat[0, 1, 2]


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        check_feasible(capped_green(), np.zeros((2, 2, 2, 2)))


def test_oracle_finds_both_capped_green_families():
    found = brute_force_equilibria(capped_green(), 0.25)
    pairs = {(round(x[0, 1, 0, 1], 6), round(x[0, 1, 1, 1], 6)) for x in found}
    # case 1: population 2 puts exactly 1 on green, population 1 anything up to 1
    assert {(a, 1.0) for a in (0.0, 0.25, 0.5, 0.75, 1.0)} <= pairs
    # case 2: green saturated with population 1 holding more than 1
    assert {(1.25, 0.75), (1.5, 0.5), (1.75, 0.25), (2.0, 0.0)} <= pairs
    keys = [tuple(x.ravel()) for x in found]
    assert keys == sorted(keys)


def test_oracle_equilibria_include_worse_potentials():
    sc = capped_green()
    best = solve_equilibrium(sc).potential
    pots = [eval_potential(sc, x) for x in brute_force_equilibria(sc, 0.25)]
    assert max(pots) > best + 1e-3


def test_oracle_non_unique_instance():
    found = brute_force_equilibria(twin_modes(), 0.5)
    reds = sorted(round(x[0, 1, 0, 0], 6) for x in found)
    # every split (a, 2 - a) of the red mode between the populations
    assert reds == [0.0, 0.5, 1.0, 1.5, 2.0]
    assert all(np.isclose(x[0, 1, :, 0].sum(), 2.0) for x in found)


def test_oracle_dominant_mode():
    d = np.zeros((2, 2, 1))
    d[0, 1, 0] = 2.0
    c0 = np.zeros((2, 2, 1, 2))
    c0[0, 1, 0] = [1.0, 2.0]
    sc = Scenario(d, CostModel(c0), Capacities.unbounded(2, 2))
    found = brute_force_equilibria(sc, 0.5)
    assert len(found) == 1 and found[0][0, 1, 0, 0] == 2.0


def test_oracle_size_guard():
    d = np.zeros((3, 3, 1))
    d[0, 1, 0] = 1
    with pytest.raises(ValueError, match="too large"):
        brute_force_equilibria(Scenario(d, CostModel(np.zeros((3, 3, 1, 2))), Capacities.unbounded(3, 2)), 0.5)
    with pytest.raises(ValueError):
        brute_force_equilibria(capped_green(), 0.0)


def test_grid_minimum_of_capped_green():
    pot, x = grid_min_potential(capped_green(), 0.01)
    assert pot == pytest.approx(3.5, abs=1e-9)
    assert check_feasible(capped_green(), x)[0]


@given(st.integers(0, 2**32 - 1), st.floats(1e-6, 1e-2), st.floats(0, 1e-1))
def test_tolerance_monotone(seed, tol, extra):
    rng = np.random.default_rng(seed)
    sc = random_instance(rng, capacitated=False)
    x = np.zeros(sc.flow_shape)
    # random feasible flows: split each demand by a random simplex point
    w = rng.dirichlet(np.ones(sc.n_modes), size=sc.demand.shape)
    x = sc.demand[..., None] * w
    if check_equilibrium(sc, x, tol_cost=tol).is_equilibrium:
        assert check_equilibrium(sc, x, tol_cost=tol + extra).is_equilibrium


@given(st.integers(0, 2**32 - 1))
def test_equilibrium_implies_feasible(seed):
    rng = np.random.default_rng(seed)
    sc = random_instance(rng)
    w = rng.dirichlet(np.ones(sc.n_modes), size=sc.demand.shape)
    rep = check_equilibrium(sc, sc.demand[..., None] * w)
    assert rep.feasible or not rep.is_equilibrium
