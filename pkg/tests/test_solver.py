import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mobility_game.model import Capacities, CostModel, Scenario, cost_tensor
from mobility_game.solver import (
    EquilibriumSolver,
    SolveOptions,
    Status,
    kkt_residual,
    solve_decomposed,
    solve_equilibrium,
)
from mobility_game.verifier import check_equilibrium, check_feasible, grid_min_potential

from conftest import capped_green, twin_modes, random_instance


def two_mode_pair(c_walk=1.0, c_bus=2.0, d=4.0):
    dem = np.zeros((2, 2, 1))
    dem[0, 1, 0] = d
    c0 = np.zeros((2, 2, 1, 2))
    c0[0, 1, 0] = [c_walk, c_bus]
    return Scenario(dem, CostModel(c0), Capacities.unbounded(2, 2))


def test_capped_green_solution():
    rep = solve_equilibrium(capped_green())
    assert rep.status is Status.CONVERGED
    assert rep.flows[0, 1, 1, 1] == pytest.approx(1.0, abs=1e-3)
    assert rep.potential == pytest.approx(3.5, abs=1e-4)
    assert rep.kkt_residual <= 1e-6
    assert rep.dual_capacity_prices["ride"][0, 1, 1] >= 0


def test_strictly_dominant_mode():
    rep = solve_equilibrium(two_mode_pair())
    assert rep.flows[0, 1, 0] == pytest.approx([4.0, 0.0], abs=1e-6)
    assert rep.potential == pytest.approx(4.0, abs=1e-6)


def test_non_unique_instance_costs_and_regularized_split():
    rep = solve_equilibrium(twin_modes())
    costs = cost_tensor(twin_modes(), rep.flows)[0, 1]
    used = rep.flows[0, 1] > 1e-6
    assert np.allclose(costs[used], 2.0, atol=1e-4)
    reg = solve_equilibrium(twin_modes(weight=0.001))
    assert reg.flows[0, 1] == pytest.approx(np.ones((2, 2)), abs=1e-3)


def test_options_override_scenario_weight():
    rep = solve_equilibrium(twin_modes(), SolveOptions(regularization_weight=0.001))
    assert rep.regularization_weight == 0.001
    assert rep.potential == pytest.approx(4.004, abs=1e-6)


def test_demand_equalities_hold_tightly():
    rep = solve_equilibrium(capped_green())
    assert np.abs(rep.flows.sum(axis=3) - capped_green().demand).max() <= 1e-9


def test_zero_demand():
    sc = twin_modes().replace(demand=np.zeros((2, 2, 2)))
    rep = solve_equilibrium(sc)
    assert rep.status is Status.CONVERGED
    assert not rep.flows.any()
    assert kkt_residual(sc, np.zeros(sc.flow_shape)) == 0.0


def test_capacity_equal_to_demand_is_saturated():
    sc = capped_green(green_capacity=4.0)
    rep = solve_equilibrium(sc)
    assert rep.status is Status.CONVERGED
    assert check_equilibrium(sc, rep.flows).is_equilibrium


def test_zero_capacity_closes_mode():
    sc = capped_green(green_capacity=0.0)
    rep = solve_equilibrium(sc)
    assert rep.status is Status.CONVERGED
    assert np.all(rep.flows[0, 1, :, 1] == 0)
    assert check_equilibrium(sc, rep.flows).is_equilibrium


def test_perturbation_breaks_kkt():
    sc = capped_green()
    rep = solve_equilibrium(sc)
    x = rep.flows.copy()
    # move 0.1 of population 1 from red to blue: still feasible, no longer optimal
    x[0, 1, 0, 0] -= 0.1
    x[0, 1, 0, 2] += 0.1
    assert kkt_residual(sc, x, rep.dual_capacity_prices) > 1e-3


def test_kkt_rejects_infeasible_flows():
    with pytest.raises(ValueError):
        kkt_residual(capped_green(), np.zeros((2, 2, 2, 3)))


def test_barrier_objective_decreases_within_stages():
    rep = solve_equilibrium(capped_green())
    for stage in rep.iterations:
        vals = np.array(stage.barrier_values)
        assert np.all(np.diff(vals) <= 1e-9 * np.maximum(1.0, np.abs(vals[:-1])))


def test_iteration_limit_reported():
    rep = solve_equilibrium(capped_green(), SolveOptions(max_outer_iterations=2))
    assert rep.status is Status.ITERATION_LIMIT
    assert rep.flows.shape == (2, 2, 2, 3)


def test_options_validation():
    with pytest.raises(ValueError):
        SolveOptions(barrier_shrink=1.0)
    with pytest.raises(ValueError):
        SolveOptions(kkt_tolerance=0.0)


def test_decomposed_matches_full_on_twin_modes():
    assert solve_decomposed(twin_modes()).potential == pytest.approx(solve_equilibrium(twin_modes()).potential, abs=1e-6)


def test_decomposed_with_ride_caps_three_locations():
    rng = np.random.default_rng(7)
    sc = random_instance(rng, n=3, capacitated=False)
    ride = np.array(sc.capacities.ride)
    ride[:, :, 1] = 0.5
    sc = sc.replace(capacities=Capacities(sc.capacities.available, sc.capacities.displace, ride))
    a, b = solve_decomposed(sc), solve_equilibrium(sc)
    assert a.status is b.status is Status.CONVERGED
    assert a.potential == pytest.approx(b.potential, abs=1e-6)


def test_decomposed_single_pair_and_parallel():
    sc = two_mode_pair()
    assert solve_decomposed(sc).potential == pytest.approx(solve_equilibrium(sc).potential, abs=1e-9)
    rng = np.random.default_rng(3)
    big = random_instance(rng, n=4, capacitated=False)
    assert solve_decomposed(big, n_jobs=2).potential == pytest.approx(solve_decomposed(big).potential, abs=1e-12)


def test_decomposed_rejects_coupling():
    sc = capped_green()
    caps = sc.capacities
    avail = np.array(caps.available)
    avail[0, 1] = 3.0
    with pytest.raises(ValueError):
        solve_decomposed(sc.replace(capacities=Capacities(avail, caps.displace, caps.ride)))


def test_estimator_api():
    est = EquilibriumSolver().fit(capped_green())
    assert est.potential_ == pytest.approx(3.5, abs=1e-4)
    assert est.status_ is Status.CONVERGED
    assert est.score(capped_green()) == pytest.approx(-3.5, abs=1e-4)
    assert est.get_params()["kkt_tolerance"] == 1e-6
    assert EquilibriumSolver(decompose=True).fit(twin_modes()).potential_ == pytest.approx(4.0, abs=1e-6)


def test_deterministic():
    a, b = solve_equilibrium(capped_green()), solve_equilibrium(capped_green())
    assert np.array_equal(a.flows, b.flows)


@given(st.integers(0, 2**32 - 1))
def test_random_instances_are_certified(seed):
    sc = random_instance(np.random.default_rng(seed))
    rep = solve_equilibrium(sc)
    assert rep.status is Status.CONVERGED
    assert rep.kkt_residual <= 1e-6
    assert check_feasible(sc, rep.flows)[0]
    assert check_equilibrium(sc, rep.flows, tol_cost=1e-4).is_equilibrium
    for kind, lam in rep.dual_capacity_prices.items():
        assert np.all(lam >= 0)


@given(st.integers(0, 2**32 - 1))
def test_random_instances_match_grid_oracle(seed):
    sc = random_instance(np.random.default_rng(seed))
    ref, _ = grid_min_potential(sc, 0.05)
    rep = solve_equilibrium(sc)
    # a coarse grid can only overestimate the true minimum
    assert rep.potential <= ref + 1e-6


def test_complementary_slackness():
    rng = np.random.default_rng(11)
    for _ in range(10):
        sc = random_instance(rng)
        rep = solve_equilibrium(sc)
        load = rep.flows.sum(axis=2)
        caps = sc.capacities
        finite = np.isfinite(caps.ride)
        lam = rep.dual_capacity_prices["ride"]
        assert np.all(np.abs(lam[finite] * (caps.ride[finite] - load[finite])) <= 1e-5)
        avail_load = load.sum(axis=1)
        finite = np.isfinite(caps.available)
        lam = rep.dual_capacity_prices["available"]
        assert np.all(np.abs(lam[finite] * (caps.available[finite] - avail_load[finite])) <= 1e-5)


def test_small_instance_is_fast():
    sc = capped_green()
    solve_equilibrium(sc)
    t0 = time.perf_counter()
    solve_equilibrium(sc)
    assert time.perf_counter() - t0 < 0.5
