import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from mobility_game.game import (
    PAYOFF_FIELDS,
    ActionGrid,
    MunicipalWeights,
    NoEquilibriumError,
    PayoffTensor,
    StakeholderGame,
    backward_induction,
    build_payoff_tensor,
    default_workers,
    fare_monotonicity_violations,
    nash_by_bus_price,
    outcome_rows,
    pareto_frontier,
    play,
    pure_nash_equilibria,
    reprice,
)
from mobility_game.metrics import compute_metrics
from mobility_game.solver import solve_equilibrium

from oracles import best_response_nash, dominance_frontier, dominates


def synthetic(shape, rng, integer=True):
    grid = ActionGrid(tuple(range(shape[0])), tuple(range(shape[1])), tuple(range(shape[2])))
    draw = (lambda: rng.integers(0, 5, size=shape).astype(float)) if integer else (lambda: rng.uniform(0, 5, size=shape))
    values = {f: draw() for f in PAYOFF_FIELDS}
    return PayoffTensor(grid, values, np.zeros(shape + (4,)), np.ones(shape, bool))


def test_action_grid_defaults_and_validation():
    g = ActionGrid()
    assert g.shape == (9, 9, 4)
    assert g.municipality_prices == (0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0)
    assert g.bike_prices == (0.0, 0.4, 0.8, 1.2)
    for bad in ([], [1.0, 1.0], [2.0, 1.0], [-1.0, 0.0]):
        with pytest.raises(ValueError):
            ActionGrid(municipality_prices=bad)
    assert ActionGrid.from_dict(g.to_dict()) == g
    with pytest.raises(ValueError):
        ActionGrid.from_dict({"nonsense": [1]})


def test_weights_validation_and_scaling():
    with pytest.raises(ValueError):
        MunicipalWeights(0, 0, 0)
    with pytest.raises(ValueError):
        MunicipalWeights(-1, 1, 0)
    assert MunicipalWeights(1, 0.5, 2).normalized() == MunicipalWeights(10, 5, 20).normalized()


def test_dominant_strategies():
    ra = np.array([[0.0, 0.0], [1.0, 1.0]])
    rb = np.array([[0.0, 1.0], [0.0, 1.0]])
    assert pure_nash_equilibria(ra, rb) == [(1, 1)]


def test_total_tie_returns_all_cells():
    z = np.zeros((3, 2))
    assert pure_nash_equilibria(z, z) == [(a, b) for a in range(3) for b in range(2)]


def test_ties_within_tolerance_count():
    ra = np.array([[1.0], [1.0 + 5e-10]])
    assert pure_nash_equilibria(ra, np.zeros((2, 1))) == [(0, 0), (1, 0)]


def test_invalid_cells_are_excluded():
    ra = np.array([[0.0, 0.0], [5.0, 0.0]])
    rb = np.zeros((2, 2))
    valid = np.array([[True, True], [False, True]])
    assert (1, 0) not in pure_nash_equilibria(ra, rb, valid)
    assert (0, 0) in pure_nash_equilibria(ra, rb, valid)


def test_empty_slice():
    with pytest.raises(ValueError):
        pure_nash_equilibria(np.zeros((0, 0)), np.zeros((0, 0)))


@given(hnp.arrays(int, (4, 4), elements=st.integers(0, 3)), hnp.arrays(int, (4, 4), elements=st.integers(0, 3)),
       hnp.arrays(bool, (4, 4)))
def test_nash_matches_double_loop_oracle(ra, rb, valid):
    assert pure_nash_equilibria(ra, rb, valid) == best_response_nash(ra, rb, valid)


def test_pareto_examples():
    A, B, C = (5, 10, 3), (4, 9, 4), (6, 8, 2)
    assert pareto_frontier([A, B, C]) == [1, 2]
    assert pareto_frontier([A]) == [0]
    assert pareto_frontier([A, A]) == [0, 1]


@given(st.lists(st.tuples(*[st.integers(0, 4)] * 3), min_size=1, max_size=25))
def test_pareto_sound_and_complete(points):
    front = pareto_frontier(points)
    assert front == dominance_frontier(points)
    for i in range(len(points)):
        if i not in front:
            assert any(dominates(points[j], points[i]) for j in front)


def test_backward_induction_revenue_only():
    rng = np.random.default_rng(0)
    pay = synthetic((5, 3, 3), rng)
    nash = {b: [(0, 0)] for b in range(5)}
    sel = backward_induction(pay, nash, MunicipalWeights(0, 0, 1))
    revs = [pay["bus_revenue"][b, 0, 0] for b in range(5)]
    assert sel.bus_index == int(np.argmax(revs))


def test_backward_induction_pessimistic_and_optimistic():
    rng = np.random.default_rng(1)
    pay = synthetic((2, 2, 2), rng)
    pay.values["avg_cost"][:] = 0.0
    pay.values["avg_cost"][0] = [[1.0, 5.0], [0.0, 0.0]]
    pay.values["avg_cost"][1] = [[3.0, 3.0], [0.0, 0.0]]
    nash = {0: [(0, 0), (0, 1)], 1: [(0, 0)]}
    w = MunicipalWeights(1, 0, 0)
    pess = backward_induction(pay, nash, w, "pessimistic")
    opt = backward_induction(pay, nash, w, "optimistic")
    assert (pess.bus_index, pess.cell) == (1, (0, 0))
    assert (opt.bus_index, opt.cell) == (0, (0, 0))
    with pytest.raises(ValueError):
        backward_induction(pay, nash, w, "whatever")


def test_ties_go_to_lowest_fare():
    rng = np.random.default_rng(2)
    pay = synthetic((3, 2, 2), rng)
    for f in PAYOFF_FIELDS:
        pay.values[f][:] = 1.0
    sel = backward_induction(pay, {0: [], 1: [(1, 1)], 2: [(0, 0)]}, MunicipalWeights())
    assert sel.bus_index == 1


def test_no_equilibrium():
    rng = np.random.default_rng(3)
    pay = synthetic((2, 2, 2), rng)
    with pytest.raises(NoEquilibriumError):
        backward_induction(pay, {0: [], 1: []}, MunicipalWeights())
    # matching pennies has no pure equilibrium
    pay.values["amod_revenue"][:] = [[1, 0], [0, 1]]
    pay.values["bike_revenue"][:] = [[0, 1], [1, 0]]
    with pytest.raises(NoEquilibriumError):
        play(pay, MunicipalWeights())


@given(st.integers(0, 2**32 - 1), st.sampled_from(["pessimistic", "optimistic"]),
       st.tuples(*[st.integers(0, 3)] * 3).filter(any), st.integers(1, 1000))
def test_play_invariants(seed, rule, rho, scale):
    rng = np.random.default_rng(seed)
    pay = synthetic((4, 3, 3), rng, integer=False)
    try:
        out = play(pay, MunicipalWeights(*rho), rule)
    except NoEquilibriumError:
        return
    for b, cells in out.nash_cells.items():
        for a, k in cells:
            # unilateral-deviation certificate
            assert pay["amod_revenue"][b, :, k].max() <= pay["amod_revenue"][b, a, k] + 1e-9
            assert pay["bike_revenue"][b, a, :].max() <= pay["bike_revenue"][b, a, k] + 1e-9
    w = MunicipalWeights(*rho)
    for b, cells in out.nash_cells.items():
        if cells:
            u = [float(w.payoff(pay["avg_cost"][b][c], pay["co2"][b][c], pay["bus_revenue"][b][c])) for c in cells]
            value = min(u) if rule == "pessimistic" else max(u)
            assert out.selected.payoff >= value - 1e-9
    scaled = play(pay, MunicipalWeights(*(scale * r for r in rho)), rule)
    assert (scaled.selected.bus_index, scaled.selected.cell) == (out.selected.bus_index, out.selected.cell)


def test_fare_monotonicity_check():
    rng = np.random.default_rng(4)
    pay = synthetic((3, 1, 1), rng)
    pay.values["avg_cost"][:, 0, 0] = [1.0, 2.0, 1.5]
    assert [v[:3] for v in fare_monotonicity_violations(pay)] == [(1, 0, 0)]


def test_outcome_rows_cover_all_cells():
    rng = np.random.default_rng(5)
    pay = synthetic((2, 3, 2), rng)
    pay.values["amod_revenue"][:] = 1.0
    pay.values["bike_revenue"][:] = 1.0
    rows = outcome_rows(play(pay, MunicipalWeights()))
    assert len(rows) == 1 + 12
    assert rows[0][-1] == "nash" and all(r[-1] == 1 for r in rows[1:])


def test_workers_env(monkeypatch):
    monkeypatch.setenv("MOBILITY_GAME_WORKERS", "3")
    assert default_workers() == 3
    monkeypatch.setenv("MOBILITY_GAME_WORKERS", "zero")
    with pytest.raises(ValueError):
        default_workers()


def test_reprice(sioux):
    sc = reprice(sioux, 1.0, 2.0, 0.5)
    bus, amod, bike = (sioux.mode_index(m) for m in ("bus", "amod", "bike"))
    assert sc.prices[0, 1, bus] == 1.0 and sc.prices[0, 0, bus] == 0.0
    assert sc.prices[0, 1, amod] == pytest.approx(2.0 * sioux.distances_km[0, 1])
    assert sc.prices[0, 1, bike] == pytest.approx(0.5 * sioux.distances_km[0, 1])
    assert sc.cost_model.constant[0, 1, 0, amod] == pytest.approx(sc.prices[0, 1, amod] / sioux.values_of_time[0])


def test_single_cell_grid_matches_nominal_solve(sioux):
    grid = ActionGrid((2.5,), (2.5,), (0.4,))
    est = StakeholderGame(grid=grid).fit(sioux)
    met = compute_metrics(sioux, solve_equilibrium(sioux).flows)
    assert est.payoffs_["avg_cost"][0, 0, 0] == pytest.approx(met.avg_cost_total, rel=1e-9)
    assert est.payoffs_["bus_revenue"][0, 0, 0] == pytest.approx(met.mode_value("revenue", "bus"), rel=1e-9)
    assert est.payoffs_["co2"][0, 0, 0] == pytest.approx(met.emissions_total, rel=1e-9)
    assert list(est.predict()) == [2.5, 2.5, 0.4]
    assert est.nash_cells_ == {0: [(0, 0)]}


def test_amod_share_non_increasing_in_amod_price(sioux):
    grid = ActionGrid((2.5,), (0.5, 1.5, 2.5, 3.5), (0.4,))
    pay = build_payoff_tensor(sioux, grid)
    share = pay.modal_split[0, :, 0, sioux.mode_index("amod")]
    assert np.all(np.diff(share) <= 1e-9)


def test_parallel_workers_give_identical_tensor(sioux):
    grid = ActionGrid((1.0, 2.0), (2.5,), (0.4,))
    a = build_payoff_tensor(sioux, grid, n_jobs=1)
    b = build_payoff_tensor(sioux, grid, n_jobs=2)
    for f in PAYOFF_FIELDS:
        assert np.array_equal(a[f], b[f])


def test_failed_cells_are_marked_invalid(sioux):
    from mobility_game.solver import SolveOptions

    grid = ActionGrid((2.5,), (2.5,), (0.4,))
    pay = build_payoff_tensor(sioux, grid, SolveOptions(max_outer_iterations=1))
    assert not pay.valid.any() and len(pay.diagnostics) == 1
    assert np.isnan(pay["avg_cost"]).all()
    assert nash_by_bus_price(pay) == {0: []}
