"""Two-stage stakeholder game over public-transport, AMoD and bike prices.

The municipality fixes the bus fare; the AMoD and bike operators then choose
per-km prices simultaneously.  Every action triple is evaluated by solving
the citizens' equilibrium, the operators' pure Nash equilibria are
enumerated per bus fare, and the fare is chosen by backward induction.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .metrics import compute_metrics
from .model import Scenario
from .solver import SolveOptions, Status, solve_equilibrium
from .validation import check_scenario

logger = logging.getLogger(__name__)

TIE_TOL = 1e-9
WORKERS_ENV = "MOBILITY_GAME_WORKERS"
PAYOFF_FIELDS = ("amod_revenue", "bike_revenue", "avg_cost", "co2", "bus_revenue")
TIE_RULES = ("pessimistic", "optimistic")


class NoEquilibriumError(RuntimeError):
    """No municipality action admits a pure Nash equilibrium among operators."""


def _check_prices(name, values) -> tuple:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty list")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError(f"{name} must be finite and non-negative")
    if np.any(np.diff(arr) <= 0):
        raise ValueError(f"{name} must be strictly increasing")
    return tuple(float(v) for v in arr)


def _default_steps(stop, step):
    return tuple(round(step * i, 10) for i in range(int(round(stop / step)) + 1))


@dataclass(frozen=True)
class ActionGrid:
    """Price menus: bus fare (USD per ride), AMoD and bike prices (USD per km)."""

    municipality_prices: tuple = _default_steps(4.0, 0.5)
    amod_prices: tuple = _default_steps(4.0, 0.5)
    bike_prices: tuple = (0.0, 0.4, 0.8, 1.2)

    def __post_init__(self):
        for name in ("municipality_prices", "amod_prices", "bike_prices"):
            object.__setattr__(self, name, _check_prices(name, getattr(self, name)))

    @property
    def shape(self) -> tuple:
        return len(self.municipality_prices), len(self.amod_prices), len(self.bike_prices)

    @classmethod
    def from_dict(cls, doc: dict) -> "ActionGrid":
        unknown = set(doc) - {"municipality_prices", "amod_prices", "bike_prices"}
        if unknown:
            raise ValueError(f"unknown grid fields {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def from_json(cls, path) -> "ActionGrid":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "municipality_prices": list(self.municipality_prices),
            "amod_prices": list(self.amod_prices),
            "bike_prices": list(self.bike_prices),
        }


@dataclass(frozen=True)
class MunicipalWeights:
    rho_cost: float = 1.0
    rho_co2: float = 0.0
    rho_revenue: float = 0.0

    def __post_init__(self):
        vals = (self.rho_cost, self.rho_co2, self.rho_revenue)
        if not all(np.isfinite(v) and v >= 0 for v in vals):
            raise ValueError("municipal weights must be finite and non-negative")
        if not any(v > 0 for v in vals):
            raise ValueError("at least one municipal weight must be positive")

    def normalized(self) -> tuple:
        """Weights divided by their sum, in exact arithmetic, so that scaling
        all weights by a positive constant leaves every decision unchanged."""
        fr = [Fraction(v) for v in (self.rho_cost, self.rho_co2, self.rho_revenue)]
        total = sum(fr)
        return tuple(float(f / total) for f in fr)

    def payoff(self, avg_cost, co2, bus_revenue):
        c, e, r = self.normalized()
        return -c * np.asarray(avg_cost) - e * np.asarray(co2) + r * np.asarray(bus_revenue)


@dataclass
class PayoffTensor:
    """Per-cell outcomes indexed ``[bus, amod, bike]``; invalid cells hold NaN."""

    grid: ActionGrid
    values: dict
    modal_split: np.ndarray
    valid: np.ndarray
    diagnostics: list = field(default_factory=list)

    def __getitem__(self, name) -> np.ndarray:
        return self.values[name]


@dataclass(frozen=True)
class Selection:
    bus_index: int
    cell: tuple
    payoff: float
    bus_price: float
    amod_price: float
    bike_price: float
    outcome: dict


@dataclass(frozen=True)
class FrontierPoint:
    bus_index: int
    cell: tuple
    avg_cost: float
    co2: float
    bus_revenue: float


@dataclass
class GameOutcome:
    payoffs: PayoffTensor
    nash_cells: dict
    selected: Selection
    frontier: list
    weights: MunicipalWeights
    tie_rule: str


# ---------------------------------------------------------------------------
# payoff tensor

def _mode_indices(scenario: Scenario, names) -> tuple:
    return tuple(scenario.mode_index(n) for n in names)


def reprice(base: Scenario, bus_fare: float, amod_per_km: float, bike_per_km: float,
            mode_names=("bus", "amod", "bike")) -> Scenario:
    """Copy of ``base`` with a flat bus fare and per-km AMoD and bike prices."""
    if base.prices is None or base.distances_km is None:
        raise ValueError("base scenario needs price and distance metadata")
    ib, ia, ik = _mode_indices(base, mode_names)
    prices = np.array(base.prices, dtype=float)
    off = ~np.eye(base.n_locations, dtype=bool)
    prices[:, :, ib] = np.where(off, bus_fare, 0.0)
    prices[:, :, ia] = amod_per_km * base.distances_km
    prices[:, :, ik] = bike_per_km * base.distances_km
    return base.with_prices(prices)


def _evaluate_cell(base, prices, options, mode_names):
    try:
        sc = reprice(base, *prices, mode_names=mode_names)
        rep = solve_equilibrium(sc, options)
        if rep.status is not Status.CONVERGED:
            return None, None, f"solve ended with status {rep.status.value} (kkt {rep.kkt_residual:.3g})"
        m = compute_metrics(sc, rep.flows)
        ib, ia, ik = _mode_indices(sc, mode_names)
        vals = {
            "amod_revenue": float(m.revenue[ia]),
            "bike_revenue": float(m.revenue[ik]),
            "avg_cost": float(m.avg_cost_total),
            "co2": float(m.emissions_total),
            "bus_revenue": float(m.revenue[ib]),
        }
        return vals, m.modal_split, ""
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return None, None, f"{type(exc).__name__}: {exc}"


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    if n == 0 or n < -1:
        raise ValueError(f"{WORKERS_ENV} must be positive or -1")
    return n


def build_payoff_tensor(base: Scenario, grid: Optional[ActionGrid] = None,
                        options: Optional[SolveOptions] = None, n_jobs: Optional[int] = None,
                        mode_names=("bus", "amod", "bike")) -> PayoffTensor:
    """Solve the citizen equilibrium for every action triple of ``grid``.

    Cells are independent and evaluated by ``n_jobs`` workers (default from
    the ``MOBILITY_GAME_WORKERS`` environment variable); the result does not
    depend on scheduling.  Cells whose solve fails are marked invalid and
    listed in ``diagnostics``.
    """
    check_scenario(base)
    grid = grid or ActionGrid()
    n_jobs = default_workers() if n_jobs is None else n_jobs
    idx = list(np.ndindex(*grid.shape))
    cells = [(grid.municipality_prices[b], grid.amod_prices[a], grid.bike_prices[k]) for b, a, k in idx]
    if n_jobs == 1 or len(cells) == 1:
        results = [_evaluate_cell(base, c, options, mode_names) for c in cells]
    else:
        results = Parallel(n_jobs=n_jobs)(delayed(_evaluate_cell)(base, c, options, mode_names)
                                          for c in cells)
    values = {f: np.full(grid.shape, np.nan) for f in PAYOFF_FIELDS}
    split = np.full(grid.shape + (base.n_modes,), np.nan)
    valid = np.zeros(grid.shape, dtype=bool)
    diagnostics = []
    for (b, a, k), prices, (vals, ms, msg) in zip(idx, cells, results):
        if vals is None:
            diagnostics.append(f"cell bus={prices[0]} amod={prices[1]} bike={prices[2]}: {msg}")
            logger.warning("invalid cell %s: %s", prices, msg)
            continue
        valid[b, a, k] = True
        split[b, a, k] = ms
        for f in PAYOFF_FIELDS:
            values[f][b, a, k] = vals[f]
    return PayoffTensor(grid, values, split, valid, diagnostics)


# ---------------------------------------------------------------------------
# equilibrium search and selection

def pure_nash_equilibria(amod_revenue, bike_revenue, valid=None, tol: float = TIE_TOL) -> list:
    """Pure equilibria of the operators' game at one bus fare.

    Rows index AMoD prices and columns bike prices.  A valid cell is an
    equilibrium when neither operator gains more than ``tol`` by moving to
    another valid cell of its own price axis.  Returned in lexicographic order.
    """
    ra = np.asarray(amod_revenue, dtype=float)
    rb = np.asarray(bike_revenue, dtype=float)
    if ra.ndim != 2 or ra.shape != rb.shape:
        raise ValueError("payoff slices must be 2-D arrays of equal shape")
    if ra.size == 0:
        raise ValueError("empty payoff slice")
    valid = np.ones(ra.shape, dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
    best_a = np.max(np.where(valid, ra, -np.inf), axis=0, keepdims=True)
    best_b = np.max(np.where(valid, rb, -np.inf), axis=1, keepdims=True)
    ok = valid & (ra >= best_a - tol) & (rb >= best_b - tol)
    return [(int(a), int(k)) for a, k in zip(*np.nonzero(ok))]


def nash_by_bus_price(payoffs: PayoffTensor, tol: float = TIE_TOL) -> dict:
    return {
        b: pure_nash_equilibria(payoffs["amod_revenue"][b], payoffs["bike_revenue"][b],
                                payoffs.valid[b], tol)
        for b in range(payoffs.grid.shape[0])
    }


def _pick(cells, utilities, tie_rule):
    if tie_rule == "pessimistic":
        target = min(utilities)
    elif tie_rule == "optimistic":
        target = max(utilities)
    else:
        raise ValueError(f"tie_rule must be one of {TIE_RULES}")
    pos = utilities.index(target)  # first in lexicographic cell order
    return cells[pos], target


def backward_induction(payoffs: PayoffTensor, nash_cells: dict, weights: MunicipalWeights,
                       tie_rule: str = "pessimistic") -> Selection:
    """Municipality action maximising its payoff at the operators' equilibrium.

    Among several equilibria of one action, ``tie_rule`` picks the worst
    (``pessimistic``) or best (``optimistic``) one for the municipality.
    Ties between actions go to the lowest bus fare.
    """
    if tie_rule not in TIE_RULES:
        raise ValueError(f"tie_rule must be one of {TIE_RULES}")
    best = None
    for b in sorted(nash_cells):
        cells = nash_cells[b]
        if not cells:
            continue
        util = [float(weights.payoff(payoffs["avg_cost"][b][c], payoffs["co2"][b][c],
                                     payoffs["bus_revenue"][b][c])) for c in cells]
        cell, u = _pick(cells, util, tie_rule)
        if best is None or u > best[2]:
            best = (b, cell, u)
    if best is None:
        raise NoEquilibriumError("no bus fare admits a pure Nash equilibrium between operators")
    b, (a, k), u = best
    g = payoffs.grid
    outcome = {f: float(payoffs[f][b, a, k]) for f in PAYOFF_FIELDS}
    return Selection(b, (a, k), u, g.municipality_prices[b], g.amod_prices[a], g.bike_prices[k], outcome)


def pareto_frontier(points: Sequence) -> list:
    """Indices of non-dominated points, in input order.

    Points are ``(avg_cost, co2, bus_revenue)``; cost and emissions are
    minimised and revenue maximised.  Equal points do not dominate each other.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    obj = pts * np.array([1.0, 1.0, -1.0])  # all minimised
    keep = []
    for i in range(len(obj)):
        weakly = np.all(obj <= obj[i], axis=1)
        strictly = np.any(obj < obj[i], axis=1)
        if not np.any(weakly & strictly):
            keep.append(i)
    return keep


def fare_monotonicity_violations(payoffs: PayoffTensor, tol: float = TIE_TOL) -> list:
    """Operator price pairs whose average cost drops when the bus fare rises."""
    cost = payoffs["avg_cost"]
    out = []
    for a, k in np.ndindex(*cost.shape[1:]):
        col = cost[:, a, k]
        for b in range(len(col) - 1):
            if np.isfinite(col[b]) and np.isfinite(col[b + 1]) and col[b + 1] < col[b] - tol:
                out.append((b, a, k, float(col[b] - col[b + 1])))
    return out


def play(payoffs: PayoffTensor, weights: MunicipalWeights, tie_rule: str = "pessimistic") -> GameOutcome:
    nash = nash_by_bus_price(payoffs)
    selected = backward_induction(payoffs, nash, weights, tie_rule)
    cands = [(b, c) for b in sorted(nash) for c in nash[b]]
    pts = [(payoffs["avg_cost"][b][c], payoffs["co2"][b][c], payoffs["bus_revenue"][b][c]) for b, c in cands]
    frontier = [FrontierPoint(cands[i][0], cands[i][1], *map(float, pts[i])) for i in pareto_frontier(pts)]
    return GameOutcome(payoffs, nash, selected, frontier, weights, tie_rule)


# ---------------------------------------------------------------------------
# output tables

def outcome_rows(outcome: GameOutcome) -> list:
    g = outcome.payoffs.grid
    nash = {(b, a, k) for b, cells in outcome.nash_cells.items() for a, k in cells}
    rows = [["bus_price", "amod_price", "bike_price", "valid", *PAYOFF_FIELDS, "nash"]]
    for b, a, k in np.ndindex(*g.shape):
        rows.append([
            repr(g.municipality_prices[b]), repr(g.amod_prices[a]), repr(g.bike_prices[k]),
            int(outcome.payoffs.valid[b, a, k]),
            *(repr(float(outcome.payoffs[f][b, a, k])) for f in PAYOFF_FIELDS),
            int((b, a, k) in nash),
        ])
    return rows


def frontier_rows(outcome: GameOutcome) -> list:
    g = outcome.payoffs.grid
    rows = [["bus_price", "amod_price", "bike_price", "avg_cost", "co2", "bus_revenue"]]
    for p in outcome.frontier:
        a, k = p.cell
        rows.append([repr(g.municipality_prices[p.bus_index]), repr(g.amod_prices[a]),
                     repr(g.bike_prices[k]), repr(p.avg_cost), repr(p.co2), repr(p.bus_revenue)])
    return rows


def selected_document(outcome: GameOutcome) -> dict:
    s = outcome.selected
    return {
        "bus_price": s.bus_price,
        "amod_price": s.amod_price,
        "bike_price": s.bike_price,
        "outcome": s.outcome,
        "tie_rule": outcome.tie_rule,
        # raw weights are left out so that rescaling them yields an identical file
        "normalized_weights": dict(zip(("rho_cost", "rho_co2", "rho_revenue"),
                                       outcome.weights.normalized())),
        "actions_with_equilibria": sum(1 for c in outcome.nash_cells.values() if c),
        "invalid_cells": len(outcome.payoffs.diagnostics),
    }


class StakeholderGame(BaseEstimator):
    """Estimator wrapper: ``fit(base_scenario)`` builds the payoff tensor and
    plays the game.

    Attributes
    ----------
    payoffs_ : PayoffTensor
    nash_cells_ : dict mapping bus-fare index to equilibrium cells
    selected_ : Selection
    frontier_ : list of FrontierPoint
    outcome_ : GameOutcome
    """

    def __init__(self, grid=None, rho_cost=1.0, rho_co2=0.0, rho_revenue=0.0,
                 tie_rule="pessimistic", kkt_tolerance=1e-6, n_jobs=None):
        self.grid = grid
        self.rho_cost = rho_cost
        self.rho_co2 = rho_co2
        self.rho_revenue = rho_revenue
        self.tie_rule = tie_rule
        self.kkt_tolerance = kkt_tolerance
        self.n_jobs = n_jobs

    def _weights(self):
        return MunicipalWeights(self.rho_cost, self.rho_co2, self.rho_revenue)

    def fit(self, scenario, y=None):
        weights = self._weights()
        if self.tie_rule not in TIE_RULES:
            raise ValueError(f"tie_rule must be one of {TIE_RULES}")
        payoffs = build_payoff_tensor(scenario, self.grid, SolveOptions(kkt_tolerance=self.kkt_tolerance),
                                      n_jobs=self.n_jobs)
        return self.fit_payoffs(payoffs, weights)

    def fit_payoffs(self, payoffs: PayoffTensor, weights: Optional[MunicipalWeights] = None):
        """Play the game on an already computed payoff tensor."""
        outcome = play(payoffs, weights or self._weights(), self.tie_rule)
        self.payoffs_ = payoffs
        self.nash_cells_ = outcome.nash_cells
        self.selected_ = outcome.selected
        self.frontier_ = outcome.frontier
        self.outcome_ = outcome
        return self

    def predict(self, X=None):
        """Selected (bus, amod, bike) prices."""
        check_is_fitted(self, "selected_")
        s = self.selected_
        return np.array([s.bus_price, s.amod_price, s.bike_price])
