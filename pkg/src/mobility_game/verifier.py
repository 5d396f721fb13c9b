"""Feasibility and equilibrium checks, plus brute-force oracles for tiny games."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .model import Scenario, congestion_integral, cost_tensor
from .validation import check_flows

MAX_GRID_POINTS = 5_000_000


@dataclass(frozen=True)
class FeasibilityViolation:
    kind: str  # "negative", "demand", "available", "displace" or "ride"
    index: tuple
    value: float
    bound: float


@dataclass(frozen=True)
class EquilibriumViolation:
    i: int
    j: int
    k: int
    used_mode: int
    better_mode: int
    cost_gap: float
    saturated: bool = False


@dataclass
class CheckReport:
    feasible: bool
    is_equilibrium: bool
    violations: list = field(default_factory=list)
    feasibility_violations: list = field(default_factory=list)
    tol_cost: float = 1e-4
    tol_sat: float = 1e-6


def _loads(x):
    ride = x.sum(axis=2)
    return {"ride": ride, "available": ride.sum(axis=1), "displace": ride.sum(axis=0)}


def check_feasible(scenario: Scenario, flows, tol_eq: float = 1e-6, tol_cap: float = 1e-6):
    """Return ``(feasible, violations)`` for a flow configuration."""
    x = check_flows(scenario, flows, nonnegative_tol=None)
    out = []
    for idx in zip(*np.nonzero(x < -tol_eq)):
        out.append(FeasibilityViolation("negative", tuple(int(t) for t in idx), float(x[idx]), 0.0))
    d = scenario.demand
    served = x.sum(axis=3)
    bad = np.abs(served - d) > tol_eq * np.maximum(1.0, d)
    for idx in zip(*np.nonzero(bad)):
        out.append(FeasibilityViolation("demand", tuple(int(t) for t in idx), float(served[idx]), float(d[idx])))
    loads = _loads(x)
    for kind in ("ride", "displace", "available"):
        cap = getattr(scenario.capacities, kind)
        with np.errstate(invalid="ignore"):
            over = np.isfinite(cap) & (loads[kind] > cap * (1.0 + tol_cap))
        for idx in zip(*np.nonzero(over)):
            out.append(FeasibilityViolation(kind, tuple(int(t) for t in idx), float(loads[kind][idx]), float(cap[idx])))
    return not out, out


def saturation_mask(scenario: Scenario, flows, tol_sat: float = 1e-6) -> np.ndarray:
    """Boolean (N, N, M+1): mode ``m`` saturated for trips ``i -> j``.

    A mode counts as saturated when any of its finite ride, displacement or
    availability bounds is within ``tol_sat * capacity`` of being reached.
    """
    caps = scenario.capacities
    loads = _loads(np.asarray(flows, dtype=float))

    def near(load, cap):
        finite = np.isfinite(cap)
        return finite & (np.where(finite, cap - load, np.inf) <= tol_sat * np.where(finite, cap, 0.0))

    ride = near(loads["ride"], caps.ride)
    avail = near(loads["available"], caps.available)[:, None, :]
    disp = near(loads["displace"], caps.displace)[None, :, :]
    return ride | avail | disp


def check_equilibrium(scenario: Scenario, flows, tol_cost: float = 1e-4, tol_sat: float = 1e-6,
                      tol_feas: float = 1e-6) -> CheckReport:
    """Test the Nash conditions: every used mode is no costlier than any unsaturated alternative."""
    x = check_flows(scenario, flows, nonnegative_tol=None)
    feasible, fviol = check_feasible(scenario, x, tol_eq=tol_feas, tol_cap=tol_feas)
    if not feasible:
        return CheckReport(False, False, [], fviol, tol_cost, tol_sat)
    cost = cost_tensor(scenario, x)
    sat = saturation_mask(scenario, x, tol_sat)
    used = x > tol_cost
    # gap[i, j, k, m, m'] = cost(m) - cost(m')
    gap = cost[..., :, None] - cost[..., None, :]
    bad = used[..., :, None] & (gap > tol_cost) & ~sat[:, :, None, None, :]
    viol = [
        EquilibriumViolation(int(i), int(j), int(k), int(m), int(mp), float(gap[i, j, k, m, mp]), False)
        for i, j, k, m, mp in zip(*np.nonzero(bad))
    ]
    return CheckReport(True, not viol, viol, [], tol_cost, tol_sat)


def _guard(scenario: Scenario):
    n, _, k, m1 = scenario.flow_shape
    if n > 2 or k > 2 or m1 > 3 or scenario.demand.sum() > 6 + 1e-12:
        raise ValueError(
            "instance too large for brute force (need N <= 2, K <= 2, M+1 <= 3, total demand <= 6)"
        )


def _compositions(total: float, parts: int, step: float) -> np.ndarray:
    """Grid points of ``{y >= 0, sum(y) = total}``; the first entry absorbs the remainder."""
    units = int(np.floor(total / step + 1e-9))
    rows = []
    for combo in itertools.product(range(units + 1), repeat=parts - 1):
        if sum(combo) <= units:
            rows.append(combo)
    tail = np.array(rows, dtype=float).reshape(len(rows), parts - 1) * step
    head = total - tail.sum(axis=1, keepdims=True)
    pts = np.hstack([np.maximum(head, 0.0), tail])
    return pts


def brute_force_equilibria(scenario: Scenario, grid_step: float, tol_cost: float = 1e-4,
                           tol_sat: float = 1e-6) -> list:
    """All grid points of the feasible set that satisfy the equilibrium conditions."""
    if not grid_step > 0:
        raise ValueError("grid_step must be positive")
    _guard(scenario)
    d = scenario.demand
    m1 = scenario.n_modes
    groups = list(zip(*np.nonzero(d > 0)))
    options = [_compositions(float(d[g]), m1, grid_step) for g in groups]
    n_points = int(np.prod([len(o) for o in options])) if options else 1
    if n_points > MAX_GRID_POINTS:
        raise ValueError(f"grid has {n_points} points; increase grid_step")
    found = []
    for combo in itertools.product(*options):
        x = np.zeros(scenario.flow_shape)
        for g, row in zip(groups, combo):
            x[g] = row
        rep = check_equilibrium(scenario, x, tol_cost=tol_cost, tol_sat=tol_sat)
        if rep.is_equilibrium:
            found.append(x)
    found.sort(key=lambda a: tuple(a.ravel()))
    return found


def _inner_assignment(c0, demand_k, loads):
    """Cheapest split of per-mode loads across populations (K <= 2).

    c0: (K, M1) constant costs; demand_k: (K,); loads: (P, M1).
    Returns flows (P, K, M1).
    """
    p, m1 = loads.shape
    k = len(demand_k)
    if k == 1:
        return loads[:, None, :].copy()
    d1, d2 = demand_k
    lo = np.maximum(0.0, loads - d2)
    hi = np.minimum(loads, d1)
    x1 = lo.copy()
    remaining = d1 - lo.sum(axis=1)
    for m in np.argsort(c0[0] - c0[1], kind="stable"):
        add = np.minimum(hi[:, m] - lo[:, m], np.maximum(remaining, 0.0))
        x1[:, m] += add
        remaining -= add
    return np.stack([x1, loads - x1], axis=1)


def grid_min_potential(scenario: Scenario, grid_step: float = 0.01):
    """Exhaustive grid minimum of the potential on a tiny instance.

    Per-mode loads of every origin-destination pair are enumerated on the
    grid (capacity-filtered); the population split of each load vector is
    then the exact cheapest one.  With at most two locations every capacity
    row touches a single pair, so pairs are minimised independently.
    Returns ``(potential, flows)``.
    """
    _guard(scenario)
    if scenario.regularization_weight:
        raise ValueError("grid oracle does not support regularization")
    cm = scenario.cost_model
    caps = scenario.capacities
    d = scenario.demand
    n, _, k, m1 = scenario.flow_shape
    flows = np.zeros(scenario.flow_shape)
    total = 0.0
    for i, j in itertools.product(range(n), range(n)):
        dk = d[i, j]
        if i == j or dk.sum() <= 0:
            continue
        loads = _compositions(float(dk.sum()), m1, grid_step)
        bound = np.minimum(np.minimum(caps.ride[i, j], caps.available[i]), caps.displace[j])
        loads = loads[np.all(loads <= bound * (1 + 1e-12), axis=1)]
        if not len(loads):
            raise ValueError(f"no feasible grid point for pair {(i, j)}")
        act = [kk for kk in range(k) if dk[kk] > 0]
        x = np.zeros((len(loads), k, m1))
        x[:, act, :] = _inner_assignment(cm.constant[i, j][act], dk[act], loads)
        val = np.einsum("pkm,km->p", x, cm.constant[i, j])
        val += congestion_integral(cm.code[i, j], cm.a[i, j], cm.b[i, j], cm.beta[i, j],
                                   cm.kappa[i, j], loads).sum(axis=1)
        best = int(np.argmin(val))
        total += float(val[best])
        flows[i, j] = x[best]
    return total, flows
