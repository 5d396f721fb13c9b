"""Equilibrium computation by minimising the capacitated Beckmann potential.

The solver is a primal log-barrier interior-point method.  Each Newton step
solves the sparse augmented system built from the diagonal barrier
curvature, the per-(i, j, k) demand equalities, and the congested-load and
finite-capacity rows.  Capacity slacks are summed exactly, since the dual
prices ``mu / slack`` are read off them.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .model import (
    CONSTANT,
    Scenario,
    congestion_cost,
    congestion_derivative,
    congestion_integral,
    eval_potential,
)
from .validation import check_flows, check_scenario

logger = logging.getLogger(__name__)

ARMIJO = 1e-4
BACKTRACK = 0.5
BOUNDARY_FRACTION = 0.99
LOOSE_CENTERING = 2e-2
FINAL_CENTERING = 1e-6
# On the central path flow times reduced cost is about mu.  The verifier
# flags a flow above tol_cost whose cost exceeds an alternative by tol_cost,
# so mu must stay well below tol_cost**2 = 1e-8 at the default tolerances.
CERTIFICATE_MU = 1e-9
QUADRATIC_REGION = 1.0 / 16.0
REFINEMENT_ROUNDS = 2
DEMAND_TOL = 1e-9
CAPACITY_KINDS = ("available", "displace", "ride")


class Status(str, enum.Enum):
    CONVERGED = "Converged"
    ITERATION_LIMIT = "IterationLimit"
    INFEASIBLE = "Infeasible"


@dataclass(frozen=True)
class SolveOptions:
    """Barrier-method settings.

    ``regularization_weight=None`` defers to the scenario's own flag.
    """

    kkt_tolerance: float = 1e-6
    max_outer_iterations: int = 60
    barrier_initial_mu: float = 1.0
    barrier_shrink: float = 0.2
    newton_max_steps: int = 50
    regularization_weight: Optional[float] = None

    def __post_init__(self):
        if not self.kkt_tolerance > 0:
            raise ValueError("kkt_tolerance must be positive")
        if self.max_outer_iterations < 1 or self.newton_max_steps < 1:
            raise ValueError("iteration limits must be positive")
        if not self.barrier_initial_mu > 0:
            raise ValueError("barrier_initial_mu must be positive")
        if not 0 < self.barrier_shrink < 1:
            raise ValueError("barrier_shrink must lie in (0, 1)")
        if self.regularization_weight is not None and not self.regularization_weight >= 0:
            raise ValueError("regularization_weight must be non-negative")

    def weight_for(self, scenario: Scenario) -> float:
        if self.regularization_weight is None:
            return float(scenario.regularization_weight)
        return float(self.regularization_weight)

    def as_dict(self) -> dict:
        return {
            "kkt_tolerance": self.kkt_tolerance,
            "max_outer_iterations": self.max_outer_iterations,
            "barrier_initial_mu": self.barrier_initial_mu,
            "barrier_shrink": self.barrier_shrink,
            "newton_max_steps": self.newton_max_steps,
            "regularization_weight": self.regularization_weight,
        }


@dataclass
class StageRecord:
    mu: float
    newton_steps: int
    potential: float
    # barrier objective after every accepted Newton step of the stage
    barrier_values: list = field(default_factory=list)


@dataclass
class SolveReport:
    flows: np.ndarray
    potential: float
    kkt_residual: float
    dual_capacity_prices: dict
    iterations: list
    status: Status
    regularization_weight: float = 0.0

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED


def zero_duals(scenario: Scenario) -> dict:
    n, m1 = scenario.n_locations, scenario.n_modes
    return {
        "available": np.zeros((n, m1)),
        "displace": np.zeros((n, m1)),
        "ride": np.zeros((n, n, m1)),
    }


class _Problem:
    """Flattened view of the active variables of a scenario.

    Only groups with positive demand carry variables; ``pair`` restricts the
    problem to a single origin-destination pair.
    """

    def __init__(self, scenario: Scenario, weight: float, pair=None):
        d = scenario.demand
        n, _, _, m1 = scenario.flow_shape
        mask = d > 0
        if pair is not None:
            sel = np.zeros_like(mask)
            sel[pair[0], pair[1], :] = mask[pair[0], pair[1], :]
            mask = sel
        gi, gj, gk = np.nonzero(mask)
        self.scenario = scenario
        self.weight = weight
        self.m1 = m1
        self.n_groups = len(gi)
        self.groups = (gi, gj, gk)
        self.demand = d[gi, gj, gk]
        vi, vj, vk = (np.repeat(a, m1) for a in (gi, gj, gk))
        vm = np.tile(np.arange(m1), self.n_groups)
        self.coords = (vi, vj, vk, vm)
        self.n = len(vi)
        cm = scenario.cost_model
        self.c0 = cm.constant[vi, vj, vk, vm]

        key = (vi * n + vj) * m1 + vm
        ukey, load_of_var = np.unique(key, return_inverse=True)
        li, rem = np.divmod(ukey, n * m1)
        lj, lm = np.divmod(rem, m1)
        self.load_params = tuple(p[li, lj, lm] for p in (cm.code, cm.a, cm.b, cm.beta, cm.kappa))
        self.L = sp.csr_matrix(
            (np.ones(self.n), (load_of_var, np.arange(self.n))), shape=(len(ukey), self.n)
        )
        self.congested = np.flatnonzero(self.load_params[0] != CONSTANT)
        self.L_cong = self.L[self.congested]

        caps = scenario.capacities
        closed = (
            (caps.available[vi, vm] == 0) | (caps.displace[vj, vm] == 0) | (caps.ride[vi, vj, vm] == 0)
        )
        # variables of closed modes are pinned at zero and carry no barrier term
        self.open = ~closed
        self.any_closed = bool(closed.any())
        rows, cols, bounds, meta = [], [], [], []
        row = 0
        for kind, cap_of_var, index_of_var in (
            ("available", caps.available[vi, vm], np.stack([vi, vm], 1)),
            ("displace", caps.displace[vj, vm], np.stack([vj, vm], 1)),
            ("ride", caps.ride[vi, vj, vm], np.stack([vi, vj, vm], 1)),
        ):
            finite = np.flatnonzero(np.isfinite(cap_of_var) & self.open)
            if finite.size == 0:
                continue
            idx = index_of_var[finite]
            uniq, inv = np.unique(idx, axis=0, return_inverse=True)
            inv = np.asarray(inv).reshape(-1)
            rows.append(row + inv)
            cols.append(finite)
            first = np.zeros(len(uniq), dtype=int)
            first[inv] = finite
            bounds.append(cap_of_var[first])
            meta.extend((kind, tuple(int(t) for t in u)) for u in uniq)
            row += len(uniq)
        if row:
            self.A = sp.csr_matrix(
                (np.ones(sum(len(c) for c in cols)), (np.concatenate(rows), np.concatenate(cols))),
                shape=(row, self.n),
            )
            self.cap = np.concatenate(bounds)
        else:
            self.A = sp.csr_matrix((0, self.n))
            self.cap = np.zeros(0)
        self.cap_meta = meta
        self.B = sp.vstack([self.L_cong, self.A]).tocsr()
        self.n_ineq = self.n + len(self.cap)

        self._kkt_pattern()

    def _kkt_pattern(self):
        """Fixed sparsity of the augmented Newton system

            [ D     E'  (W^1/2 B)' ] [dx]   [-g]
            [ E     0       0      ] [nu] = [ r]
            [ W^1/2 B  0   -I      ] [ y]   [ 0]

        with D the diagonal barrier curvature, E the demand incidence and B
        the congested-load and finite-capacity rows.  Closed variables keep
        only their diagonal entry, which pins their step at zero.
        """
        n, g = self.n, self.n_groups
        var = np.arange(n)
        grp = np.repeat(np.arange(g), self.m1)
        op = self.open
        B = self.B.tocoo()
        keep = op[B.col]
        brow, bcol = B.row[keep], B.col[keep]
        nb = self.B.shape[0]
        e_var = var[op]
        rows = [var, n + grp[op], e_var, n + g + brow, bcol, n + g + np.arange(nb)]
        cols = [var, e_var, n + grp[op], bcol, n + g + brow, n + g + np.arange(nb)]
        self._k_rows = np.concatenate(rows)
        self._k_cols = np.concatenate(cols)
        self._k_nE = len(e_var)
        self._k_brow = brow
        self._k_size = n + g + nb

    def _kkt_matrix(self, hdiag, omega):
        nb = self.B.shape[0]
        ob = omega[self._k_brow]
        data = np.concatenate([hdiag, np.ones(2 * self._k_nE), ob, ob, -np.ones(nb)])
        return sp.csc_matrix((data, (self._k_rows, self._k_cols)),
                             shape=(self._k_size, self._k_size))

    def slack(self, x):
        """Capacity slacks, summed exactly: near the boundary the barrier
        duals ``mu / slack`` are only as accurate as the slack itself."""
        if not len(self.cap):
            return np.zeros(0)
        ptr, cols = self.A.indptr, self.A.indices
        return np.array([
            math.fsum(np.concatenate(([c], -x[cols[ptr[r]:ptr[r + 1]]])))
            for r, c in enumerate(self.cap)
        ])

    # objective pieces --------------------------------------------------
    def loads(self, x):
        return self.L @ x

    def objective(self, x) -> float:
        val = float(self.c0 @ x) + float(np.sum(congestion_integral(*self.load_params, self.loads(x))))
        if self.weight:
            val += self.weight * float(x @ x)
        return val

    def gradient(self, x):
        g = self.c0 + self.L.T @ congestion_cost(*self.load_params, self.loads(x))
        if self.weight:
            g = g + 2.0 * self.weight * x
        return g

    def barrier_value(self, x, mu) -> float:
        xo = x[self.open]
        if np.any(xo <= 0):
            return np.inf
        slack = self.slack(x)
        if np.any(slack <= 0):
            return np.inf
        return self.objective(x) - mu * (np.sum(np.log(xo)) + np.sum(np.log(slack)))

    # linear algebra ----------------------------------------------------
    def newton_direction(self, x, mu, mu_hess=None):
        """Return (dx, g) for the barrier problem at ``x``.

        ``mu_hess`` scales the barrier curvature; passing the previous stage's
        value gives the central-path tangent step used right after a cut in mu.
        The augmented system is solved by sparse LU, which stays accurate
        where the reduced (normal-equation) form loses all digits near the
        boundary; a couple of refinement rounds clean up the rest.
        """
        mu_hess = mu if mu_hess is None else mu_hess
        slack = self.slack(x)
        cap_price = mu / slack
        if self.any_closed:
            xs = np.where(self.open, x, 1.0)
            g = np.where(self.open, self.gradient(x) - mu / xs + self.A.T @ cap_price, 0.0)
            hdiag = np.where(self.open, mu_hess / (xs * xs) + 2.0 * self.weight, 1.0)
        else:
            g = self.gradient(x) - mu / x + self.A.T @ cap_price
            hdiag = mu_hess / (x * x) + 2.0 * self.weight
        resid = self.demand - x.reshape(self.n_groups, self.m1).sum(axis=1)
        w = np.concatenate([
            congestion_derivative(*(p[self.congested] for p in self.load_params), self.L_cong @ x),
            mu_hess / (slack * slack),
        ])
        K = self._kkt_matrix(hdiag, np.sqrt(np.maximum(w, 0.0)))
        rhs = np.concatenate([-g, resid, np.zeros(self.B.shape[0])])
        lu = spla.splu(K, permc_spec="MMD_AT_PLUS_A", options={"SymmetricMode": True})
        sol = lu.solve(rhs)
        for _ in range(REFINEMENT_ROUNDS):
            sol = sol + lu.solve(rhs - K @ sol)
        return sol[: self.n], g

    def max_step(self, x, dx) -> float:
        t = 1.0
        neg = dx < 0
        if np.any(neg):
            t = min(t, BOUNDARY_FRACTION * float(np.min(x[neg] / -dx[neg])))
        if len(self.cap):
            slack = self.slack(x)
            adx = self.A @ dx
            pos = adx > 0
            if np.any(pos):
                t = min(t, BOUNDARY_FRACTION * float(np.min(slack[pos] / adx[pos])))
        return t

    # start point / final clean-up --------------------------------------
    def initial_point(self):
        """Strictly interior start: demand split evenly over modes, with the
        non-walking share shrunk where it would crowd a finite capacity."""
        open_ = self.open.reshape(self.n_groups, self.m1)
        x = open_ * (self.demand / open_.sum(axis=1))[:, None]
        if self.m1 > 1 and len(self.cap):
            x[:, 0] = 0.0
            x = x.ravel()
            row_load = self.A @ x
            factor = np.minimum(1.0, 0.5 * self.cap / np.maximum(row_load, 1e-300))
            coo = self.A.tocoo()
            var_factor = np.ones(self.n)
            np.minimum.at(var_factor, coo.col, factor[coo.row])
            x = (x * var_factor).reshape(self.n_groups, self.m1)
            x[:, 0] = self.demand - x[:, 1:].sum(axis=1)
        return x.ravel()

    def project_demand(self, x):
        """Absorb the demand residual in walking (uncapacitated), else rescale."""
        x = np.where(self.open, np.maximum(x, 0.0), 0.0).reshape(self.n_groups, self.m1)
        resid = self.demand - x.sum(axis=1)
        walk = x[:, 0] + resid
        ok = walk >= 0
        x[ok, 0] = walk[ok]
        bad = ~ok
        if np.any(bad):
            x[bad] *= (self.demand[bad] / x[bad].sum(axis=1))[:, None]
        return x.ravel()

    def scatter(self, x, out):
        vi, vj, vk, vm = self.coords
        out[vi, vj, vk, vm] = x
        return out

    def duals(self, x, mu, out):
        """Capacity multipliers at ``x``.

        ``mu / slack`` alone is inaccurate when a slack is tiny, since a
        rounding-level error in the slack moves the price a lot while
        barely changing the barrier objective.  The price is therefore
        advanced by one linearised Newton step, which is the multiplier the
        primal-dual Newton system would predict.
        """
        if not len(self.cap):
            return out
        slack = self.slack(x)
        dx, _ = self.newton_direction(x, mu)
        growth = self.A @ dx
        prices = np.maximum(mu / slack * (1.0 + growth / slack), 0.0)
        for (kind, idx), price in zip(self.cap_meta, prices):
            out[kind][idx] = price
        return out


def _center(prob: _Problem, x, mu, options: SolveOptions, record: StageRecord, final: bool,
            mu_prev=None):
    """Damped Newton on the barrier problem at fixed ``mu``.

    ``dec / mu`` is the squared Newton decrement of the scaled barrier
    function; below ``QUADRATIC_REGION`` full steps are taken (the Armijo
    test cannot resolve the remaining decrease in floating point anyway).
    """
    steps = 0
    F = prob.barrier_value(x, mu)
    # intermediate stages only need to stay near the central path
    stop = FINAL_CENTERING if final else LOOSE_CENTERING
    for it in range(options.newton_max_steps):
        predictor = it == 0 and mu_prev is not None
        dx, g = prob.newton_direction(x, mu, mu_prev if predictor else None)
        dec = -float(g @ dx)
        if dec <= 0 or (not predictor and dec <= stop * mu):
            break
        t = prob.max_step(x, dx)
        if not predictor and dec <= QUADRATIC_REGION * mu:
            xn = x + t * dx
            Fn = prob.barrier_value(xn, mu)
            if not np.isfinite(Fn):
                break
        else:
            while True:
                xn = x + t * dx
                Fn = prob.barrier_value(xn, mu)
                if Fn <= F - ARMIJO * t * dec:
                    break
                t *= BACKTRACK
                if t < 1e-14:
                    return x, steps, F
        x, F = xn, Fn
        steps += 1
        record.barrier_values.append(F)
    return x, steps, F


def _barrier(prob: _Problem, options: SolveOptions, mu_target: float):
    # on the central path every complementarity product equals mu, so the
    # max-norm KKT residual is about mu once the last stage is centred
    trace = []
    x = prob.initial_point()
    mu = options.barrier_initial_mu
    if prob.n == 0:
        return x, mu, trace, True
    done = False
    mu_prev = None
    for _ in range(options.max_outer_iterations):
        final = mu <= mu_target
        rec = StageRecord(mu=mu, newton_steps=0, potential=np.nan)
        x, steps, _ = _center(prob, x, mu, options, rec, final, mu_prev)
        rec.newton_steps = steps
        rec.potential = prob.objective(x)
        trace.append(rec)
        if final:
            done = True
            break
        mu_prev = mu
        mu *= options.barrier_shrink
    return x, mu, trace, done


def _infeasible_report(scenario, weight) -> SolveReport:
    return SolveReport(
        flows=np.zeros(scenario.flow_shape), potential=np.nan, kkt_residual=np.inf,
        dual_capacity_prices=zero_duals(scenario), iterations=[], status=Status.INFEASIBLE,
        regularization_weight=weight,
    )


def _finish(scenario, flows, duals, trace, weight, options, done) -> SolveReport:
    potential = eval_potential(scenario, flows, regularization_weight=weight)
    res = kkt_residual(scenario, flows, duals, regularization_weight=weight)
    status = Status.CONVERGED if done and res <= options.kkt_tolerance else Status.ITERATION_LIMIT
    if status is not Status.CONVERGED:
        logger.warning("solver stopped with status %s (kkt residual %.3g)", status.value, res)
    return SolveReport(
        flows=flows, potential=potential, kkt_residual=res, dual_capacity_prices=duals,
        iterations=trace, status=status, regularization_weight=weight,
    )


def _mu_target(options: SolveOptions) -> float:
    return min(options.kkt_tolerance / 10.0, CERTIFICATE_MU)


def solve_equilibrium(scenario: Scenario, options: Optional[SolveOptions] = None) -> SolveReport:
    """Compute an equilibrium as a minimiser of the capacitated potential."""
    check_scenario(scenario)
    options = options or SolveOptions()
    weight = options.weight_for(scenario)
    if not np.all(np.isfinite(scenario.demand)):
        return _infeasible_report(scenario, weight)
    prob = _Problem(scenario, weight)
    x, mu, trace, done = _barrier(prob, options, _mu_target(options))
    flows = np.zeros(scenario.flow_shape)
    duals = zero_duals(scenario)
    if prob.n:
        prob.duals(x, mu, duals)
        prob.scatter(prob.project_demand(x), flows)
    return _finish(scenario, flows, duals, trace, weight, options, done)


def solve_decomposed(scenario: Scenario, options: Optional[SolveOptions] = None,
                     n_jobs: int = 1) -> SolveReport:
    """Solve one independent subproblem per origin-destination pair.

    Valid only when every availability and displacement capacity is
    unbounded; ride capacities are per pair and therefore allowed.
    """
    check_scenario(scenario)
    if scenario.capacities.coupling:
        raise ValueError("decomposition requires unbounded availability and displacement capacities")
    options = options or SolveOptions()
    weight = options.weight_for(scenario)
    d = scenario.demand
    pairs = sorted({(int(i), int(j)) for i, j in zip(*np.nonzero(d.sum(axis=2) > 0))})

    def run(pair):
        prob = _Problem(scenario, weight, pair=pair)
        x, mu, trace, done = _barrier(prob, options, _mu_target(options))
        return prob, x, mu, trace, done

    if n_jobs != 1 and len(pairs) > 1:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=n_jobs)(delayed(run)(p) for p in pairs)
    else:
        results = [run(p) for p in pairs]
    flows = np.zeros(scenario.flow_shape)
    duals = zero_duals(scenario)
    trace, all_done = [], True
    for prob, x, mu, sub_trace, done in results:
        prob.duals(x, mu, duals)
        prob.scatter(prob.project_demand(x), flows)
        trace.extend(sub_trace)
        all_done &= done
    return _finish(scenario, flows, duals, trace, weight, options, all_done)


def _gradient_tensor(scenario: Scenario, flows, weight: float):
    cm = scenario.cost_model
    load = flows.sum(axis=2)
    cong = congestion_cost(cm.code, cm.a, cm.b, cm.beta, cm.kappa, load)
    grad = cm.constant + cong[:, :, None, :]
    if weight:
        grad = grad + 2.0 * weight * flows
    return grad


def _closed_mask(caps) -> np.ndarray:
    """(N, N, M+1) mask of modes closed by a zero capacity."""
    return (caps.ride == 0) | (caps.available == 0)[:, None, :] | (caps.displace == 0)[None, :, :]


def kkt_residual(scenario: Scenario, flows, duals=None, regularization_weight=None,
                 feasibility_tol: float = 1e-6) -> float:
    """Max-norm KKT violation of the potential minimisation problem.

    Stationarity is enforced by choosing, per demand group, the equality
    multiplier that makes the smallest reduced cost zero; the reported
    value is then the largest of the complementary-slackness products
    (flow times reduced cost, multiplier times capacity slack) and of any
    sign or primal violations.
    """
    from .verifier import check_feasible

    x = check_flows(scenario, flows, nonnegative_tol=None)
    ok, violations = check_feasible(scenario, x, tol_eq=feasibility_tol, tol_cap=feasibility_tol)
    if not ok:
        raise ValueError(f"flows are infeasible: {violations[:3]}")
    weight = scenario.regularization_weight if regularization_weight is None else regularization_weight
    duals = duals if duals is not None else zero_duals(scenario)
    caps = scenario.capacities
    lam = {k: np.asarray(duals[k], dtype=float) for k in CAPACITY_KINDS}

    reduced = _gradient_tensor(scenario, x, weight)
    reduced = reduced + lam["ride"][:, :, None, :]
    reduced = reduced + lam["available"][:, None, None, :]
    reduced = reduced + lam["displace"][None, :, None, :]

    worst = 0.0
    d = scenario.demand
    active = d > 0
    if np.any(active):
        # a zero capacity admits an arbitrarily large multiplier, so closed
        # modes never bind the equality multiplier
        closed = np.broadcast_to(_closed_mask(caps)[:, :, None, :], reduced.shape)
        r = np.where(closed[active], np.inf, reduced[active])
        xa = x[active]
        s = r - r.min(axis=1, keepdims=True)
        prod = np.where(closed[active], np.abs(xa), np.abs(xa) * np.where(np.isfinite(s), s, 0.0))
        worst = max(worst, float(np.max(prod)))
        worst = max(worst, float(np.max(np.abs(xa.sum(axis=1) - d[active]))))
        worst = max(worst, float(np.max(np.maximum(-xa, 0.0))))

    load_ride = x.sum(axis=2)
    loads = {
        "ride": load_ride,
        "available": load_ride.sum(axis=1),
        "displace": load_ride.sum(axis=0),
    }
    for kind in CAPACITY_KINDS:
        cap = getattr(caps, kind)
        lk = lam[kind]
        finite = np.isfinite(cap)
        worst = max(worst, float(np.max(np.maximum(-lk, 0.0), initial=0.0)))
        if np.any(~finite):
            worst = max(worst, float(np.max(np.abs(lk[~finite]), initial=0.0)))
        if np.any(finite):
            slack = cap[finite] - loads[kind][finite]
            worst = max(worst, float(np.max(np.abs(lk[finite] * slack))))
            worst = max(worst, float(np.max(np.maximum(-slack, 0.0))))
    return worst


class EquilibriumSolver(BaseEstimator):
    """Estimator-style wrapper around :func:`solve_equilibrium`.

    ``fit(scenario)`` computes the equilibrium; fitted attributes follow the
    trailing-underscore convention.

    Attributes
    ----------
    flows_ : ndarray of shape (N, N, K, M+1)
    potential_ : float
    dual_capacity_prices_ : dict of ndarray
    report_ : SolveReport
    n_iter_ : int
        Total number of Newton steps.
    """

    def __init__(self, kkt_tolerance=1e-6, max_outer_iterations=60, barrier_initial_mu=1.0,
                 barrier_shrink=0.2, newton_max_steps=50, regularization_weight=None,
                 decompose=False):
        self.kkt_tolerance = kkt_tolerance
        self.max_outer_iterations = max_outer_iterations
        self.barrier_initial_mu = barrier_initial_mu
        self.barrier_shrink = barrier_shrink
        self.newton_max_steps = newton_max_steps
        self.regularization_weight = regularization_weight
        self.decompose = decompose

    def _options(self) -> SolveOptions:
        return SolveOptions(
            kkt_tolerance=self.kkt_tolerance,
            max_outer_iterations=self.max_outer_iterations,
            barrier_initial_mu=self.barrier_initial_mu,
            barrier_shrink=self.barrier_shrink,
            newton_max_steps=self.newton_max_steps,
            regularization_weight=self.regularization_weight,
        )

    def fit(self, scenario, y=None):
        check_scenario(scenario)
        solve = solve_decomposed if self.decompose else solve_equilibrium
        report = solve(scenario, self._options())
        self.report_ = report
        self.flows_ = report.flows
        self.potential_ = report.potential
        self.dual_capacity_prices_ = report.dual_capacity_prices
        self.status_ = report.status
        self.n_iter_ = sum(r.newton_steps for r in report.iterations)
        return self

    def score(self, scenario, y=None) -> float:
        """Negative potential of the fitted flows under ``scenario``."""
        check_is_fitted(self, "flows_")
        return -eval_potential(scenario, self.flows_,
                               regularization_weight=self.report_.regularization_weight)
