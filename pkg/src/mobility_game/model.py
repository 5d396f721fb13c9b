"""Domain types for the multi-modal mobility game and cost/potential evaluation.

Array conventions (0-based indices everywhere internally):

* ``demand[i, j, k]``                travelers of population ``k`` going ``i -> j``
* ``flows[i, j, k, m]``              travelers of that group using mode ``m``
* ``CostModel.constant[i, j, k, m]`` population-dependent additive cost (hours)
* congestion parameters ``[i, j, m]``, shared by all populations

Mode 0 is walking and is always uncapacitated.  Unbounded capacities are
stored as ``np.inf``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np

UNBOUNDED = np.inf

CONSTANT, AFFINE, BPR_CODE = 0, 1, 2
FAMILY_NAMES = {CONSTANT: "constant", AFFINE: "affine", BPR_CODE: "bpr"}


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Constant:
    """Load-independent travel time ``t_nom``."""

    t_nom: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.t_nom) and self.t_nom >= 0):
            raise ValueError(f"t_nom must be finite and >= 0, got {self.t_nom}")


@dataclass(frozen=True)
class Affine:
    """Affine latency ``intercept + slope * x``.

    The classic nominal-time form ``t_nom * (1 + alpha * x)`` is available via
    :meth:`from_nominal`.  Storing intercept and slope separately also allows a
    zero intercept (pure ``slope * x`` latencies).
    """

    intercept: float = 0.0
    slope: float = 0.0

    def __post_init__(self):
        for name in ("intercept", "slope"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")

    @classmethod
    def from_nominal(cls, t_nom: float, alpha: float) -> "Affine":
        return cls(intercept=t_nom, slope=t_nom * alpha)


@dataclass(frozen=True)
class BPR:
    """Bureau of Public Roads latency ``t_nom * (1 + alpha * (x / kappa) ** beta)``."""

    t_nom: float
    alpha: float = 0.15
    beta: float = 4.0
    kappa: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.t_nom) and self.t_nom >= 0):
            raise ValueError(f"t_nom must be finite and >= 0, got {self.t_nom}")
        if not (np.isfinite(self.alpha) and self.alpha >= 0):
            raise ValueError(f"alpha must be finite and >= 0, got {self.alpha}")
        if not (np.isfinite(self.beta) and self.beta >= 1):
            raise ValueError(f"beta must be >= 1, got {self.beta}")
        if not (np.isfinite(self.kappa) and self.kappa > 0):
            raise ValueError(f"kappa must be > 0, got {self.kappa}")


Family = Union[Constant, Affine, BPR]


def _family_params(fam: Family) -> tuple[int, float, float, float, float]:
    # (code, a, b, beta, kappa) in the packed representation used by CostModel
    if isinstance(fam, Constant):
        return CONSTANT, fam.t_nom, 0.0, 1.0, 1.0
    if isinstance(fam, Affine):
        return AFFINE, fam.intercept, fam.slope, 1.0, 1.0
    if isinstance(fam, BPR):
        return BPR_CODE, fam.t_nom, fam.alpha, fam.beta, fam.kappa
    raise TypeError(f"unsupported congestion family: {fam!r}")


class CostModel:
    """Decomposed cost ``c0[i,j,k,m] + congestion[i,j,m](load)``.

    Parameters
    ----------
    constant : array_like, shape (N, N, K, M+1)
        Population-specific additive term in hours.
    congestion : nested sequence of families, shape (N, N, M+1), optional
        One :class:`Constant`, :class:`Affine` or :class:`BPR` per
        (origin, destination, mode).  Defaults to zero constant latency.
    """

    def __init__(self, constant, congestion=None):
        c0 = np.asarray(constant, dtype=float)
        if c0.ndim != 4 or c0.shape[0] != c0.shape[1]:
            raise ValueError(f"constant must have shape (N, N, K, M+1), got {c0.shape}")
        if not np.all(np.isfinite(c0)) or np.any(c0 < 0):
            raise ValueError("constant costs must be finite and non-negative")
        n, _, _, m1 = c0.shape
        code = np.zeros((n, n, m1), dtype=np.int8)
        a = np.zeros((n, n, m1))
        b = np.zeros((n, n, m1))
        beta = np.ones((n, n, m1))
        kappa = np.ones((n, n, m1))
        if congestion is not None:
            for i in range(n):
                for j in range(n):
                    for m in range(m1):
                        code[i, j, m], a[i, j, m], b[i, j, m], beta[i, j, m], kappa[i, j, m] = (
                            _family_params(congestion[i][j][m])
                        )
        self._set(c0, code, a, b, beta, kappa)

    def _set(self, c0, code, a, b, beta, kappa):
        self.constant = _frozen(c0)
        self.code = _frozen(code, np.int8)
        self.a = _frozen(a)
        self.b = _frozen(b)
        self.beta = _frozen(beta)
        self.kappa = _frozen(kappa)

    @classmethod
    def from_arrays(cls, constant, code, a, b, beta=None, kappa=None) -> "CostModel":
        """Build from packed parameter arrays of shape (N, N, M+1)."""
        obj = cls.__new__(cls)
        code = np.asarray(code, dtype=np.int8)
        beta = np.ones(code.shape) if beta is None else np.asarray(beta, dtype=float)
        kappa = np.ones(code.shape) if kappa is None else np.asarray(kappa, dtype=float)
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        c0 = np.asarray(constant, dtype=float)
        if not np.all(np.isin(code, (CONSTANT, AFFINE, BPR_CODE))):
            raise ValueError("unknown family code")
        if np.any(a < 0) or np.any(b < 0) or not np.all(np.isfinite(a)) or not np.all(np.isfinite(b)):
            raise ValueError("congestion parameters must be finite and non-negative")
        bpr = code == BPR_CODE
        if np.any(beta[bpr] < 1) or np.any(kappa[bpr] <= 0):
            raise ValueError("BPR requires beta >= 1 and kappa > 0")
        if not np.all(np.isfinite(c0)) or np.any(c0 < 0):
            raise ValueError("constant costs must be finite and non-negative")
        obj._set(c0, code, a, b, beta, kappa)
        return obj

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.constant.shape

    def family(self, i: int, j: int, m: int) -> Family:
        code = int(self.code[i, j, m])
        a, b = float(self.a[i, j, m]), float(self.b[i, j, m])
        if code == CONSTANT:
            return Constant(a)
        if code == AFFINE:
            return Affine(a, b)
        return BPR(a, b, float(self.beta[i, j, m]), float(self.kappa[i, j, m]))

    def with_constant(self, constant) -> "CostModel":
        return CostModel.from_arrays(constant, self.code, self.a, self.b, self.beta, self.kappa)

    def __eq__(self, other):
        if not isinstance(other, CostModel):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("constant", "code", "a", "b", "beta", "kappa")
        )

    __hash__ = None


# Vectorised kernels over packed parameters.  ``load`` broadcasts with params.

def congestion_cost(code, a, b, beta, kappa, load):
    load = np.asarray(load, dtype=float)
    ratio = np.where(code == BPR_CODE, load / kappa, 0.0)
    return np.where(
        code == CONSTANT,
        a,
        np.where(code == AFFINE, a + b * load, a * (1.0 + b * ratio ** beta)),
    )


def congestion_derivative(code, a, b, beta, kappa, load):
    load = np.asarray(load, dtype=float)
    bpr = a * b * beta * np.where(code == BPR_CODE, load, 0.0) ** (beta - 1.0) / kappa ** beta
    return np.where(code == CONSTANT, 0.0, np.where(code == AFFINE, b, bpr))


def congestion_integral(code, a, b, beta, kappa, load):
    load = np.asarray(load, dtype=float)
    x = np.where(code == BPR_CODE, load, 0.0)
    bpr = a * (load + b * x ** (beta + 1.0) / ((beta + 1.0) * kappa ** beta))
    return np.where(
        code == CONSTANT,
        a * load,
        np.where(code == AFFINE, a * load + 0.5 * b * load * load, bpr),
    )


@dataclass(frozen=True)
class Capacities:
    """Per-mode capacity bounds; ``np.inf`` marks an unbounded constraint.

    A zero bound closes the mode for every trip it covers.

    available[i, m]   vehicles departing location ``i`` by mode ``m``
    displace[j, m]    vehicles arriving at ``j`` by mode ``m``
    ride[i, j, m]     customers on a ride ``i -> j`` by mode ``m``
    """

    available: np.ndarray
    displace: np.ndarray
    ride: np.ndarray

    def __post_init__(self):
        for name in ("available", "displace", "ride"):
            arr = np.array(getattr(self, name), dtype=float)
            if np.any(np.isnan(arr)) or np.any(arr < 0):
                raise ValueError(f"{name} capacities must lie in [0, inf]")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n, m1 = self.available.shape
        if self.displace.shape != (n, m1) or self.ride.shape != (n, n, m1):
            raise ValueError("capacity arrays have inconsistent shapes")
        if (
            np.isfinite(self.available[:, 0]).any()
            or np.isfinite(self.displace[:, 0]).any()
            or np.isfinite(self.ride[:, :, 0]).any()
        ):
            raise ValueError("walking (mode 0) must be uncapacitated")

    @classmethod
    def unbounded(cls, n_locations: int, n_modes: int) -> "Capacities":
        return cls(
            np.full((n_locations, n_modes), UNBOUNDED),
            np.full((n_locations, n_modes), UNBOUNDED),
            np.full((n_locations, n_locations, n_modes), UNBOUNDED),
        )

    @property
    def coupling(self) -> bool:
        """True when any availability or displacement bound is finite."""
        return bool(np.isfinite(self.available).any() or np.isfinite(self.displace).any())


@dataclass(frozen=True)
class Scenario:
    """A full game instance.

    The optional metadata (names, values of time, prices, distances, emission
    factors) is not needed to solve for an equilibrium but is used by the
    metrics and stakeholder-game code.
    """

    demand: np.ndarray
    cost_model: CostModel
    capacities: Capacities
    window_hours: float = 1.0
    regularization_weight: float = 0.0
    mode_names: Optional[Sequence[str]] = None
    population_names: Optional[Sequence[str]] = None
    values_of_time: Optional[np.ndarray] = None
    prices: Optional[np.ndarray] = None
    distances_km: Optional[np.ndarray] = None
    emission_factors: Optional[np.ndarray] = None
    location_labels: Optional[Sequence[int]] = None

    def __post_init__(self):
        from .validation import check_scenario_fields

        check_scenario_fields(self)

    @property
    def n_locations(self) -> int:
        return self.demand.shape[0]

    @property
    def n_populations(self) -> int:
        return self.demand.shape[2]

    @property
    def n_modes(self) -> int:
        return self.cost_model.shape[3]

    @property
    def flow_shape(self) -> tuple[int, int, int, int]:
        return self.cost_model.shape

    def replace(self, **changes) -> "Scenario":
        return replace(self, **changes)

    def with_prices(self, prices) -> "Scenario":
        """Return a copy whose constant cost term is ``prices / value_of_time``."""
        if self.values_of_time is None:
            raise ValueError("scenario has no values of time; cannot convert prices")
        prices = np.asarray(prices, dtype=float)
        c0 = prices[:, :, None, :] / self.values_of_time[None, None, :, None]
        return self.replace(prices=prices, cost_model=self.cost_model.with_constant(c0))

    def labels(self) -> list:
        return list(self.location_labels) if self.location_labels is not None else list(
            range(1, self.n_locations + 1)
        )

    def mode_index(self, name: str) -> int:
        names = list(self.mode_names or [])
        if name not in names:
            raise KeyError(f"unknown mode {name!r}; known modes: {names}")
        return names.index(name)


def _check_index(model: CostModel, i, j, k, m):
    n, _, kk, m1 = model.shape
    for v, hi, name in ((i, n, "i"), (j, n, "j"), (k, kk, "k"), (m, m1, "m")):
        if not 0 <= v < hi:
            raise IndexError(f"index {name}={v} out of range [0, {hi})")


def eval_cost(model: CostModel, i: int, j: int, k: int, m: int, load: float) -> float:
    """Cost in hours for population ``k`` riding ``i -> j`` by mode ``m``."""
    _check_index(model, i, j, k, m)
    if not np.isfinite(load) or load < 0:
        raise ValueError(f"load must be finite and non-negative, got {load}")
    c = congestion_cost(
        model.code[i, j, m], model.a[i, j, m], model.b[i, j, m],
        model.beta[i, j, m], model.kappa[i, j, m], load,
    )
    return float(model.constant[i, j, k, m] + c)


def eval_potential_term(model: CostModel, i: int, j: int, m: int, total_load: float) -> float:
    """Integral of the congestion latency from 0 to ``total_load``."""
    _check_index(model, i, j, 0, m)
    if not np.isfinite(total_load) or total_load < 0:
        raise ValueError(f"load must be finite and non-negative, got {total_load}")
    return float(
        congestion_integral(
            model.code[i, j, m], model.a[i, j, m], model.b[i, j, m],
            model.beta[i, j, m], model.kappa[i, j, m], total_load,
        )
    )


def group_loads(flows: np.ndarray) -> np.ndarray:
    """Per (i, j, m) load summed over populations."""
    return flows.sum(axis=2)


def cost_tensor(scenario: Scenario, flows: np.ndarray) -> np.ndarray:
    """Cost in hours of every (i, j, k, m) at the loads induced by ``flows``."""
    cm = scenario.cost_model
    load = group_loads(flows)
    cong = congestion_cost(cm.code, cm.a, cm.b, cm.beta, cm.kappa, load)
    return cm.constant + cong[:, :, None, :]


def eval_potential(scenario: Scenario, flows, regularization_weight: Optional[float] = None) -> float:
    """Beckmann-type potential of a flow configuration.

    ``regularization_weight`` overrides the scenario flag when given.
    """
    from .validation import check_flows

    x = check_flows(scenario, flows, nonnegative_tol=None)
    cm = scenario.cost_model
    load = group_loads(x)
    if np.any(load < 0):
        raise ValueError("group loads must be non-negative")
    w = scenario.regularization_weight if regularization_weight is None else regularization_weight
    value = float(np.sum(cm.constant * x))
    value += float(np.sum(congestion_integral(cm.code, cm.a, cm.b, cm.beta, cm.kappa, load)))
    if w:
        value += w * float(np.sum(x * x))
    return value
