"""Input validation helpers shared by the estimators and functional API."""

from __future__ import annotations

from typing import Optional

import numpy as np


def check_scenario_fields(scenario) -> None:
    """Validate and freeze the array fields of a :class:`Scenario` in place."""
    from .model import Capacities, CostModel

    d = np.array(scenario.demand, dtype=float)
    if d.ndim != 3 or d.shape[0] != d.shape[1]:
        raise ValueError(f"demand must have shape (N, N, K), got {d.shape}")
    if d.shape[0] < 1 or d.shape[2] < 1:
        raise ValueError("need at least one location and one population")
    if not np.all(np.isfinite(d)):
        raise ValueError("demand must be finite")
    if np.any(d < 0):
        raise ValueError("demand must be non-negative")
    diag = np.arange(d.shape[0])
    if np.any(d[diag, diag, :] != 0):
        raise ValueError("demand from a location to itself must be zero")
    d.setflags(write=False)
    object.__setattr__(scenario, "demand", d)

    if not isinstance(scenario.cost_model, CostModel):
        raise TypeError("cost_model must be a CostModel")
    if not isinstance(scenario.capacities, Capacities):
        raise TypeError("capacities must be a Capacities")
    n, _, k = d.shape
    cshape = scenario.cost_model.shape
    if cshape[:3] != (n, n, k):
        raise ValueError(f"cost model shape {cshape} does not match demand shape {d.shape}")
    m1 = cshape[3]
    if m1 < 1:
        raise ValueError("at least the walking mode is required")
    if scenario.capacities.available.shape != (n, m1):
        raise ValueError("capacity shapes do not match the scenario")
    if not (np.isfinite(scenario.window_hours) and scenario.window_hours > 0):
        raise ValueError("window_hours must be positive")
    w = scenario.regularization_weight
    if not (np.isfinite(w) and w >= 0):
        raise ValueError("regularization_weight must be non-negative")

    for name, shape in (
        ("values_of_time", (k,)),
        ("prices", (n, n, m1)),
        ("distances_km", (n, n)),
        ("emission_factors", (m1,)),
    ):
        v = getattr(scenario, name)
        if v is None:
            continue
        arr = np.array(v, dtype=float)
        if arr.shape != shape:
            raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise ValueError(f"{name} must be finite and non-negative")
        if name == "values_of_time" and np.any(arr <= 0):
            raise ValueError("values_of_time must be positive")
        arr.setflags(write=False)
        object.__setattr__(scenario, name, arr)
    for name, size in (("mode_names", m1), ("population_names", k), ("location_labels", n)):
        v = getattr(scenario, name)
        if v is not None:
            if len(v) != size:
                raise ValueError(f"{name} must have {size} entries, got {len(v)}")
            object.__setattr__(scenario, name, tuple(v))


def check_scenario(scenario):
    from .model import Scenario

    if not isinstance(scenario, Scenario):
        raise TypeError(f"expected a Scenario, got {type(scenario).__name__}")
    return scenario


def check_flows(scenario, flows, nonnegative_tol: Optional[float] = 0.0) -> np.ndarray:
    """Return ``flows`` as a float array of the scenario's flow shape.

    Raises ``ValueError`` on shape mismatch, non-finite entries, flow on the
    diagonal, or (when ``nonnegative_tol`` is not None) entries below
    ``-nonnegative_tol``.
    """
    x = np.asarray(flows, dtype=float)
    if x.shape != scenario.flow_shape:
        raise ValueError(f"flows have shape {x.shape}, expected {scenario.flow_shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("flows must be finite")
    n = x.shape[0]
    diag = np.arange(n)
    if np.any(x[diag, diag] != 0):
        raise ValueError("flows from a location to itself must be zero")
    if nonnegative_tol is not None and np.any(x < -nonnegative_tol):
        raise ValueError("flows must be non-negative")
    return x
