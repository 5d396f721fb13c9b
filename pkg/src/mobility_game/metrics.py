"""Summary quantities of an equilibrium: modal split, costs, revenues, emissions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import Scenario, cost_tensor
from .validation import check_flows


@dataclass
class MetricsReport:
    """Metrics of one flow configuration.

    Costs are in USD per traveler, obtained by multiplying hour-valued costs
    by each population's value of time (1 when the scenario has none).
    ``defined`` is False when the scenario has no demand, in which case the
    ratio-type fields are NaN.  Revenue and emissions are None when the
    scenario lacks prices or distances.
    """

    scenario: Scenario
    defined: bool
    total_demand: float
    modal_split: np.ndarray
    modal_split_by_population: np.ndarray
    avg_cost_total: float
    avg_cost: np.ndarray
    revenue: Optional[np.ndarray]
    emissions_kg: Optional[np.ndarray]
    emissions_total: Optional[float]
    histogram_values: np.ndarray
    histogram_weights: np.ndarray
    histogram_groups: list

    def mode_value(self, field: str, mode: str) -> float:
        return float(getattr(self, field)[self.scenario.mode_index(mode)])

    def histogram_percentile(self, q: float) -> float:
        """Demand-weighted percentile (inverted CDF) of per-group average costs."""
        if not len(self.histogram_values):
            return float("nan")
        return float(np.percentile(self.histogram_values, q, weights=self.histogram_weights,
                                   method="inverted_cdf"))


def _values_of_time(scenario: Scenario) -> np.ndarray:
    if scenario.values_of_time is None:
        return np.ones(scenario.n_populations)
    return np.asarray(scenario.values_of_time, dtype=float)


def modal_split(scenario: Scenario, flows) -> np.ndarray:
    """Fraction of all travelers on each mode; NaN everywhere if there is no demand."""
    x = check_flows(scenario, flows)
    total = scenario.demand.sum()
    if total <= 0:
        return np.full(scenario.n_modes, np.nan)
    return x.sum(axis=(0, 1, 2)) / total


def usd_costs(scenario: Scenario, flows) -> np.ndarray:
    """Per-traveler cost in USD for every (i, j, k, m)."""
    vot = _values_of_time(scenario)
    return cost_tensor(scenario, flows) * vot[None, None, :, None]


def average_cost(scenario: Scenario, flows):
    """Return ``(overall, per_population)`` demand-weighted mean USD costs."""
    x = check_flows(scenario, flows)
    spend = (x * usd_costs(scenario, x)).sum(axis=(0, 1, 3))
    mass = scenario.demand.sum(axis=(0, 1))
    with np.errstate(invalid="ignore", divide="ignore"):
        per_pop = np.where(mass > 0, spend / np.where(mass > 0, mass, 1.0), np.nan)
    total = mass.sum()
    overall = float(spend.sum() / total) if total > 0 else float("nan")
    return overall, per_pop


def revenue(scenario: Scenario, flows) -> np.ndarray:
    """Fare revenue per mode in USD (walking is free)."""
    if scenario.prices is None:
        raise ValueError("scenario has no pricing metadata")
    x = check_flows(scenario, flows)
    rev = np.einsum("ijkm,ijm->m", x, scenario.prices)
    rev[0] = 0.0
    return rev


def emissions(scenario: Scenario, flows) -> np.ndarray:
    """Operational CO2 per mode in kg: factor times passenger-km."""
    if scenario.distances_km is None:
        raise ValueError("scenario has no distance metadata")
    x = check_flows(scenario, flows)
    factors = (np.zeros(scenario.n_modes) if scenario.emission_factors is None
               else np.asarray(scenario.emission_factors, dtype=float))
    pkm = np.einsum("ijkm,ij->m", x, scenario.distances_km)
    out = factors * pkm
    out[0] = 0.0
    return out


def cost_histogram(scenario: Scenario, flows):
    """Per-(i, j, k) average USD costs with demand weights, sorted by value.

    Returns ``(values, weights, groups)`` where ``groups`` lists the
    0-based ``(i, j, k)`` of each entry.
    """
    x = check_flows(scenario, flows)
    d = scenario.demand
    gi, gj, gk = np.nonzero(d > 0)
    spend = (x * usd_costs(scenario, x)).sum(axis=3)[gi, gj, gk]
    w = d[gi, gj, gk]
    vals = spend / w
    order = np.argsort(vals, kind="stable")
    groups = [(int(gi[t]), int(gj[t]), int(gk[t])) for t in order]
    return vals[order], w[order], groups


def compute_metrics(scenario: Scenario, flows) -> MetricsReport:
    x = check_flows(scenario, flows)
    total = float(scenario.demand.sum())
    split = modal_split(scenario, x)
    mass = scenario.demand.sum(axis=(0, 1))
    with np.errstate(invalid="ignore", divide="ignore"):
        by_pop = x.sum(axis=(0, 1)) / mass[:, None]
    overall, per_pop = average_cost(scenario, x)
    rev = revenue(scenario, x) if scenario.prices is not None else None
    em = emissions(scenario, x) if scenario.distances_km is not None else None
    vals, w, groups = cost_histogram(scenario, x)
    return MetricsReport(
        scenario=scenario,
        defined=total > 0,
        total_demand=total,
        modal_split=split,
        modal_split_by_population=by_pop,
        avg_cost_total=overall,
        avg_cost=per_pop,
        revenue=rev,
        emissions_kg=em,
        emissions_total=None if em is None else float(em.sum()),
        histogram_values=vals,
        histogram_weights=w,
        histogram_groups=groups,
    )


def _names(scenario: Scenario):
    modes = list(scenario.mode_names or [str(m) for m in range(scenario.n_modes)])
    pops = list(scenario.population_names or [str(k) for k in range(scenario.n_populations)])
    return modes, pops


def metrics_rows(report: MetricsReport) -> list:
    """Rows ``metric, group, value`` for metrics.csv."""
    modes, pops = _names(report.scenario)
    r = repr
    rows = [["metric", "group", "value"], ["total_demand", "all", r(report.total_demand)]]
    rows += [["modal_split", m, r(float(v))] for m, v in zip(modes, report.modal_split)]
    for k, p in enumerate(pops):
        rows += [["modal_split", f"{p}/{m}", r(float(v))]
                 for m, v in zip(modes, report.modal_split_by_population[k])]
    rows.append(["avg_cost_usd", "all", r(report.avg_cost_total)])
    rows += [["avg_cost_usd", p, r(float(v))] for p, v in zip(pops, report.avg_cost)]
    if report.revenue is not None:
        rows += [["revenue_usd", m, r(float(v))] for m, v in zip(modes, report.revenue)]
    if report.emissions_kg is not None:
        rows += [["emissions_kg", m, r(float(v))] for m, v in zip(modes, report.emissions_kg)]
        rows.append(["emissions_kg", "total", r(report.emissions_total)])
    return rows


def histogram_rows(report: MetricsReport) -> list:
    labels = report.scenario.labels()
    _, pops = _names(report.scenario)
    rows = [["origin", "destination", "population", "avg_cost_usd", "weight"]]
    for (i, j, k), v, w in zip(report.histogram_groups, report.histogram_values,
                               report.histogram_weights):
        rows.append([labels[i], labels[j], pops[k], repr(float(v)), repr(float(w))])
    return rows
