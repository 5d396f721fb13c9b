from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mobility_game.model import Affine, Capacities, Constant, CostModel, Scenario
from mobility_game.scenario_io import load_scenario

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DATA = Path(str(resources.files("mobility_game").joinpath("data")))

# lines recorded by the acceptance suite, echoed at the end of the run
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def capped_green(green_capacity=2.0):
    """Two populations of 2 travelers each from location 1 to 2.

    red costs 1 for population 1 and 5 for population 2, green costs 1 and is
    capacitated, blue costs 5 (population 1) or its load (population 2).
    """
    d = np.zeros((2, 2, 2))
    d[0, 1, :] = 2.0
    c0 = np.zeros((2, 2, 2, 3))
    c0[0, 1, 0, 0], c0[0, 1, 1, 0] = 1.0, 5.0
    c0[0, 1, :, 1] = 1.0
    c0[0, 1, 0, 2] = 5.0
    cong = [[[Constant(), Constant(), Affine(0.0, 1.0)] for _ in range(2)] for _ in range(2)]
    caps = Capacities.unbounded(2, 3)
    ride = np.array(caps.ride)
    ride[0, 1, 1] = green_capacity
    return Scenario(d, CostModel(c0, cong), Capacities(caps.available, caps.displace, ride),
                    mode_names=["red", "green", "blue"], population_names=["pop1", "pop2"])


def twin_modes(weight=0.0):
    """Two identical modes with latency equal to their load, demand 2 + 2."""
    d = np.zeros((2, 2, 2))
    d[0, 1, :] = 2.0
    cong = [[[Affine(0.0, 1.0), Affine(0.0, 1.0)] for _ in range(2)] for _ in range(2)]
    return Scenario(d, CostModel(np.zeros((2, 2, 2, 2)), cong), Capacities.unbounded(2, 2),
                    regularization_weight=weight)


def random_instance(rng: np.random.Generator, n=2, max_k=2, max_m1=3, max_demand=3.0,
                    quantum=0.25, capacitated=True):
    """Random affine instance with demands and finite capacities on a ``quantum`` grid."""
    k = int(rng.integers(1, max_k + 1))
    m1 = int(rng.integers(2, max_m1 + 1))
    d = np.zeros((n, n, k))
    units = int(max_demand / quantum)
    for i in range(n):
        for j in range(n):
            if i != j and rng.random() < 0.8:
                d[i, j] = rng.integers(0, units + 1, size=k) * quantum
    if d.sum() > 6.0:
        d *= 6.0 / d.sum()
        d = np.floor(d / quantum) * quantum
    c0 = np.round(rng.uniform(0, 2, size=(n, n, k, m1)), 3)
    cong = [[[Affine(round(float(rng.uniform(0, 1)), 3), round(float(rng.uniform(0, 1.5)), 3))
              for _ in range(m1)] for _ in range(n)] for _ in range(n)]
    caps = Capacities.unbounded(n, m1)
    avail, disp, ride = (np.array(caps.available), np.array(caps.displace), np.array(caps.ride))
    if capacitated:
        for arr in (avail, disp, ride):
            mask = rng.random(arr.shape) < 0.4
            vals = rng.integers(0, units + 1, size=arr.shape) * quantum
            arr[mask] = vals[mask]
        avail[:, 0] = disp[:, 0] = np.inf
        ride[:, :, 0] = np.inf
    return Scenario(d, CostModel(c0, cong), Capacities(avail, disp, ride))


@pytest.fixture
def ex1():
    return capped_green()


@pytest.fixture(scope="session")
def sioux_source():
    return load_scenario(DATA / "sioux_falls.json")


@pytest.fixture(scope="session")
def sioux(sioux_source):
    return sioux_source.scenario
