"""Independent reference computations used by the tests.

Nothing here imports the code under test beyond the plain data types, so a
bug in the package cannot hide itself by agreeing with its own oracle.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy import integrate

from mobility_game.model import AFFINE, BPR_CODE, CONSTANT


def latency(code, a, b, beta, kappa, load):
    """Congestion latency written out directly from the family definitions."""
    if code == CONSTANT:
        return a
    if code == AFFINE:
        return a + b * load
    if code == BPR_CODE:
        return a * (1.0 + b * (load / kappa) ** beta)
    raise ValueError(code)


def potential_by_quadrature(scenario, flows, weight=0.0):
    """Potential with congestion integrals computed numerically by scipy.quad."""
    cm = scenario.cost_model
    x = np.asarray(flows, dtype=float)
    total = float(np.sum(cm.constant * x))
    loads = x.sum(axis=2)
    n, _, m1 = loads.shape
    for i, j, m in itertools.product(range(n), range(n), range(m1)):
        args = (cm.code[i, j, m], cm.a[i, j, m], cm.b[i, j, m], cm.beta[i, j, m], cm.kappa[i, j, m])
        if loads[i, j, m] > 0:
            total += integrate.quad(lambda s: latency(*args, s), 0.0, loads[i, j, m],
                                    epsabs=1e-13, epsrel=1e-13)[0]
    return total + weight * float(np.sum(x * x))


def finite_difference_gradient(f, x, h=1e-6):
    """Central differences of a scalar function of an array."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[idx] = h
        g[idx] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def best_response_nash(ra, rb, valid=None, tol=1e-9):
    """Double loop: (a, b) is an equilibrium iff no single player gains by deviating."""
    ra, rb = np.asarray(ra, float), np.asarray(rb, float)
    na, nb = ra.shape
    valid = np.ones(ra.shape, bool) if valid is None else np.asarray(valid, bool)
    out = []
    for a in range(na):
        for b in range(nb):
            if not valid[a, b]:
                continue
            stable = True
            for a2 in range(na):
                if valid[a2, b] and ra[a2, b] > ra[a, b] + tol:
                    stable = False
            for b2 in range(nb):
                if valid[a, b2] and rb[a, b2] > rb[a, b] + tol:
                    stable = False
            if stable:
                out.append((a, b))
    return out


def dominates(p, q):
    """p dominates q under (min cost, min co2, max revenue)."""
    better_eq = p[0] <= q[0] and p[1] <= q[1] and p[2] >= q[2]
    strictly = p[0] < q[0] or p[1] < q[1] or p[2] > q[2]
    return better_eq and strictly


def dominance_frontier(points):
    return [i for i, q in enumerate(points) if not any(dominates(p, q) for p in points)]


def splitmix64_reference(seed, count):
    """SplitMix64 written with Python's arbitrary-precision ints and explicit masking."""
    out, state = [], seed % 2**64
    for _ in range(count):
        state = (state + 0x9E3779B97F4A7C15) % 2**64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) % 2**64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) % 2**64
        out.append(z ^ (z >> 31))
    return out
