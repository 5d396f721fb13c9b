"""Multimodal mobility equilibria with capacity constraints.

Citizens split across populations choose among capacitated transport modes;
equilibria are computed as minimisers of a convex potential, checked with an
independent verifier, and fed into a two-stage stakeholder pricing game.
"""

from .model import (
    BPR,
    UNBOUNDED,
    Affine,
    Capacities,
    Constant,
    CostModel,
    Scenario,
    cost_tensor,
    eval_cost,
    eval_potential,
    eval_potential_term,
)
from .solver import (
    EquilibriumSolver,
    SolveOptions,
    SolveReport,
    Status,
    kkt_residual,
    solve_decomposed,
    solve_equilibrium,
)
from .verifier import (
    CheckReport,
    brute_force_equilibria,
    check_equilibrium,
    check_feasible,
    grid_min_potential,
)

__version__ = "0.1.0"

__all__ = [
    "BPR", "UNBOUNDED", "Affine", "Capacities", "Constant", "CostModel", "Scenario",
    "cost_tensor", "eval_cost", "eval_potential", "eval_potential_term",
    "EquilibriumSolver", "SolveOptions", "SolveReport", "Status", "kkt_residual",
    "solve_decomposed", "solve_equilibrium",
    "CheckReport", "brute_force_equilibria", "check_equilibrium", "check_feasible",
    "grid_min_potential",
]
