"""``mobility-game`` command-line interface.

Exit codes
----------
0  success (solve converged, flows are an equilibrium, ...)
1  input error: unreadable or invalid files, bad flags
2  solver stopped at its iteration limit
3  scenario is infeasible
4  flows checked by ``check`` are not an equilibrium
5  stakeholder game has no pure Nash equilibrium for any municipality action
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .game import (
    TIE_RULES,
    ActionGrid,
    MunicipalWeights,
    NoEquilibriumError,
    build_payoff_tensor,
    fare_monotonicity_violations,
    frontier_rows,
    outcome_rows,
    play,
    selected_document,
)
from .metrics import compute_metrics
from .model import eval_potential
from .scenario_io import (
    ScenarioError,
    csv_text,
    fmt,
    json_text,
    load_scenario,
    read_flows_csv,
    relocation_configs,
    write_files_atomic,
    write_results,
)
from .solver import SolveOptions, Status, solve_equilibrium
from .verifier import brute_force_equilibria, check_equilibrium

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_ITERATION_LIMIT = 2
EXIT_INFEASIBLE = 3
EXIT_NOT_EQUILIBRIUM = 4
EXIT_NO_EQUILIBRIUM = 5

STATUS_EXIT = {
    Status.CONVERGED: EXIT_OK,
    Status.ITERATION_LIMIT: EXIT_ITERATION_LIMIT,
    Status.INFEASIBLE: EXIT_INFEASIBLE,
}

log = logging.getLogger("mobility_game")


class InputError(Exception):
    pass


def _positive(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _nonneg(text):
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {text}")
    return v


def _seed(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _out_dir(path) -> Path:
    p = Path(path)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"--out: cannot create {p} ({exc.strerror})") from exc
    return p


def _load(args):
    try:
        return load_scenario(args.scenario, seed=getattr(args, "seed", None),
                             regularization_weight=getattr(args, "reg", None))
    except ScenarioError as exc:
        raise InputError(f"{args.scenario}: {exc}") from exc
    except OSError as exc:
        raise InputError(f"{args.scenario}: cannot read ({exc.strerror})") from exc


def _manifest(args, source, **extra) -> dict:
    man = {
        "command": args.command,
        "scenario": Path(args.scenario).name,
        "scenario_sha256": source.sha256,
    }
    man.update(extra)
    return man


def _options(args) -> SolveOptions:
    return SolveOptions(kkt_tolerance=args.tol)


def cmd_solve(args) -> int:
    source = _load(args)
    sc = source.scenario
    report = solve_equilibrium(sc, _options(args))
    print(f"status: {report.status.value}")
    print(f"potential: {fmt(report.potential)}")
    print(f"kkt_residual: {report.kkt_residual:.3e}")
    if report.status is Status.INFEASIBLE:
        return EXIT_INFEASIBLE
    metrics = compute_metrics(sc, report.flows)
    names = sc.mode_names or [str(m) for m in range(sc.n_modes)]
    print("modal_split: " + ", ".join(f"{n}={v:.4f}" for n, v in zip(names, metrics.modal_split)))
    write_results(report, metrics, _out_dir(args.out),
                  _manifest(args, source, solver_options=_options(args).as_dict(), seed=args.seed))
    return STATUS_EXIT[report.status]


def cmd_check(args) -> int:
    source = _load(args)
    sc = source.scenario
    try:
        flows = read_flows_csv(sc, args.flows)
    except OSError as exc:
        raise InputError(f"{args.flows}: cannot read ({exc.strerror})") from exc
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    rep = check_equilibrium(sc, flows, tol_cost=args.tol_cost, tol_sat=args.tol_sat)
    labels = sc.labels()
    modes = sc.mode_names or [str(m) for m in range(sc.n_modes)]
    pops = sc.population_names or [str(k) for k in range(sc.n_populations)]
    print(f"feasible: {str(rep.feasible).lower()}")
    print(f"is_equilibrium: {str(rep.is_equilibrium).lower()}")
    print(f"tol_cost: {rep.tol_cost} tol_sat: {rep.tol_sat}")
    for v in rep.feasibility_violations:
        print(f"infeasible: {v.kind} at {v.index} value {v.value:.6g} bound {v.bound:.6g}")
    for v in rep.violations:
        print(f"violation: {labels[v.i]}->{labels[v.j]} {pops[v.k]} uses {modes[v.used_mode]} "
              f"but {modes[v.better_mode]} is cheaper by {v.cost_gap:.6g} and unsaturated")
    return EXIT_OK if rep.is_equilibrium else EXIT_NOT_EQUILIBRIUM


def cmd_oracle(args) -> int:
    source = _load(args)
    sc = source.scenario
    try:
        found = brute_force_equilibria(sc, args.step, tol_cost=args.tol_cost, tol_sat=args.tol_sat)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    print(f"equilibria: {len(found)}")
    labels = sc.labels()
    modes = sc.mode_names or [str(m) for m in range(sc.n_modes)]
    pops = sc.population_names or [str(k) for k in range(sc.n_populations)]
    rows = [["equilibrium", "potential", "origin", "destination", "population", "mode", "flow"]]
    for e, x in enumerate(found):
        pot = eval_potential(sc, x)
        print(f"  #{e}: potential {pot:.6g}")
        for i, j, k in zip(*np.nonzero(sc.demand > 0)):
            for m in range(sc.n_modes):
                rows.append([e, fmt(pot), labels[i], labels[j], pops[k], modes[m], fmt(x[i, j, k, m])])
    if args.out:
        write_files_atomic(_out_dir(args.out), {"equilibria.csv": csv_text(rows)})
    return EXIT_OK


def _grid(args) -> ActionGrid:
    if args.grid is None:
        return ActionGrid()
    try:
        return ActionGrid.from_json(args.grid)
    except OSError as exc:
        raise InputError(f"{args.grid}: cannot read ({exc.strerror})") from exc
    except (ValueError, TypeError) as exc:
        raise InputError(f"{args.grid}: {exc}") from exc


def cmd_game(args) -> int:
    grid = _grid(args)
    try:
        weights = MunicipalWeights(args.rho_cost, args.rho_co2, args.rho_revenue)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    source = _load(args)
    try:
        payoffs = build_payoff_tensor(source.scenario, grid, _options(args))
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    for msg in payoffs.diagnostics:
        print(f"invalid: {msg}", file=sys.stderr)
    try:
        outcome = play(payoffs, weights, args.tie_rule)
    except NoEquilibriumError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_EQUILIBRIUM
    s = outcome.selected
    print(f"cells: {payoffs.valid.size} (invalid {int((~payoffs.valid).sum())})")
    print(f"selected: bus={s.bus_price} amod={s.amod_price} bike={s.bike_price} payoff={s.payoff:.6g}")
    print(f"frontier points: {len(outcome.frontier)}")
    bad = fare_monotonicity_violations(payoffs)
    if bad:
        log.warning("average cost decreases with bus fare in %d places", len(bad))
    doc = selected_document(outcome)
    doc["scenario_sha256"] = source.sha256
    doc["fare_monotonicity_violations"] = [list(v[:3]) for v in bad]
    write_files_atomic(_out_dir(args.out), {
        "game_outcome.csv": csv_text(outcome_rows(outcome)),
        "frontier.csv": csv_text(frontier_rows(outcome)),
        "selected.json": json_text(doc),
    })
    return EXIT_OK


def cmd_sweep(args) -> int:
    if not 0 < args.fraction <= 1:
        raise InputError(f"--fraction must lie in (0, 1], got {args.fraction}")
    source = _load(args)
    if source.config is None:
        raise InputError(f"{args.scenario}: relocation needs a configuration scenario with fleets")
    try:
        configs, shared = relocation_configs(source.config, args.fraction, args.bus_fraction)
    except ValueError as exc:
        raise InputError(f"{args.scenario}: {exc}") from exc
    out = _out_dir(args.out)
    results = {}
    for name, cfg in zip(("uniform", "concentrated"), configs):
        sc = source.rebuild(cfg)
        rep = solve_equilibrium(sc, _options(args))
        print(f"{name}: {rep.status.value}")
        if rep.status is not Status.CONVERGED:
            return STATUS_EXIT[rep.status]
        metrics = compute_metrics(sc, rep.flows)
        results[name] = metrics
        sub = out / name
        sub.mkdir(exist_ok=True)
        write_results(rep, metrics, sub, _manifest(args, source, variant=name, fraction=args.fraction,
                                                   solver_options=_options(args).as_dict(), seed=args.seed))
    uni, con = results["uniform"], results["concentrated"]
    modes = list(uni.scenario.mode_names)
    rows = [["mode", "uniform_usd", "concentrated_usd", "delta_pct"]]
    for m, a, b in zip(modes, uni.revenue, con.revenue):
        delta = fmt(100.0 * (b - a) / a) if a > 0 else ""
        rows.append([m, fmt(a), fmt(b), delta])
        if m in shared:
            print(f"revenue {m}: {a:.2f} -> {b:.2f} ({'n/a' if not delta else f'{float(delta):+.2f}%'})")
    p_u, p_c = uni.histogram_percentile(95), con.histogram_percentile(95)
    print(f"p95 cost: uniform {p_u:.4f} concentrated {p_c:.4f}")
    summary = {
        "fraction": args.fraction,
        "bus_demand_fraction": args.bus_fraction,
        "relocated_modes": shared,
        "p95_cost_usd": {"uniform": p_u, "concentrated": p_c},
        "avg_cost_usd": {"uniform": uni.avg_cost_total, "concentrated": con.avg_cost_total},
    }
    write_files_atomic(out, {"revenue_delta.csv": csv_text(rows), "sweep_summary.json": json_text(summary)})
    return EXIT_OK


def cmd_validate(args) -> int:
    source = _load(args)
    sc = source.scenario
    print(f"valid: {args.scenario}")
    print(f"locations: {sc.n_locations} populations: {sc.n_populations} modes: {sc.n_modes}")
    print(f"total demand: {sc.demand.sum():.6g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mobility-game", description=__doc__.split("\n")[0],
                                epilog="exit codes: 0 ok, 1 input error, 2 iteration limit, "
                                       "3 infeasible, 4 not an equilibrium, 5 no Nash equilibrium")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=True, solve=True):
        sp.add_argument("--scenario", required=True, help="scenario JSON document")
        sp.add_argument("--seed", type=_seed, default=None, help="override the population-split seed")
        if out_required is not None:
            sp.add_argument("--out", required=out_required, help="output directory")
        if solve:
            sp.add_argument("--tol", type=_positive, default=1e-6, help="KKT residual tolerance")

    sp = sub.add_parser("solve", help="compute an equilibrium")
    common(sp)
    sp.add_argument("--reg", type=_nonneg, default=None, help="quadratic regularization weight")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("check", help="verify that a flows file is an equilibrium")
    common(sp, out_required=None, solve=False)
    sp.add_argument("--flows", required=True, help="flows.csv as written by solve")
    sp.add_argument("--tol-cost", type=_nonneg, default=1e-4)
    sp.add_argument("--tol-sat", type=_nonneg, default=1e-6)
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("oracle", help="enumerate grid equilibria of a tiny instance")
    common(sp, out_required=False, solve=False)
    sp.add_argument("--step", type=_positive, default=0.25)
    sp.add_argument("--tol-cost", type=_nonneg, default=1e-4)
    sp.add_argument("--tol-sat", type=_nonneg, default=1e-6)
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("game", help="play the stakeholder pricing game")
    common(sp)
    sp.add_argument("--grid", default=None, help="action grid JSON (default: built-in grid)")
    sp.add_argument("--rho-cost", type=_nonneg, default=1.0)
    sp.add_argument("--rho-co2", type=_nonneg, default=0.0)
    sp.add_argument("--rho-revenue", type=_nonneg, default=0.0)
    sp.add_argument("--tie-rule", choices=TIE_RULES, default="pessimistic")
    sp.set_defaults(func=cmd_game)

    sp = sub.add_parser("sweep", help="fleet relocation study")
    common(sp)
    sp.add_argument("--mode", choices=["relocation"], default="relocation")
    sp.add_argument("--fraction", type=float, default=0.66,
                    help="share of densest locations receiving the shared fleets")
    sp.add_argument("--bus-fraction", type=float, default=0.7,
                    help="share of departing demand the buses can serve")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("validate-scenario", help="check a scenario document")
    common(sp, out_required=None, solve=False)
    sp.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors, which would collide with IterationLimit
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
