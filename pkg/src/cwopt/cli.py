"""Command-line front end: scenarios, the three solve modes, metrics and sweeps.

Exit codes: 0 success, 2 infeasible, 3 configuration error,
4 time limit reached without any schedule.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import replace
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .bilevel import (
    BilevelError,
    MopsoConfig,
    best_document,
    optimize,
    write_archive_log,
    write_history,
    write_pareto,
)
from .emissions import pollution_index
from .metrics import BaselineRun, HprRun, RunTriple, SubsidyRun, metrics_document
from .model import (
    CODE_CLASS,
    FeeError,
    FlowSolution,
    assemble_hpr,
    assemble_m1,
    carrier_profit,
    government_cost,
    write_lp,
)
from .network import arc_census, build_network
from .scenario import (
    FleetKind,
    Scenario,
    ScenarioError,
    ScenarioParseError,
    chengdu_like,
    dump_scenario,
    generate_scenario,
    load_scenario,
)
from .solver import SolveConfig, UnboundedError, solve

EXIT_OK, EXIT_INFEASIBLE, EXIT_CONFIG, EXIT_NO_INCUMBENT = 0, 2, 3, 4


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; here 2 means infeasible."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        _emit_error("usage", message)
        raise SystemExit(EXIT_CONFIG)


def _emit_error(kind: str, message: str, **extra: Any) -> dict:
    doc = {"error": kind, "message": message, **extra}
    print(json.dumps(doc), file=sys.stderr)
    return doc


# -- helpers -----------------------------------------------------------------------

def _out_dir(args: argparse.Namespace, default_name: str) -> Path:
    if args.out:
        out = Path(args.out)
    else:
        out = Path(os.environ.get("CWOPT_OUT", "runs")) / default_name
    out.mkdir(parents=True, exist_ok=True)
    return out


def _solve_config(args: argparse.Namespace, log=None) -> SolveConfig:
    try:
        return SolveConfig(
            gap_target=args.gap,
            time_limit=args.time_limit,
            seed=args.seed,
            node_limit=args.node_limit,
            engine=args.engine,
            tie_samples=args.tie_samples,
            log_every=args.log_every if log else None,
            log=log,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _write_json(path: Path, doc: Any) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(row)


def _flat(prefix: str, doc: dict) -> dict:
    out = {}
    for k, v in doc.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flat(key + ".", v))
        else:
            out[key] = v
    return out


def _write_summary(out: Path, summary: dict) -> list[str]:
    _write_json(out / "summary.json", summary)
    flat = _flat("", summary)
    _write_csv(out / "summary.csv", ["field", "value"], ((k, flat[k]) for k in sorted(flat)))
    return ["summary.json", "summary.csv"]


def _write_flows(out: Path, sol: FlowSolution) -> str:
    sc = sol.layout.scenario
    typed = sol.layout.typed
    header = ["from_site", "to_site", "fleet", "depart", "arrive"] + (["waste_type"] if typed else []) + [
        "trucks", "class"]
    lay = sol.layout
    rows = []
    if sol.x is not None:
        for k in np.flatnonzero(sol.x):
            row = [sc.sites[lay.origin[k]].id, sc.sites[lay.dest[k]].id, sc.fleets[lay.fleet[k]].id,
                   int(lay.t[k]), int(lay.t[k] + lay.duration[k])]
            if typed:
                row.append(sc.waste_types[int(lay.wtype[k])])
            row += [int(sol.x[k]), CODE_CLASS[int(lay.arc_class[k])].value]
            rows.append(row)
    _write_csv(out / "flows.csv", header, rows)
    return "flows.csv"


def _write_progress(out: Path, history) -> str:
    _write_csv(out / "progress.csv", ["time", "incumbent", "bound", "gap", "nodes"],
               ([repr(t), repr(i), repr(b), repr(g), n] for t, i, b, g, n in history))
    return "progress.csv"


def _schedule_summary(sol: FlowSolution, sc: Scenario, fees) -> dict:
    legs = sol.tonnage_by_leg()
    return {
        "carrier_profit": carrier_profit(sol, sc, fees),
        "government_revenue": -government_cost(sol, sc, fees),
        "pollution_index": pollution_index(sol, sc).total,
        "pollution_terms": pollution_index(sol, sc).as_dict(),
        "dispatch_by_fleet": {str(k): v for k, v in sol.dispatch_by_fleet().items()},
        "tonnage_by_leg": legs,
        "tonnage_by_fleet": {str(k): v for k, v in sol.tonnage_by_fleet().items()},
        "total_cw": math.fsum(legs.values()),
    }


def _manifest(out: Path, command: str, argv: Sequence[str], sc: Scenario | None, scenario_path: str | None,
              config: dict, seed: int, wall: float, artifacts: list[str]) -> None:
    doc = {
        "command": command,
        "argv": list(argv),
        "scenario_path": str(Path(scenario_path).resolve()) if scenario_path else None,
        "scenario_hash": sc.content_hash if sc else None,
        "config": config,
        "seed": seed,
        "wall_time": wall,
        "artifacts": sorted(set(artifacts + ["manifest.json"])),
        "version": __version__,
    }
    _write_json(out / "manifest.json", doc)


def _load(args: argparse.Namespace) -> Scenario:
    try:
        return load_scenario(args.scenario)
    except (ScenarioParseError, ScenarioError, OSError) as exc:
        raise ConfigError(str(exc)) from exc


def _config_echo(args: argparse.Namespace) -> dict:
    skip = {"func", "out"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _fail_status(sol: FlowSolution, out: Path, artifacts: list[str]) -> int:
    if sol.status == "infeasible":
        doc = _emit_error("infeasible", "no schedule satisfies the constraints",
                          certificate=[[n, v] for n, v in sol.certificate])
        _write_json(out / "error.json", doc)
        artifacts.append("error.json")
        return EXIT_INFEASIBLE
    doc = _emit_error("time_limit", "time or node limit reached before any schedule was found")
    _write_json(out / "error.json", doc)
    artifacts.append("error.json")
    return EXIT_NO_INCUMBENT


# -- commands --------------------------------------------------------------------------

def cmd_generate(args: argparse.Namespace, argv: Sequence[str]) -> int:
    try:
        if args.preset == "chengdu":
            sc = chengdu_like(args.seed, horizon=args.horizon)
        else:
            counts = dict(zip("PSD", (int(v) for v in args.counts.split(","))))
            sc = generate_scenario(args.seed, counts, bbox_km=tuple(args.bbox), horizon=args.horizon,
                                   mean_t=args.mean_t, sd_t=args.sd_t)
    except (ValueError, ScenarioError) as exc:
        raise ConfigError(str(exc)) from exc
    path = Path(args.output)
    path.parent.mkdir(parents=True, exist_ok=True)
    dump_scenario(sc, path)
    for w in sc.feasibility_warnings():
        print(f"warning: {w}", file=sys.stderr)
    print(json.dumps({"scenario": str(path), "hash": sc.content_hash}))
    return EXIT_OK


def _solve_mode(args: argparse.Namespace, argv: Sequence[str], mode: str) -> int:
    t0 = time.perf_counter()
    sc = _load(args)
    out = _out_dir(args, f"{mode}-{sc.content_hash}-s{args.seed}")
    log = (lambda line: print(line, file=sys.stderr)) if args.log_every else None
    cfg = _solve_config(args, log)
    fee = sc.econ.market_fee if getattr(args, "fee", None) is None else args.fee
    inst = assemble_m1(sc, fee) if mode == "solve-carrier" else assemble_hpr(sc)
    artifacts: list[str] = []
    if args.dump_network:
        build_network(sc).write_csv(out / "network.csv", [s.id for s in sc.sites])
        artifacts.append("network.csv")
    if args.export_lp:
        write_lp(inst, out / "model.lp")
        artifacts.append("model.lp")
    sol, stats = solve(inst, cfg)
    artifacts.append(_write_progress(out, stats.history))
    if not sol.feasible:
        code = _fail_status(sol, out, artifacts)
        _manifest(out, mode, argv, sc, args.scenario, _config_echo(args), args.seed,
                  time.perf_counter() - t0, artifacts)
        return code
    summary = {
        "model": inst.tag,
        "scenario_hash": sc.content_hash,
        "status": sol.status,
        "objective": sol.objective_value,
        "best_bound": stats.best_bound,
        "gap": sol.gap,
        "nodes": stats.nodes_explored,
        "runtime_s": stats.wall_time,
        "fee": fee,
        "n_vars": inst.n_vars,
        "n_rows": inst.n_rows,
        "arc_census": arc_census(inst.layout.network),
        **_schedule_summary(sol, sc, fee),
    }
    artifacts += _write_summary(out, summary)
    artifacts.append(_write_flows(out, sol))
    _manifest(out, mode, argv, sc, args.scenario, _config_echo(args), args.seed, time.perf_counter() - t0, artifacts)
    print(json.dumps({"out": str(out), "status": sol.status, "objective": sol.objective_value}))
    return EXIT_OK


def cmd_solve_carrier(args, argv) -> int:
    return _solve_mode(args, argv, "solve-carrier")


def cmd_solve_hpr(args, argv) -> int:
    return _solve_mode(args, argv, "solve-hpr")


def _mopso_config(args: argparse.Namespace, jobs: int | None = None) -> MopsoConfig:
    try:
        return MopsoConfig(
            particles=args.particles,
            iterations=args.iterations,
            seed=args.seed,
            typed=args.typed,
            jobs=args.jobs if jobs is None else jobs,
            archive_size=args.archive_size,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def run_subsidy(sc: Scenario, mcfg: MopsoConfig, scfg: SolveConfig, out: Path) -> tuple[dict, list[str]]:
    """Baseline, high-point bound and swarm search on one scenario; writes all artifacts."""
    m1_inst = assemble_m1(sc)
    m1, _ = solve(m1_inst, scfg)
    # the high-point bound is only a bound when solved to optimality
    hpr, hpr_stats = solve(assemble_hpr(sc, typed=mcfg.typed), replace(scfg, gap_target=0.0))
    if not m1.feasible or not hpr.feasible:
        bad = m1 if not m1.feasible else hpr
        raise _Infeasible(bad)
    # the baseline schedule is feasible for the follower at any fee; the
    # greenest one is left out so a loose gap cannot favour it over a better reply
    archive, best, log = optimize(sc, mcfg, scfg, warm=(m1.x,))
    market = sc.econ.market_fee
    triple = RunTriple(
        BaselineRun(m1.objective_value, pollution_index(m1).total, government_cost(m1, sc, market), sc.content_hash),
        HprRun(pollution_index(hpr).total, sc.content_hash),
        SubsidyRun(-best.profit, best.f1, best.f2, sc.content_hash, tuple(best.fees.reshape(-1).tolist())),
    )
    artifacts = []
    write_pareto(archive, sc, out / "pareto.csv", mcfg.typed)
    write_history(log, out / "history.csv")
    write_archive_log(log, sc, out / "archive_log.csv", mcfg.typed)
    _write_json(out / "best.json", best_document(best, sc, mcfg.typed))
    metrics = metrics_document(triple)
    _write_json(out / "metrics.json", metrics)
    artifacts += ["pareto.csv", "history.csv", "archive_log.csv", "best.json", "metrics.json"]
    summary = {
        "model": "M5" if mcfg.typed else "M3",
        "scenario_hash": sc.content_hash,
        "F1": best.f1,
        "F2": best.f2,
        "government_revenue": -best.f2,
        "carrier_profit": best.profit,
        "archive_size": len(archive),
        "iterations": len(log.history),
        "evaluations": log.evaluations,
        "baseline": {"F1": triple.m1.f1, "F2": triple.m1.f2, "carrier_profit": triple.m1.profit},
        "hpr": {"F1": hpr.objective_value, "gap": hpr.gap, "best_bound": hpr_stats.best_bound},
        "ropr": metrics["ropr"],
        "gap_f1": metrics["gap_f1"],
        "esr": metrics["esr"],
        "dispatch_by_fleet": {str(k): v for k, v in best.solution.dispatch_by_fleet().items()},
        "tonnage_by_leg": best.solution.tonnage_by_leg(),
    }
    artifacts += _write_summary(out, summary)
    artifacts.append(_write_flows(out, best.solution))
    return summary, artifacts


class _Infeasible(Exception):
    def __init__(self, sol: FlowSolution):
        self.sol = sol


def cmd_optimize_subsidy(args, argv) -> int:
    t0 = time.perf_counter()
    sc = _load(args)
    if args.typed and len(sc.waste_types) < 2:
        raise ConfigError("--typed needs a scenario with waste_types ('empty' plus at least one type)")
    out = _out_dir(args, f"optimize-subsidy-{sc.content_hash}-s{args.seed}")
    scfg = _solve_config(args)
    mcfg = _mopso_config(args)
    artifacts: list[str] = []
    try:
        summary, artifacts = run_subsidy(sc, mcfg, scfg, out)
    except _Infeasible as exc:
        code = _fail_status(exc.sol, out, artifacts)
        _manifest(out, "optimize-subsidy", argv, sc, args.scenario, _config_echo(args), args.seed,
                  time.perf_counter() - t0, artifacts)
        return code
    except BilevelError as exc:
        doc = _emit_error("infeasible", str(exc), fees=exc.fees)
        _write_json(out / "error.json", doc)
        _manifest(out, "optimize-subsidy", argv, sc, args.scenario, _config_echo(args), args.seed,
                  time.perf_counter() - t0, artifacts + ["error.json"])
        return EXIT_INFEASIBLE
    _manifest(out, "optimize-subsidy", argv, sc, args.scenario, _config_echo(args), args.seed,
              time.perf_counter() - t0, artifacts)
    print(json.dumps({"out": str(out), "F1": summary["F1"], "F2": summary["F2"], "gap_f1": summary["gap_f1"]}))
    return EXIT_OK


def _sweep_values(args: argparse.Namespace) -> list[float]:
    if args.step <= 0:
        raise ConfigError("--step must be positive")
    if args.stop < args.start:
        raise ConfigError("empty sweep range: --stop is below --start")
    n = int(math.floor((args.stop - args.start) / args.step + 1e-9)) + 1
    values = [round(args.start + k * args.step, 10) for k in range(n)]
    if args.axis == "electric_count":
        if any(v != int(v) or v < 0 for v in values):
            raise ConfigError("electric_count values must be non-negative integers")
        return [int(v) for v in values]
    return values


def _sweep_point(job) -> dict:
    sc, axis, value, mcfg, scfg, sub = job
    row: dict[str, Any] = {"axis": axis, "value": value}
    try:
        if axis == "fee_bounds":
            point = sc.with_econ(fee_upper=value, fee_lower=value - 10.0)
        else:
            electric = [f for f in sc.fleets if f.kind is FleetKind.ELECTRIC]
            if not electric:
                raise ConfigError("scenario has no electric fleet")
            point = sc.with_fleet(electric[0].id, truck_count=int(value))
        sub.mkdir(parents=True, exist_ok=True)
        summary, _ = run_subsidy(point, mcfg, scfg, sub)
        row.update(status="ok", F1=summary["F1"], F2=summary["F2"],
                   government_revenue=summary["government_revenue"], carrier_profit=summary["carrier_profit"],
                   error="")
    except _Infeasible as exc:
        row.update(status="infeasible", error=exc.sol.status)
    except (BilevelError, ConfigError, ScenarioError, FeeError, ValueError) as exc:
        row.update(status="failed", error=str(exc).replace("\n", " "))
    return row


def cmd_sweep(args, argv) -> int:
    t0 = time.perf_counter()
    sc = _load(args)
    values = _sweep_values(args)
    out = _out_dir(args, f"sweep-{args.axis}-{sc.content_hash}-s{args.seed}")
    scfg = _solve_config(args)
    mcfg = _mopso_config(args, jobs=1)
    jobs = [(sc, args.axis, v, mcfg, scfg, out / f"point-{k:03d}") for k, v in enumerate(values)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(j) for j in jobs]
    cols = ["axis", "value", "status", "F1", "F2", "government_revenue", "carrier_profit", "error"]
    _write_csv(out / "sweep.csv", cols, ([r.get(c, "") for c in cols] for r in rows))
    artifacts = ["sweep.csv"] + [f"point-{k:03d}" for k in range(len(values))]
    _manifest(out, "sweep", argv, sc, args.scenario, _config_echo(args), args.seed, time.perf_counter() - t0,
              artifacts)
    print(json.dumps({"out": str(out), "points": len(rows), "failed": sum(r["status"] != "ok" for r in rows)}))
    return EXIT_OK


def cmd_replay(args, argv) -> int:
    """Re-run a command from its manifest; optionally compare primary artifacts."""
    src = Path(args.manifest)
    try:
        man = json.loads(src.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read manifest: {exc}") from exc
    old_argv = list(man["argv"])
    if man.get("scenario_path") and man.get("scenario_hash"):
        now = load_scenario(man["scenario_path"]).content_hash
        if now != man["scenario_hash"]:
            raise ConfigError(f"scenario changed since the run: hash {now} != {man['scenario_hash']}")
    if "--scenario" in old_argv and man.get("scenario_path"):
        old_argv[old_argv.index("--scenario") + 1] = man["scenario_path"]
    if "--out" in old_argv:
        k = old_argv.index("--out")
        del old_argv[k:k + 2]
    out = Path(args.out) if args.out else src.parent / "replay"
    code = main(old_argv + ["--out", str(out)])
    if not args.check or code != EXIT_OK:
        return code
    mismatches = []
    for name in ("best.json",):
        a, b = src.parent / name, out / name
        if a.exists() and a.read_bytes() != b.read_bytes():
            mismatches.append(name)
    for name in ("summary.json",):
        a, b = src.parent / name, out / name
        if a.exists():
            da, db = json.loads(a.read_text()), json.loads(b.read_text())
            for key in ("objective", "F1", "F2", "pollution_index"):
                if da.get(key) != db.get(key):
                    mismatches.append(f"{name}:{key}")
    print(json.dumps({"replay": str(out), "identical": not mismatches, "mismatches": mismatches}))
    return EXIT_OK if not mismatches else EXIT_CONFIG


# -- parser ------------------------------------------------------------------------------

def _add_solve_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gap", type=float, default=0.005, help="relative optimality gap target")
    p.add_argument("--time-limit", type=float, default=600.0, help="seconds per MILP solve")
    p.add_argument("--node-limit", type=int, default=None)
    p.add_argument("--engine", choices=["auto", "simplex", "highs"], default="auto", help="LP engine")
    p.add_argument("--tie-samples", type=int, default=0, help="probes for alternative optima")
    p.add_argument("--out", default=None, help="output directory (default: $CWOPT_OUT/<run>)")


def _add_mopso_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--particles", type=int, default=40)
    p.add_argument("--iterations", type=int, default=20)
    p.add_argument("--archive-size", type=int, default=200)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--typed", action="store_true", help="fees per waste type as well")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cwopt", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"cwopt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic scenario")
    g.add_argument("--preset", choices=["chengdu", "custom"], default="chengdu")
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--counts", default="3,17,10", help="P,S,D site counts (custom preset)")
    g.add_argument("--bbox", type=float, nargs=2, default=[20.0, 25.0], metavar=("X_KM", "Y_KM"))
    g.add_argument("--horizon", type=int, default=60)
    g.add_argument("--mean-t", type=float, default=900.0)
    g.add_argument("--sd-t", type=float, default=100.0)
    g.add_argument("--output", required=True)
    g.set_defaults(func=cmd_generate)

    for name, func, helptext in (
        ("solve-carrier", cmd_solve_carrier, "carrier schedule at the market fee"),
        ("solve-hpr", cmd_solve_hpr, "least-pollution schedule (high-point bound)"),
    ):
        p = sub.add_parser(name, help=helptext)
        _add_solve_flags(p)
        if name == "solve-carrier":
            p.add_argument("--fee", type=float, default=None, help="treatment fee (default: market fee)")
        p.add_argument("--dump-network", action="store_true", help="write the support graph as network.csv")
        p.add_argument("--export-lp", action="store_true", help="write the MILP as model.lp")
        p.add_argument("--log-every", type=float, default=None, help="seconds between progress lines")
        p.set_defaults(func=func)

    o = sub.add_parser("optimize-subsidy", help="fee design by swarm search")
    _add_solve_flags(o)
    _add_mopso_flags(o)
    o.set_defaults(func=cmd_optimize_subsidy)

    s = sub.add_parser("sweep", help="repeat optimize-subsidy over a parameter grid")
    _add_solve_flags(s)
    _add_mopso_flags(s)
    s.add_argument("--axis", choices=["fee_bounds", "electric_count"], required=True)
    s.add_argument("--start", type=float, required=True)
    s.add_argument("--stop", type=float, required=True)
    s.add_argument("--step", type=float, required=True)
    s.set_defaults(func=cmd_sweep)

    r = sub.add_parser("replay", help="re-run a command from its manifest.json")
    r.add_argument("manifest")
    r.add_argument("--out", default=None)
    r.add_argument("--check", action="store_true", help="compare primary artifacts with the original run")
    r.set_defaults(func=cmd_replay)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, argv)
    except ConfigError as exc:
        _emit_error("config", str(exc))
        return EXIT_CONFIG
    except (FeeError, ScenarioError) as exc:
        _emit_error("config", str(exc))
        return EXIT_CONFIG
    except UnboundedError as exc:
        _emit_error("unbounded", str(exc))
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
