"""Command-line driver.

Exit codes: 0 success, 1 a solve produced no usable result, 2 usage error.
Output goes to ``--out-dir``, else ``$VERTIPLAN_OUT``, else the current
directory.  A JSON ``--config`` file supplies defaults for any long flag
(dashes or underscores); explicit flags win.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .adaptive import SolverConfig, solve_exact
from .generate import GenConfig, GenerationError, generate
from .instance import Instance, InstanceError
from .linearize import build_conservative, initial_discretization
from .milp import write_lp
from .model import PlanSolution, check_nonlinear_feasibility

log = logging.getLogger("vertiplan")

OUT_ENV = "VERTIPLAN_OUT"
OK, SOLVE_FAILED, USAGE = 0, 1, 2

SOLVER_DEFAULTS = {"eps": 0.01, "time_limit": 7200.0, "solve_limit": 3600.0, "backend": "highs",
                   "min_gap": 0.01, "max_iterations": None}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("instances", nargs="+", help="instance JSON files")
    p.add_argument("--eps", type=float, help="target relative gap (default 0.01)")
    p.add_argument("--time-limit", type=float, help="wall-clock limit per instance, seconds")
    p.add_argument("--solve-limit", type=float, help="limit per MILP solve, seconds")
    p.add_argument("--backend", choices=("highs", "bnb"))
    p.add_argument("--min-gap", type=float, help="minimum breakpoint spacing")
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--jobs", type=int, help="parallel instances (default 1)")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vertiplan", description="Drone-courier hub network design.")
    p.add_argument("--config", help="JSON file with default option values")
    p.add_argument("--out-dir", help=f"output directory (default ${OUT_ENV} or .)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic instance")
    g.add_argument("--seed", type=int)
    g.add_argument("--od", type=int, help="number of O-D pairs")
    g.add_argument("--candidates", type=int)
    g.add_argument("--p", type=int, help="maximum number of vertiports")
    g.add_argument("--points", type=int, help="number of demand points")
    g.add_argument("--side", type=float, help="city side length, km")
    g.add_argument("--pooling", type=float, help="pooling size Q, kg")
    g.add_argument("--output", "-o", help="file name (default <name>.json in the output directory)")

    e = sub.add_parser("solve-exact", help="adaptive bound-and-refine solve")
    _solver_flags(e)
    e.add_argument("--export-lp", action="store_true", help="also write the first conservative model as LP")
    e.add_argument("--dump-cuts", action="store_true", help="write the final breakpoints and cut rows")

    m = sub.add_parser("solve-matheuristic", help="surrogate-guided heuristic for larger instances")
    _solver_flags(m)
    m.add_argument("--n-switch", type=int, help="minimum Hamming distance to the promising set")
    m.add_argument("--surrogate", choices=("coverage", "pmedian"))

    b = sub.add_parser("benchmark", help="compare delivery modes and the two-stage heuristic")
    _solver_flags(b)
    b.add_argument("--q", type=float, nargs="+", help="pooling sizes (default 1 2 4)")
    b.add_argument("--wage-ratio", type=float, help="courier wage over daily drone cost (default 4)")

    s = sub.add_parser("simulate", help="queue simulation: one M/M/1 config or a whole solution")
    s.add_argument("--rho", type=float)
    s.add_argument("--rate", type=float, help="arrivals per minute (default 1)")
    s.add_argument("--aprons", type=int)
    s.add_argument("--horizon", type=int, help="arrivals simulated (default 10^6)")
    s.add_argument("--seed", type=int)
    s.add_argument("--erlang", type=int, help="Erlang service with this many stages")
    s.add_argument("--instance", help="instance JSON, with --solution")
    s.add_argument("--solution", help="solution JSON to validate")

    r = sub.add_parser("report", help="aggregate trace and mode-comparison CSVs")
    r.add_argument("files", nargs="+")
    return p


def _load_config(path: Optional[str]) -> Dict[str, object]:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError("config file must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in data.items()}


def _opt(args, cfg: Dict[str, object], name: str, default=None):
    v = getattr(args, name, None)
    if v is not None:
        return v
    return cfg.get(name, default)


def _solver_config(args, cfg) -> SolverConfig:
    vals = {k: _opt(args, cfg, k, d) for k, d in SOLVER_DEFAULTS.items()}
    try:
        return SolverConfig(eps=float(vals["eps"]), time_limit_s=float(vals["time_limit"]),
                            solve_limit_s=float(vals["solve_limit"]), backend=str(vals["backend"]),
                            min_gap=float(vals["min_gap"]), max_iterations=vals["max_iterations"])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _load_instance(path: str) -> Instance:
    try:
        return Instance.load(path)
    except FileNotFoundError as exc:
        raise UsageError(f"no such instance file: {path}") from exc
    except (InstanceError, json.JSONDecodeError) as exc:
        raise UsageError(f"invalid instance {path}: {exc}") from exc


def _out_dir(args, cfg) -> Path:
    d = Path(_opt(args, cfg, "out_dir") or os.environ.get(OUT_ENV) or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _stem(inst: Instance, path: str) -> str:
    return inst.name or Path(path).stem


# ---------------------------------------------------------------------------
# per-instance jobs (module level so they pickle for --jobs)
# ---------------------------------------------------------------------------

def _job_exact(path: str, config: SolverConfig, out: str, export_lp: bool, dump_cuts: bool) -> dict:
    inst = Instance.load(path)
    stem = _stem(inst, path)
    out_p = Path(out)
    if export_lp:
        lm = build_conservative(inst, initial_discretization(inst, config.min_gap))
        write_lp(lm.milp, out_p / f"{stem}.conservative.lp")
    res = solve_exact(inst, config)
    res.trace.write_csv(out_p / f"{stem}.trace.csv")
    if dump_cuts:
        build_conservative(inst, res.discretization).dump_cuts(out_p / f"{stem}.cuts.json")
    return _finish(inst, stem, res.solution, res.status, res.trace.ub, res.trace.lb, out_p, "exact")


def _job_matheuristic(path: str, config: SolverConfig, out: str, n_switch: int, surrogate: str) -> dict:
    from .matheuristic import solve_matheuristic
    inst = Instance.load(path)
    stem = _stem(inst, path)
    res = solve_matheuristic(inst, config, n_switch, surrogate)
    res.trace.write_csv(Path(out) / f"{stem}.mh.trace.csv")
    return _finish(inst, stem, res.solution, res.status, res.trace.ub, None, Path(out), "matheuristic")


def _job_benchmark(path: str, config: SolverConfig, out: str, qs: List[float], wage_ratio: float) -> dict:
    from .benchmarks import compare_modes, two_stage_heuristic
    inst = Instance.load(path)
    stem = _stem(inst, path)
    cmp = compare_modes(inst, qs, config, wage_ratio)
    cmp.write_csv(Path(out) / f"{stem}.modes.csv")
    ts = two_stage_heuristic(inst, config)
    summary = {"status": ts.status, "stage1_objective": ts.stage1_objective,
               "objective": ts.solution.objective if ts.solution else None}
    (Path(out) / f"{stem}.two_stage.json").write_text(json.dumps(summary, indent=1), encoding="utf-8")
    failed = [r for r in cmp.rows if r.feasible is None]
    return {"instance": stem, "ok": not failed, "modes": len(cmp.rows), "failed_cells": len(failed),
            "two_stage": ts.status}


def _finish(inst: Instance, stem: str, sol: Optional[PlanSolution], status: str, ub: float, lb: Optional[float],
            out: Path, algorithm: str) -> dict:
    if sol is None:
        return {"instance": stem, "ok": False, "status": status}
    sol = replace(sol, meta={**sol.meta, "algorithm": algorithm})
    sol.save(out / f"{stem}.{'solution' if algorithm == 'exact' else 'mh.solution'}.json")
    feasible = check_nonlinear_feasibility(inst, sol).ok
    return {"instance": stem, "ok": feasible, "status": status, "ub": ub, "lb": lb, "certified": feasible}


def _run_jobs(fn, paths: Sequence[str], jobs: int, *extra) -> List[dict]:
    if jobs <= 1 or len(paths) <= 1:
        return [fn(p, *extra) for p in paths]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, paths, *[[e] * len(paths) for e in extra]))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_generate(args, cfg) -> int:
    base = GenConfig()
    kw = {}
    for flag, field_name in (("seed", "seed"), ("od", "n_od"), ("candidates", "n_candidates"),
                             ("p", "max_vertiports"), ("points", "n_points"), ("side", "side_km"),
                             ("pooling", "pooling_size")):
        v = _opt(args, cfg, flag)
        if v is not None:
            kw[field_name] = v
    gc = replace(base, **kw)
    try:
        inst = generate(gc)
    except GenerationError as exc:
        print(f"generation failed: {exc}", file=sys.stderr)
        return SOLVE_FAILED
    path = Path(args.output) if args.output else _out_dir(args, cfg) / f"{inst.name}.json"
    inst.save(path)
    print(path)
    return OK


def _paths(args) -> List[str]:
    for p in args.instances:
        if not Path(p).is_file():
            raise UsageError(f"no such instance file: {p}")
    return list(args.instances)


def _report(results: List[dict]) -> int:
    for r in results:
        print(json.dumps(r))
    return OK if all(r["ok"] for r in results) else SOLVE_FAILED


def _cmd_exact(args, cfg) -> int:
    config = _solver_config(args, cfg)
    out = str(_out_dir(args, cfg))
    jobs = int(_opt(args, cfg, "jobs", 1))
    return _report(_run_jobs(_job_exact, _paths(args), jobs, config, out,
                             bool(args.export_lp or cfg.get("export_lp")),
                             bool(args.dump_cuts or cfg.get("dump_cuts"))))


def _cmd_matheuristic(args, cfg) -> int:
    config = _solver_config(args, cfg)
    if args.solve_limit is None and "solve_limit" not in cfg:
        config = replace(config, solve_limit_s=500.0)
    out = str(_out_dir(args, cfg))
    jobs = int(_opt(args, cfg, "jobs", 1))
    return _report(_run_jobs(_job_matheuristic, _paths(args), jobs, config, out,
                             int(_opt(args, cfg, "n_switch", 2)), str(_opt(args, cfg, "surrogate", "coverage"))))


def _cmd_benchmark(args, cfg) -> int:
    config = _solver_config(args, cfg)
    out = str(_out_dir(args, cfg))
    jobs = int(_opt(args, cfg, "jobs", 1))
    qs = [float(q) for q in (_opt(args, cfg, "q") or [1, 2, 4])]
    return _report(_run_jobs(_job_benchmark, _paths(args), jobs, config, out, qs,
                             float(_opt(args, cfg, "wage_ratio", 4.0))))


def _cmd_simulate(args, cfg) -> int:
    from .queuesim import SimConfig, simulate_vertiport_queue, validate_solution_queues
    out = _out_dir(args, cfg)
    seed = int(_opt(args, cfg, "seed", 0))
    horizon = int(_opt(args, cfg, "horizon", 1_000_000))
    if args.instance or args.solution:
        if not (args.instance and args.solution):
            raise UsageError("--instance and --solution go together")
        inst = _load_instance(args.instance)
        try:
            sol = PlanSolution.load(args.solution)
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise UsageError(f"cannot read solution {args.solution}: {exc}") from exc
        rep = validate_solution_queues(inst, sol, horizon, seed)
        path = out / f"{Path(args.solution).name.split('.')[0]}.queues.json"
        path.write_text(rep.to_json(), encoding="utf-8")
        print(path)
        return OK if rep.within_fleet else SOLVE_FAILED
    rho = _opt(args, cfg, "rho")
    if rho is None:
        raise UsageError("simulate needs --rho, or --instance with --solution")
    erlang = _opt(args, cfg, "erlang")
    try:
        sc = SimConfig(float(_opt(args, cfg, "rate", 1.0)), float(rho), int(_opt(args, cfg, "aprons", 2)),
                       horizon, seed=seed, service="erlang" if erlang else "exponential",
                       erlang_stages=int(erlang or 1))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    rep = simulate_vertiport_queue(sc)
    path = out / f"mm1-rho{sc.rho:g}-s{seed}.json"
    path.write_text(rep.to_json(), encoding="utf-8")
    print(path)
    return OK


def _cmd_report(args, cfg) -> int:
    from .report import build_report
    for f in args.files:
        if not Path(f).is_file():
            raise UsageError(f"no such file: {f}")
    try:
        written = build_report(args.files, _out_dir(args, cfg))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    for p in written.values():
        print(p)
    return OK


COMMANDS = {"generate": _cmd_generate, "solve-exact": _cmd_exact, "solve-matheuristic": _cmd_matheuristic,
            "benchmark": _cmd_benchmark, "simulate": _cmd_simulate, "report": _cmd_report}


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError("missing subcommand")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = _load_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"vertiplan: error: {exc}", file=sys.stderr)
        return USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
