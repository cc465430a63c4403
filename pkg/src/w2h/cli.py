"""Command-line entry point: ``w2h <subcommand> [flags]``.

Exit codes: 0 success, 1 domain error (invalid case, infeasible problem, layout
mismatch), 2 usage error.  Logs go to standard error; the level comes from the
``W2H_LOG_LEVEL`` environment variable (default WARNING).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

from . import __version__
from .conic import CompiledProblem, SolverConfig, solve_micp_bnb, solve_socp
from .domain import CaseError, load_case, load_scenario
from .export import export_mps
from .learning import (METHODS, Dataset, DatasetError, LayoutError, TrainedModel,
                       config_digest, evaluate_accuracy, extract_features,
                       format_accuracy_table, generate_dataset, train)
from .model import InitialState, build_micp
from .reports import (Report, Table, comparison_summary, emissions_table, emit_report,
                      metrics_table, step_times_table, timing_table, trace_table)
from .scenarios import ScenarioSampler
from .simulator import (ACI_IVP, CONVENTIONAL, SimulationError, compare_methods,
                        compute_metrics, emissions_comparison, run_rolling_horizon)
from .surrogate import InfeasibleProblem, solve_with_repair

log = logging.getLogger("w2h")

DOMAIN_ERRORS = (CaseError, LayoutError, DatasetError, InfeasibleProblem, SimulationError)


class UsageError(ValueError):
    """Flags that parse but do not make sense together."""


# --- argument parsing ---------------------------------------------------------------


def _solver_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("solver")
    defaults = SolverConfig()
    g.add_argument("--feas-tol", type=float, default=defaults.feas_tol)
    g.add_argument("--act-tol", type=float, default=defaults.act_tol)
    g.add_argument("--mip-gap", type=float, default=defaults.mip_gap)
    g.add_argument("--node-limit", type=int, default=defaults.bnb_node_limit)
    g.add_argument("--time-limit", type=float, default=defaults.time_limit,
                   help="seconds per solve")


def _case_flags(p: argparse.ArgumentParser, scenario: bool = True) -> None:
    p.add_argument("--case", required=True, help="case JSON (path or bundled name)")
    if scenario:
        p.add_argument("--scenario", required=True, help="scenario CSV (path or bundled name)")
        p.add_argument("--horizon", type=int, help="lookahead steps (default: case horizon)")
        p.add_argument("--start", type=int, default=0, help="first scenario step")


def _out_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.add_argument("--tag", help="file-name timestamp (default: current UTC time)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="w2h", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"w2h {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a case file")
    _case_flags(p, scenario=False)

    p = sub.add_parser("solve", help="solve one lookahead window")
    _case_flags(p)
    p.add_argument("--method", choices=("micp", "relaxation", "aci-ivp"), default="micp")
    p.add_argument("--model", help="trained model (aci-ivp)")
    p.add_argument("--max-rounds", type=int, default=5)
    _solver_flags(p)
    _out_flags(p)

    p = sub.add_parser("gen-data", help="solve sampled windows offline into a dataset")
    _case_flags(p)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--start-range", type=int, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--data-out", required=True, help="dataset path stem")
    _solver_flags(p)

    p = sub.add_parser("train", help="fit a per-bit classifier")
    p.add_argument("--data", required=True, help="dataset JSON")
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="hyperparameter override, repeatable")
    p.add_argument("--model-out", required=True)

    p = sub.add_parser("evaluate", help="accuracy report on a held-out split")
    p.add_argument("--data", required=True)
    p.add_argument("--model", action="append", default=[],
                   help="trained model to score (repeatable); default trains all four")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    _out_flags(p)

    p = sub.add_parser("simulate", help="receding-horizon run")
    _case_flags(p)
    p.add_argument("--method", choices=(CONVENTIONAL, ACI_IVP), default=CONVENTIONAL)
    p.add_argument("--model")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--steps", type=int)
    g.add_argument("--hours", type=float)
    p.add_argument("--shrinking", action="store_true")
    _solver_flags(p)
    _out_flags(p)

    p = sub.add_parser("compare", help="conventional vs learned per-step times and cost")
    _case_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--steps", type=int, default=3)
    p.add_argument("--emissions", action="store_true",
                   help="also run the diesel-only / wind-only / full comparison")
    _solver_flags(p)
    _out_flags(p)

    p = sub.add_parser("export", help="write one window as free MPS with cone sections")
    _case_flags(p)
    p.add_argument("--mps-out", required=True)
    return parser


# --- helpers ------------------------------------------------------------------------


def _config(args) -> SolverConfig:
    return SolverConfig(feas_tol=args.feas_tol, act_tol=args.act_tol, mip_gap=args.mip_gap,
                        bnb_node_limit=args.node_limit, time_limit=args.time_limit)


def _load(args):
    case = load_case(args.case)
    scenario = load_scenario(args.scenario)
    horizon = args.horizon or case.horizon
    return case, scenario, horizon


def _resolved(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("out", "tag", "format")}


def _artifact(args, case_name: str, method: str, suffix: str) -> Path:
    tag = args.tag or time.strftime("%Y%m%dT%H%M%SZ", time.gmtime())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ext = "csv" if args.format == "csv" else "txt"
    return out / f"{case_name}_{method}_{tag}{suffix}.{ext}"


def _parse_param(text: str):
    key, sep, val = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    for cast in (int, float):
        try:
            return key, cast(val)
        except ValueError:
            pass
    return key, val


def _print(text: str) -> None:
    sys.stdout.write(text)
    sys.stdout.flush()


# --- commands -----------------------------------------------------------------------


def cmd_validate(args) -> int:
    try:
        case = load_case(args.case)
    except CaseError as exc:
        _print(f"{exc}\n")
        return 1
    _print(f"{case.name}: ok ({case.digest()})\n")
    return 0


def cmd_solve(args) -> int:
    case, scenario, horizon = _load(args)
    config = _config(args)
    window = scenario.window(args.start, horizon)
    problem = build_micp(case, window, None, horizon)
    notes = {"method": args.method}
    if args.method == "micp":
        sol = solve_micp_bnb(problem, config)
        notes.update(nodes=sol.nodes, gap=sol.gap)
    elif args.method == "relaxation":
        sol = solve_socp(problem.relaxed(), config)
    else:
        if not args.model:
            raise UsageError("--method aci-ivp needs --model")
        model = TrainedModel.load(args.model)
        phi = extract_features(case, window, InitialState.from_case(case), horizon,
                               start=args.start)
        out = solve_with_repair(problem, model, phi, config, args.max_rounds)
        sol = out.solution
        notes.update(rounds=out.rounds, flags="|".join(out.flags) or "-")
    if not sol.has_point:
        raise InfeasibleProblem(f"no solution: {sol.status}")
    res, cone = CompiledProblem(problem).residuals(sol.x)
    notes.update(status=sol.status, objective=sol.objective, max_residual=res,
                 max_cone_violation=cone, horizon=horizon, start=args.start)
    rows = [[str(v), float(x)] for v, x in zip(problem.variables, sol.x)]
    report = Report("solve", case.digest(), config_digest(_resolved(args)),
                    [Table("solution", ["variable", "value"], rows)], notes)
    path = emit_report(report, args.format, _artifact(args, case.name, args.method, ""))
    _print(f"{sol.status} objective {sol.objective:.6f} -> {path}\n")
    return 0


def cmd_gen_data(args) -> int:
    case, scenario, horizon = _load(args)
    sampler = ScenarioSampler(case, scenario, horizon,
                              starts=tuple(args.start_range) if args.start_range else None)
    data = generate_dataset(case, sampler, args.count, _config(args), seed=args.seed,
                            workers=args.workers)
    j, c = data.save(args.data_out)
    _print(f"{len(data)} samples -> {j}, {c}\n")
    return 0


def cmd_train(args) -> int:
    data = Dataset.load(args.data)
    hyper = dict(_parse_param(p) for p in args.param)
    model = train(args.method, data, **hyper)
    path = model.save(args.model_out)
    _print(f"{args.method} on {len(data)} samples -> {path}\n")
    return 0


def cmd_evaluate(args) -> int:
    data = Dataset.load(args.data)
    tr, te = data.split(args.test_fraction, args.seed)
    if args.model:
        models = [TrainedModel.load(m) for m in args.model]
    else:
        models = [train(m, tr) for m in METHODS]
    reports = [evaluate_accuracy(m, te) for m in models]
    table = format_accuracy_table(reports)
    rows = [[r.method, r.mean_bit, r.mean_bit_binary, r.mean_bit_active,
             r.summary()["exact_match"]] for r in reports]
    report = Report("evaluate", data.provenance.get("case_digest", "-"),
                    config_digest(_resolved(args)),
                    [Table("accuracy", ["method", "mean_bit", "binary_block", "active_block",
                                        "exact_match"], rows)],
                    {"n_train": len(tr), "n_test": len(te)})
    name = data.provenance.get("case", "data")
    path = emit_report(report, args.format, _artifact(args, name, "evaluate", ""))
    _print(table + f"-> {path}\n")
    return 0


def _model_for(args) -> TrainedModel | None:
    if getattr(args, "model", None):
        return TrainedModel.load(args.model)
    return None


def cmd_simulate(args) -> int:
    case, scenario, horizon = _load(args)
    model = _model_for(args)
    if args.method == ACI_IVP and model is None:
        raise UsageError("--method aci-ivp needs --model")
    steps = args.steps if args.steps is not None else (None if args.hours else len(scenario))
    trace = run_rolling_horizon(case, scenario, args.method, model, horizon, steps,
                                duration_hours=args.hours, config=_config(args),
                                start=args.start, shrinking=args.shrinking)
    m = compute_metrics(trace)
    digest = config_digest(_resolved(args))
    report = Report("simulate", case.digest(), digest,
                    [metrics_table("metrics", {args.method: m}), trace_table(trace)],
                    {"steps": len(trace), "horizon": horizon})
    path = emit_report(report, args.format, _artifact(args, case.name, args.method, ""))
    timing = Report("timing", case.digest(), digest, [step_times_table(trace)],
                    {"mean_time_s": m.mean_time, "max_time_s": m.max_time})
    tpath = emit_report(timing, args.format, _artifact(args, case.name, args.method, "_timing"))
    _print(f"{len(trace)} steps, cost {m.cost:.4f}, net {m.net_t:.6f} t -> {path}, {tpath}\n")
    return 0


def cmd_compare(args) -> int:
    case, scenario, horizon = _load(args)
    model = TrainedModel.load(args.model)
    config = _config(args)
    comp = compare_methods(case, scenario, model, horizon, args.steps, config, start=args.start)
    tables = [comparison_summary(comp), timing_table(case.name, comp)]
    if args.emissions:
        tables.append(emissions_table(emissions_comparison(case, scenario, horizon, args.steps,
                                                           config, start=args.start)))
    report = Report("compare", case.digest(), config_digest(_resolved(args)), tables,
                    {"speedup": comp.speedup, "gap": comp.gap, "steps": args.steps})
    path = emit_report(report, args.format, _artifact(args, case.name, "compare", ""))
    _print(f"speedup {comp.speedup:.2f}, gap {comp.gap:.6f} -> {path}\n")
    return 0


def cmd_export(args) -> int:
    case, scenario, horizon = _load(args)
    problem = build_micp(case, scenario.window(args.start, horizon), None, horizon)
    path = export_mps(problem, args.mps_out, name=case.name)
    _print(f"{problem.summary()} -> {path}\n")
    return 0


COMMANDS = {"validate": cmd_validate, "solve": cmd_solve, "gen-data": cmd_gen_data,
            "train": cmd_train, "evaluate": cmd_evaluate, "simulate": cmd_simulate,
            "compare": cmd_compare, "export": cmd_export}


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("W2H_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, argparse.ArgumentTypeError) as exc:
        log.error("%s", exc)
        return 2
    except (*DOMAIN_ERRORS, OSError, ValueError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
