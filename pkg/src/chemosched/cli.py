"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 infeasible model,
4 time limit reached without an incumbent, 1 anything else.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .analysis import METHODS, SWEEP_PARAMS, SweepSpec, compute_vss, run_method, run_sweep
from .core import validate_first_stage, validate_instance
from .evaluator import evaluate_expected
from .io import load_instance, load_solution, read_json, save_instance, save_report, save_solution, write_json
from .milp import Limits, SolveError, build_extensive_form, build_mean_value_problem
from .sampler import ClinicParams, SamplerSpec, instance_seeds, paper_set, sample_instance
from .sgbd import GROUPERS

log = logging.getLogger("chemosched")

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_TIMEOUT = 0, 1, 2, 3, 4


class ConfigError(ValueError):
    pass


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _clinic_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("clinic parameters (minutes)")
    g.add_argument("--nurses", type=int, default=2)
    g.add_argument("--chairs", type=int, default=3)
    g.add_argument("--premed", type=float, default=15.0)
    g.add_argument("--shift", type=float, default=240.0)
    g.add_argument("--overtime-limit", type=float, default=None, help="default: the shift length")
    g.add_argument("--lambda", dest="wait_weight", type=float, default=0.3)
    g.add_argument("--flex", type=int, default=2, help="max alternative-nurse assignments (J)")


def _sampler_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("instance sampling")
    g.add_argument("--paper-set", action="store_true", help="the ten published nine-patient type mixes")
    g.add_argument("--patients", type=int, default=9)
    g.add_argument("--types", type=_ints, default=None, help="comma-separated patient types 1..4")
    g.add_argument("--scenarios", type=int, default=48)
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--seed", type=int, default=0)


def _method_args(p: argparse.ArgumentParser, default: str = "f-sgbd") -> None:
    g = p.add_argument_group("solution method")
    g.add_argument("--method", choices=METHODS, default=default)
    g.add_argument("--group-size", type=int, default=8, help="Z for f/c/r-sgbd")
    g.add_argument("--alpha", type=int, default=2, help="merge factor for p-sgbd")
    g.add_argument("--iterations", type=int, default=4, help="T for p-sgbd")
    g.add_argument("--method-seed", type=int, default=0, help="seed for grouping anchors / random groups")
    g.add_argument("--time-limit", type=float, default=None, help="seconds for the whole solve")
    g.add_argument("--gap", type=float, default=0.0, help="relative MIP gap target")
    g.add_argument("--jobs", type=int, default=os.cpu_count() or 1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chemosched", description="Chemotherapy appointment scheduling under uncertainty.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", type=Path, help="JSON file of option defaults (keys are option names)")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="write seeded instance files")
    _sampler_args(p)
    _clinic_args(p)
    p.add_argument("--out", type=Path, default=Path("instances"))

    p = sub.add_parser("solve", help="solve one instance file")
    p.add_argument("instance", type=Path)
    _method_args(p)
    p.add_argument("--reference", type=Path, help="report of an exact solve; fills the gap field")
    p.add_argument("--mps", type=Path, help="also export the extensive form (or mean-value model) as MPS")
    p.add_argument("--out", type=Path, default=Path("run"))

    p = sub.add_parser("evaluate", help="price a fixed schedule on every scenario")
    p.add_argument("instance", type=Path)
    p.add_argument("solution", type=Path)
    p.add_argument("--out", type=Path, default=Path("run"))

    p = sub.add_parser("group", help="write the scenario grouping plan of f/c/r-sgbd")
    p.add_argument("instance", type=Path)
    p.add_argument("--method", choices=sorted(GROUPERS), default="f-sgbd")
    p.add_argument("--group-size", type=int, default=8)
    p.add_argument("--method-seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("run"))

    p = sub.add_parser("vss", help="value of the stochastic solution per instance")
    p.add_argument("instances", type=Path, nargs="*")
    _sampler_args(p)
    _clinic_args(p)
    _method_args(p, default="exact")
    p.add_argument("--out", type=Path, default=Path("run"))

    p = sub.add_parser("sweep", help="re-solve instances across values of one parameter")
    p.add_argument("instances", type=Path, nargs="*")
    p.add_argument("--param", choices=SWEEP_PARAMS, required=True)
    p.add_argument("--values", type=_floats, required=True)
    _sampler_args(p)
    _clinic_args(p)
    _method_args(p, default="exact")
    p.add_argument("--out", type=Path, default=Path("run"))
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", type=Path)
    known, _ = pre.parse_known_args(argv)
    if known.config is not None:
        try:
            config = read_json(known.config)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {known.config}: {exc}") from exc
        if not isinstance(config, dict):
            raise ConfigError("config must be a JSON object")
        defaults = {k.replace("-", "_"): v for k, v in config.items()}
        for action in parser._subparsers._group_actions:  # noqa: SLF001
            for subparser in action.choices.values():
                subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def _clinic(args) -> ClinicParams:
    return ClinicParams(
        n_nurses=args.nurses,
        n_chairs=args.chairs,
        premed_duration=args.premed,
        shift_length=args.shift,
        overtime_limit=args.overtime_limit,
        wait_weight=args.wait_weight,
        flex_limit=args.flex,
    )


def _sampled(args):
    base = _clinic(args)
    if args.paper_set:
        return paper_set(args.scenarios, args.seed, base)
    seeds = [args.seed] if args.count == 1 else instance_seeds(args.seed, args.count)
    types = tuple(args.types) if args.types else None
    return [
        sample_instance(SamplerSpec(patient_types=types, n_patients=args.patients, n_scenarios=args.scenarios, seed=s), base)
        for s in seeds
    ]


def _instances(args):
    if args.instances:
        return [load_instance(p) for p in args.instances]
    return _sampled(args)


def _limits(args) -> Limits:
    return Limits(args.time_limit, args.gap)


def _method_opts(args) -> dict:
    return {
        "group_size": args.group_size,
        "seed": args.method_seed,
        "alpha": args.alpha,
        "iterations": args.iterations,
        "jobs": args.jobs,
    }


def _plain(value):
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def _manifest(args, outputs) -> dict:
    skip = {"verbose", "jobs", "out", "config"}
    return {
        "tool": "chemosched",
        "version": __version__,
        "command": args.command,
        "args": {k: _plain(v) for k, v in sorted(vars(args).items()) if k not in skip},
        "outputs": sorted(str(Path(o).name) for o in outputs),
    }


def _check_instance(inst, where) -> None:
    problems = validate_instance(inst)
    if problems:
        raise ConfigError(f"{where}: invalid instance: " + "; ".join(problems))


def cmd_sample(args) -> int:
    if args.scenarios < 1 or args.count < 1:
        raise ConfigError("--scenarios and --count must be positive")
    insts = _sampled(args)
    outputs = []
    for k, inst in enumerate(insts, start=1):
        _check_instance(inst, f"instance {k}")
        outputs.append(save_instance(args.out / f"instance_{k:02d}.json", inst))
    write_json(args.out / "manifest.json", _manifest(args, outputs))
    print(f"wrote {len(outputs)} instance(s) to {args.out}")
    return EXIT_OK


def cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    _check_instance(inst, str(args.instance))
    if args.method in ("f-sgbd", "c-sgbd", "r-sgbd") and not 1 <= args.group_size:
        raise ConfigError("--group-size must be positive")
    if args.method == "p-sgbd" and (args.alpha < 2 or args.iterations < 1):
        raise ConfigError("p-sgbd needs --alpha >= 2 and --iterations >= 1")
    if args.mps is not None:
        model = build_mean_value_problem(inst) if args.method == "mvp" else build_extensive_form(inst)
        model.write_mps(args.mps)
    sol, report, plan = run_method(inst, args.method, limits=_limits(args), **_method_opts(args))
    if args.reference is not None:
        report.set_reference(read_json(args.reference)["objective"])
    outputs = [
        save_solution(args.out / "solution.json", sol),
        save_report(args.out / "report.json", report),
        write_json(args.out / "timing.json", {"wall_time": report.wall_time}),
    ]
    if plan is not None:
        outputs.append(write_json(args.out / "plan.json", plan.to_dict()))
    write_json(args.out / "manifest.json", _manifest(args, outputs))
    print(f"{args.method}: objective {report.objective:.4f} (wait {report.expected_wait:.2f}, overtime {report.expected_overtime:.2f})")
    if report.candidates:
        print("candidates: " + ", ".join("-" if c is None else f"{c:.4f}" for c in report.candidates))
    if report.gap_percent is not None:
        print(f"gap vs reference: {report.gap_percent:.3f}%")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    inst = load_instance(args.instance)
    sol = load_solution(args.solution)
    _check_instance(inst, str(args.instance))
    problems = validate_first_stage(inst, sol)
    if problems:
        raise ConfigError("invalid schedule: " + "; ".join(problems))
    report = evaluate_expected(inst, sol)
    outputs = [save_report(args.out / "report.json", report)]
    write_json(args.out / "manifest.json", _manifest(args, outputs))
    print(f"objective {report.objective:.4f} (wait {report.expected_wait:.2f}, overtime {report.expected_overtime:.2f})")
    return EXIT_OK


def cmd_group(args) -> int:
    inst = load_instance(args.instance)
    if not 1 <= args.group_size <= inst.n_scenarios:
        raise ConfigError(f"--group-size must be in 1..{inst.n_scenarios}")
    plan = GROUPERS[args.method](inst, args.group_size, args.method_seed)
    outputs = [write_json(args.out / "plan.json", plan.to_dict())]
    write_json(args.out / "manifest.json", _manifest(args, outputs))
    print(f"{plan.n_groups} groups of sizes {plan.sizes()}")
    return EXIT_OK


def _write_csv(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def cmd_vss(args) -> int:
    rows = []
    for k, inst in enumerate(_instances(args), start=1):
        _check_instance(inst, f"instance {k}")
        res = compute_vss(inst, args.method, _limits(args), **_method_opts(args))
        rows.append([k, repr(res.stochastic), repr(res.mean_value), repr(res.vss_percent), res.mean_value_feasible])
        print(f"instance {k}: z_T={res.stochastic:.4f} z_MVP={res.mean_value:.4f} VSS={res.vss_percent:.2f}%")
    out = _write_csv(args.out / "vss.csv", ["instance", "z_T", "z_MVP", "vss_percent", "mvp_feasible"], rows)
    write_json(args.out / "manifest.json", _manifest(args, [out]))
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec = SweepSpec(
        param=args.param,
        values=args.values,
        method=args.method,
        method_opts=_method_opts(args),
        limits=_limits(args),
    )
    bad = spec.problems()
    if bad:
        raise ConfigError("; ".join(bad))
    insts = _instances(args)
    for k, inst in enumerate(insts, start=1):
        _check_instance(inst, f"instance {k}")
    rows = run_sweep(spec, insts)
    table = [[_plain_value(r.value), repr(r.objective), repr(r.wait), repr(r.overtime), r.solved] for r in rows]
    out = _write_csv(args.out / "sweep.csv", [args.param, "objective", "wait", "overtime", "solved"], table)
    write_json(args.out / "manifest.json", _manifest(args, [out]))
    for r in rows:
        print(f"{args.param}={_plain_value(r.value)}: objective {r.objective:.4f} wait {r.wait:.2f} overtime {r.overtime:.2f} ({r.solved} solved)")
    return EXIT_OK


def _plain_value(v: float):
    return int(v) if float(v).is_integer() else v


COMMANDS = {
    "sample": cmd_sample,
    "solve": cmd_solve,
    "evaluate": cmd_evaluate,
    "group": cmd_group,
    "vss": cmd_vss,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # argparse usage errors
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TIMEOUT if exc.status == "time-limit" else EXIT_INFEASIBLE if exc.status == "infeasible" else EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
