"""Command-line interface.

Exit codes: 0 success, 2 solver numerical failure, 3 invalid configuration.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..errors import ConfigurationError, HessbarError, InfeasibleStart, InsufficientData, OptimumUnavailable, UnsupportedKind
from ..kernels import KERNEL_TYPES
from ..solver import SolverConfig
from ..tap import generate_tap_instance
from .experiment import SUITES, BaselineConfig, ExperimentConfig, run_batch, run_experiment, suite_configs, summarize_suite
from .io import dumps_json, read_json, read_trace_csv, write_json
from .plotting import PlotKind, emit_plot
from .rates import estimate_f_infinity, fit_rate, rate_compliance

EXIT_OK = 0
EXIT_NUMERICAL = 2
EXIT_CONFIG = 3


def parse_kernel(text: str | None) -> dict | None:
    """``gibbs``, ``tsallis:p=1.5,beta=0`` or a JSON object."""
    if text is None:
        return None
    text = text.strip()
    if text.startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"invalid kernel JSON: {exc}") from exc
    kind, _, rest = text.partition(":")
    if kind not in KERNEL_TYPES:
        raise ConfigurationError(f"unknown kernel {kind!r}; expected one of {KERNEL_TYPES}")
    spec: dict = {"type": kind, "beta": 0.0}
    for item in filter(None, rest.split(",")):
        key, eq, value = item.partition("=")
        if not eq:
            raise ConfigurationError(f"kernel option {item!r} is not key=value")
        try:
            spec[key.strip()] = float(value)
        except ValueError as exc:
            raise ConfigurationError(f"kernel option {item!r} is not numeric") from exc
    return spec


def _solver_config(args) -> SolverConfig:
    spec = read_json(args.solver_config) if getattr(args, "solver_config", None) else {}
    if getattr(args, "max_iterations", None) is not None:
        spec["max_iterations"] = args.max_iterations
    if getattr(args, "tol", None) is not None:
        spec["tol_complementarity"] = args.tol
    if getattr(args, "lipschitz", None) is not None:
        spec["lipschitz_l"] = args.lipschitz
    return SolverConfig.from_dict(spec)


def cmd_solve(args) -> int:
    problem_path = Path(args.problem)
    spec = read_json(problem_path)
    # relative TAP instance paths resolve against the problem file
    obj = spec.get("objective", {})
    if isinstance(obj.get("instance"), str) and not Path(obj["instance"]).is_absolute():
        obj["instance"] = str(problem_path.parent / obj["instance"])
    config = ExperimentConfig(
        problem_spec=spec,
        kernel_spec=parse_kernel(args.kernel),
        solver=_solver_config(args),
        baseline=BaselineConfig(schedule=args.md_schedule, alpha=args.md_alpha) if args.baseline else None,
        seed=args.seed,
        output_dir=args.out,
        rate_fit=args.rate_fit,
        plots=tuple(args.plot or ()),
        name=problem_path.stem,
    )
    result = run_experiment(config)
    print(dumps_json({k: result.summary[k] for k in ("problem", "hba", "baseline") if k in result.summary}), end="")
    return EXIT_NUMERICAL if result.failed else EXIT_OK


def cmd_tap_gen(args) -> int:
    instance, _ = generate_tap_instance(args.vertices, args.od_pairs, args.paths, args.seed, args.attachment)
    write_json(args.out, instance.to_dict())
    print(f"wrote {args.out}: {instance.num_pairs} O/D pairs, {instance.num_paths} paths, {instance.graph.num_edges} edges")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    out = Path(args.out or f"benchmark-{args.suite}")
    configs = suite_configs(args.suite, args.seed, out)
    results = run_batch(configs)
    summary = summarize_suite(results)
    write_json(out / "suite_summary.json", summary)
    for res in results:
        hba = res.summary.get("hba", {})
        print(f"{res.summary['config']['name']}: f={hba.get('final_f')!r} iters={hba.get('iterations')} {hba.get('termination', hba.get('error'))}")
    return EXIT_NUMERICAL if any(r.failed for r in results) else EXIT_OK


def cmd_rate_fit(args) -> int:
    trace = read_trace_csv(args.trace)
    if args.f_inf == "auto":
        f_inf = estimate_f_infinity(trace, "LongRunBest")
    else:
        try:
            f_inf = float(args.f_inf)
        except ValueError as exc:
            raise ConfigurationError("--f-inf must be 'auto' or a number") from exc
    report = fit_rate(trace, f_inf, args.tail, args.omega)
    doc = report.to_dict()
    doc["compliance"] = rate_compliance(trace, f_inf, report.rho_predicted, args.tail).to_dict()
    if args.out:
        write_json(args.out, doc)
    print(dumps_json(doc), end="")
    return EXIT_OK


def cmd_plot(args) -> int:
    traces = [read_trace_csv(p) for p in args.traces]
    labels = args.labels.split(",") if args.labels else [Path(p).stem for p in args.traces]
    if args.f_inf == "auto":
        f_inf = estimate_f_infinity([r for t in traces for r in t], "LongRunBest")
    else:
        f_inf = float(args.f_inf)
    if args.kind == PlotKind.TRAJECTORY_2D.value:
        raise UnsupportedKind("Trajectory2D needs iterates; use 'solve --plot Trajectory2D' on a 2-d problem")
    emit_plot(args.out, traces, args.kind, labels, f_infinity=f_inf)
    print(f"wrote {args.out}")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors (exit 3), not argparse's default 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hessbar", description="Hessian barrier algorithm experiments")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="solve a problem file with HBA")
    p.add_argument("problem")
    p.add_argument("--kernel", help="e.g. gibbs, tsallis:p=1.5, mixture:gamma=0.75,beta=0.1, or JSON")
    p.add_argument("--out", default="out")
    p.add_argument("--solver-config", help="JSON file with solver options")
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--tol", type=float, help="complementarity tolerance")
    p.add_argument("--lipschitz", type=float, help="override the problem's Lipschitz constant")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--baseline", action="store_true", help="also run entropic mirror descent")
    p.add_argument("--md-schedule", choices=("constant", "sqrt"), default="constant")
    p.add_argument("--md-alpha", type=float)
    p.add_argument("--rate-fit", choices=("KnownOptimum", "LongRunBest"))
    p.add_argument("--plot", action="append", choices=[k.value for k in PlotKind])
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("tap-gen", help="generate a traffic assignment instance")
    p.add_argument("--vertices", type=int, default=50)
    p.add_argument("--od-pairs", type=int, default=100)
    p.add_argument("--paths", type=int, default=20)
    p.add_argument("--attachment", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tap_gen)

    p = sub.add_parser("benchmark", help="run a benchmark suite")
    p.add_argument("--suite", choices=SUITES, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("rate-fit", help="fit the empirical rate of a trace")
    p.add_argument("trace")
    p.add_argument("--f-inf", default="auto")
    p.add_argument("--tail", type=float, default=0.5)
    p.add_argument("--omega", type=float, default=0.5, help="kernel steepness exponent")
    p.add_argument("--out")
    p.set_defaults(func=cmd_rate_fit)

    p = sub.add_parser("plot", help="plot one or more traces")
    p.add_argument("traces", nargs="+")
    p.add_argument("--kind", choices=[k.value for k in PlotKind], default=PlotKind.VALUE_VS_ITER.value)
    p.add_argument("--labels")
    p.add_argument("--f-inf", default="auto")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, InfeasibleStart, UnsupportedKind, OptimumUnavailable, InsufficientData, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HessbarError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
