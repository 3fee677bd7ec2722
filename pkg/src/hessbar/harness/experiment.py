"""Experiment configuration, single runs and benchmark suites."""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError, HessbarError, InsufficientData
from ..geometry import search_direction
from ..kernels import kernel_from_dict, metric_at
from ..problems import Problem
from ..solver import (
    SolveReport,
    SolverConfig,
    Termination,
    alpha_zero,
    bootstrap_step,
    check_start,
    constant_steps,
    default_kernels,
    hba_solve,
    mirror_descent_solve,
    resolve_config,
    sqrt_decay_steps,
)
from .io import build_problem, read_json, write_json, write_trace_csv
from .plotting import PlotKind, emit_plot
from .rates import FInfinityMethod, estimate_f_infinity, fit_rate, rate_compliance

THREADS_ENV = "HESSBAR_THREADS"


@dataclass(frozen=True)
class BaselineConfig:
    """Mirror-descent side run.

    ``alpha=None`` uses HBA's bootstrap step at the start point.
    """

    schedule: str = "constant"
    alpha: float | None = None

    def __post_init__(self):
        if self.schedule not in ("constant", "sqrt"):
            raise ConfigurationError(f"unknown MD schedule {self.schedule!r}")
        if self.alpha is not None and not self.alpha > 0:
            raise ConfigurationError("MD step must be positive")


@dataclass(frozen=True)
class ExperimentConfig:
    problem_spec: dict
    kernel_spec: dict | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    baseline: BaselineConfig | None = None
    seed: int = 0
    output_dir: str = "out"
    rate_fit: str | None = None
    plots: tuple[str, ...] = ()
    name: str = "experiment"

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")
        if self.rate_fit is not None:
            FInfinityMethod(self.rate_fit)
        for kind in self.plots:
            PlotKind(kind)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "problem": self.problem_spec,
            "kernel": self.kernel_spec,
            "solver": self.solver.to_dict(),
            "baseline": None if self.baseline is None else {"schedule": self.baseline.schedule, "alpha": self.baseline.alpha},
            "seed": self.seed,
            "output_dir": self.output_dir,
            "rate_fit": self.rate_fit,
            "plots": list(self.plots),
        }

    @classmethod
    def from_dict(cls, spec: dict) -> ExperimentConfig:
        try:
            baseline = spec.get("baseline")
            return cls(
                problem_spec=spec["problem"],
                kernel_spec=spec.get("kernel"),
                solver=SolverConfig.from_dict(spec.get("solver", {})),
                baseline=None if baseline is None else BaselineConfig(**baseline),
                seed=int(spec.get("seed", 0)),
                output_dir=str(spec.get("output_dir", "out")),
                rate_fit=spec.get("rate_fit"),
                plots=tuple(spec.get("plots", ())),
                name=str(spec.get("name", "experiment")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(f"invalid experiment config: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> ExperimentConfig:
        return cls.from_dict(read_json(path))


@dataclass
class ExperimentResult:
    summary: dict
    hba: SolveReport | None
    baseline: SolveReport | None
    files: dict[str, Path]

    @property
    def failed(self) -> bool:
        reports = [r for r in (self.hba, self.baseline) if r is not None]
        return self.hba is None or any(r.termination is Termination.NUMERICAL_FAILURE for r in reports)


def initial_bootstrap(problem: Problem, x0: np.ndarray, kernels, config: SolverConfig) -> float:
    """HBA's bootstrap step ``min{tau alpha0, 2 beta / L}`` at ``x0``."""
    config = resolve_config(problem, config)
    metric = metric_at(kernels, x0)
    geo = search_direction(problem.constraints, metric, problem.eval_grad(x0))
    a0 = alpha_zero(x0, geo.reduced_cost_r, kernels, metric.h_diag)
    return bootstrap_step(a0, config, kernels.beta)


def _report_summary(report: SolveReport, wall: float) -> dict:
    return {
        "final_f": report.final_f,
        "iterations": report.iterations,
        "termination": report.termination.value,
        "complementarity_residual": report.final_kkt[0],
        "dual_feasibility_violation": report.final_kkt[1],
        "invariant_violations": len(report.violations),
        "message": report.message,
        "wall_time_s": wall,
    }


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run HBA (and the MD baseline when configured) and write all artifacts."""
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    problem = build_problem(config.problem_spec, seed=config.seed)
    if problem.start is None:
        raise ConfigurationError("the problem provides no start point; add 'start' to the problem file")
    upper = problem.coordinate_upper_bound()
    kernel = kernel_from_dict(config.kernel_spec, upper) if config.kernel_spec else None
    kernels = default_kernels(problem, kernel)
    # an infeasible start is an input error, not a solver outcome
    x0 = check_start(problem, problem.start)
    wants_traj = PlotKind.TRAJECTORY_2D.value in config.plots
    solver_cfg = resolve_config(problem, replace(config.solver, record_iterates=config.solver.record_iterates or wants_traj))
    summary: dict = {
        "config": config.to_dict(),
        "problem": {"name": problem.name, "n": problem.dimension_n, "m": problem.constraints.m, "L": problem.lipschitz_l},
        "kernel": kernels.distinct[0].to_dict(),
        "f_start": problem.eval_f(x0),
    }
    files: dict[str, Path] = {}

    t0 = time.perf_counter()
    hba: SolveReport | None = None
    try:
        hba = hba_solve(problem, x0, kernels, solver_cfg)
        summary["hba"] = _report_summary(hba, time.perf_counter() - t0)
        files["hba_trace"] = write_trace_csv(out / "hba_trace.csv", hba.trace)
    except HessbarError as exc:
        summary["hba"] = {"error": type(exc).__name__, "message": str(exc)}

    md: SolveReport | None = None
    if config.baseline is not None and hba is not None:
        if not problem.constraints.covers_all:
            summary["baseline"] = {"error": "UnsupportedGeometry", "message": "constraints are not block-simplex"}
        else:
            alpha = config.baseline.alpha or initial_bootstrap(problem, x0, kernels, solver_cfg)
            steps = constant_steps(alpha) if config.baseline.schedule == "constant" else sqrt_decay_steps(alpha)
            t0 = time.perf_counter()
            md = mirror_descent_solve(problem, x0, steps, solver_cfg, kernels)
            summary["baseline"] = {**_report_summary(md, time.perf_counter() - t0), "alpha": alpha, "schedule": config.baseline.schedule}
            files["md_trace"] = write_trace_csv(out / "md_trace.csv", md.trace)

    f_star = problem.known_optimum[1] if problem.known_optimum is not None else None
    if hba is not None:
        f0 = summary["f_start"]
        if f_star is not None and f0 > f_star:
            summary["reduction_vs_start"] = (f0 - hba.final_f) / (f0 - f_star)
        if md is not None:
            denom = (f0 - f_star) if f_star is not None and f0 > f_star else md.final_f
            summary["relative_improvement_vs_md"] = (md.final_f - hba.final_f) / denom if denom else 0.0
        if problem.unlift is not None:
            summary["hba"]["final_x_original"] = problem.original_point(hba.final_x)

    if hba is not None and config.rate_fit is not None:
        try:
            f_inf = estimate_f_infinity(hba.trace, config.rate_fit, f_star)
            rate = fit_rate(hba.trace, f_inf, omega=kernels.omega)
            comp = rate_compliance(hba.trace, f_inf, rho=rate.rho_predicted)
            rate_doc = {**rate.to_dict(), "compliance": comp.to_dict()}
        except (InsufficientData, HessbarError, ValueError) as exc:
            rate_doc = {"error": type(exc).__name__, "message": str(exc)}
        files["rate"] = write_json(out / "rate.json", rate_doc)
        summary["rate"] = rate_doc

    if hba is not None:
        traces = [hba.trace] + ([md.trace] if md is not None else [])
        labels = ["HBA"] + (["MD"] if md is not None else [])
        f_ref = f_star if f_star is not None else estimate_f_infinity(
            [r for tr in traces for r in tr], FInfinityMethod.LONG_RUN_BEST
        )
        for kind in config.plots:
            path = out / f"{kind}.svg"
            if kind == PlotKind.TRAJECTORY_2D.value:
                trajs = [np.array([problem.original_point(x) for x in hba.iterates])]
                if md is not None and md.iterates is not None:
                    trajs.append(np.array([problem.original_point(x) for x in md.iterates]))
                files[kind] = emit_plot(path, None, kind, labels[: len(trajs)], trajectories=trajs, title=problem.name)
            else:
                files[kind] = emit_plot(path, traces, kind, labels, f_infinity=f_ref, title=problem.name)

    files["summary"] = write_json(out / "summary.json", summary)
    return ExperimentResult(summary, hba, md, files)


# ---------------------------------------------------------------------------
# suites

SUITES = ("rosenbrock", "beale", "qp", "tap")


def suite_configs(suite: str, seed: int, output_dir: str | Path) -> list[ExperimentConfig]:
    out = Path(output_dir)
    plots = (PlotKind.VALUE_VS_ITER.value, PlotKind.LOG_LOG_GAP.value)
    if suite in ("rosenbrock", "beale"):
        return [
            ExperimentConfig(
                problem_spec={"objective": {"type": suite}},
                solver=SolverConfig(max_iterations=100_000),
                baseline=BaselineConfig(),
                seed=seed,
                output_dir=str(out / suite),
                rate_fit=FInfinityMethod.KNOWN_OPTIMUM.value,
                plots=plots + (PlotKind.TRAJECTORY_2D.value,),
                name=suite,
            )
        ]
    if suite == "qp":
        return [
            ExperimentConfig(
                problem_spec={
                    "objective": {"type": "custom_qp", "generator": "nonconvex", "n": 20, "m": 5, "negative_eigs": 5, "seed": seed + i}
                },
                seed=seed + i,
                output_dir=str(out / f"qp_{i:02d}"),
                rate_fit=FInfinityMethod.LONG_RUN_BEST.value,
                plots=(PlotKind.LOG_LOG_GAP.value,),
                name=f"qp_{i:02d}",
            )
            for i in range(20)
        ]
    if suite == "tap":
        return [
            ExperimentConfig(
                problem_spec={"objective": {"type": "tap", "vertices": 50, "od_pairs": 100, "paths": 20, "seed": seed}},
                solver=SolverConfig(max_iterations=300),
                baseline=BaselineConfig(),
                seed=seed,
                output_dir=str(out / "tap"),
                plots=plots,
                name="tap",
            )
        ]
    raise ConfigurationError(f"unknown suite {suite!r}; expected one of {SUITES}")


def max_workers() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        value = int(raw)
    except ValueError as exc:
        raise ConfigurationError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from exc
    if value < 1:
        raise ConfigurationError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return value


def run_batch(configs: list[ExperimentConfig], workers: int | None = None) -> list[ExperimentResult]:
    """Run independent experiments, at most ``workers`` at a time (``HESSBAR_THREADS``)."""
    workers = max_workers() if workers is None else workers
    workers = max(1, min(workers, len(configs)))
    if workers == 1:
        return [run_experiment(c) for c in configs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_experiment, configs))


def summarize_suite(results: list[ExperimentResult]) -> dict:
    rows = []
    for res in results:
        row = {"name": res.summary["config"]["name"], "hba": res.summary.get("hba")}
        for key in ("baseline", "rate", "reduction_vs_start", "relative_improvement_vs_md"):
            if key in res.summary:
                row[key] = res.summary[key]
        rows.append(row)
    finals = [r.hba.final_f for r in results if r.hba is not None]
    return {"experiments": rows, "count": len(results), "max_final_f": max(finals) if finals else math.nan}
