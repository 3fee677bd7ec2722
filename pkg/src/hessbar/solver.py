"""Hessian barrier iteration with Armijo backtracking, plus an entropic
mirror-descent baseline for block-simplex feasible sets.

One iteration of :func:`hba_solve`:

1. ``v = -P(x) H(x)^-1 grad f(x)`` via :func:`geometry.search_direction`;
2. ``alpha_0 = min{x_i theta_i''(x_i) / r_i : r_i > 0}``;
3. bootstrap ``min{tau alpha_0, 2 beta / L}``;
4. shrink by ``delta`` until ``f(x + a v) - f(x) <= -mu a ||v||_x^2``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import (
    ArmijoExhausted,
    ConfigurationError,
    InfeasibleStart,
    InteriorityError,
    SingularMetricSystem,
    StructuralMismatch,
    UnsupportedGeometry,
)
from .geometry import (
    GeometryResult,
    angle_identity_defect,
    dual_feasibility_violation,
    kkt_residual,
    search_direction,
)
from .kernels import Kernel, KernelMap, as_kernel_map, make_gibbs, metric_at
from .problems import Problem


ANGLE_RTOL = 1e-8
EPS = float(np.finfo(float).eps)


@dataclass(frozen=True)
class ArmijoParams:
    mu: float = 1e-4
    delta: float = 0.5
    max_backtracks: int = 60

    def __post_init__(self):
        if not 0 < self.mu < 1:
            raise ConfigurationError(f"mu must lie in (0, 1), got {self.mu}")
        if not 0 < self.delta < 1:
            raise ConfigurationError(f"delta must lie in (0, 1), got {self.delta}")
        if self.max_backtracks < 1:
            raise ConfigurationError("max_backtracks must be positive")


@dataclass(frozen=True)
class SolverConfig:
    """Solver parameters.

    ``lipschitz_l=None`` takes the constant from the problem.  A zero constant
    (affine objective) makes the curvature bound ``2 beta / L`` infinite.
    """

    armijo: ArmijoParams = field(default_factory=ArmijoParams)
    lipschitz_l: float | None = None
    boundary_safety_tau: float = 0.99
    tol_complementarity: float = 1e-8
    tol_direction: float = 0.0
    max_iterations: int = 10**6
    record_iterates: bool = False
    audit: bool = True

    def __post_init__(self):
        if not 0 < self.boundary_safety_tau < 1:
            raise ConfigurationError("boundary_safety_tau must lie in (0, 1)")
        if self.lipschitz_l is not None and self.lipschitz_l < 0:
            raise ConfigurationError("lipschitz_l must be nonnegative")
        if self.tol_complementarity < 0 or self.tol_direction < 0:
            raise ConfigurationError("tolerances must be nonnegative")
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be positive")

    def to_dict(self) -> dict:
        return {
            "mu": self.armijo.mu,
            "delta": self.armijo.delta,
            "max_backtracks": self.armijo.max_backtracks,
            "lipschitz_l": self.lipschitz_l,
            "boundary_safety_tau": self.boundary_safety_tau,
            "tol_complementarity": self.tol_complementarity,
            "tol_direction": self.tol_direction,
            "max_iterations": self.max_iterations,
        }

    @classmethod
    def from_dict(cls, spec: dict) -> SolverConfig:
        spec = dict(spec)
        armijo = ArmijoParams(
            mu=float(spec.pop("mu", 1e-4)),
            delta=float(spec.pop("delta", 0.5)),
            max_backtracks=int(spec.pop("max_backtracks", 60)),
        )
        known = {"lipschitz_l", "boundary_safety_tau", "tol_complementarity", "tol_direction", "max_iterations",
                 "record_iterates", "audit"}
        unknown = set(spec) - known
        if unknown:
            raise ConfigurationError(f"unknown solver options: {sorted(unknown)}")
        if "max_iterations" in spec:
            spec["max_iterations"] = int(spec["max_iterations"])
        return cls(armijo=armijo, **spec)


@dataclass(frozen=True, slots=True)
class IterationRecord:
    """State at iterate ``k`` and the step taken from it.

    The record of the final iterate carries ``step_alpha = 0`` and
    ``backtracks = 0`` since no step is taken from it.
    """

    k: int
    f_value: float
    step_alpha: float
    backtracks: int
    complementarity_residual: float
    v_norm_x: float


class Termination(str, enum.Enum):
    TOLERANCE_MET = "ToleranceMet"
    MAX_ITERATIONS = "MaxIterations"
    STATIONARY_START = "StationaryStart"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass
class SolveReport:
    final_x: np.ndarray
    trace: list[IterationRecord]
    termination: Termination
    final_kkt: tuple[float, float]
    iterates: list[np.ndarray] | None = None
    violations: list[str] = field(default_factory=list)
    message: str = ""
    solver: str = "hba"

    @property
    def iterations(self) -> int:
        return len(self.trace) - 1

    @property
    def final_f(self) -> float:
        return self.trace[-1].f_value


def alpha_zero(x: np.ndarray, r: np.ndarray, kernels, h_diag: np.ndarray | None = None) -> float:
    """Largest step keeping ``x + a v`` positive: ``min{x_i theta_i''(x_i)/r_i : r_i > 0}``."""
    pos = r > 0
    if not np.any(pos):
        return math.inf
    if h_diag is None:
        h_diag = as_kernel_map(kernels, x.size).theta_second(x)
    return float(np.min(x[pos] * h_diag[pos] / r[pos]))


def bootstrap_step(alpha0: float, config: SolverConfig, kernel_beta: float) -> float:
    """Initial Armijo trial ``min{tau alpha0, 2 beta / L}``."""
    if kernel_beta <= 0:
        raise ConfigurationError("kernel beta must be positive over the working range")
    if not alpha0 > 0:
        raise ValueError(f"alpha0 must be positive, got {alpha0}")
    lip = config.lipschitz_l
    if lip is None:
        raise ConfigurationError("bootstrap_step needs a resolved Lipschitz constant")
    curvature = math.inf if lip == 0 else 2.0 * kernel_beta / lip
    step = min(config.boundary_safety_tau * alpha0, curvature)
    if not math.isfinite(step):
        raise ArmijoExhausted("unbounded descent ray: alpha0 and 2 beta / L are both infinite")
    return step


def armijo_search(
    problem: Problem,
    x: np.ndarray,
    geo: GeometryResult,
    alpha_start: float,
    params: ArmijoParams,
    f_x: float | None = None,
) -> tuple[float, np.ndarray, float, int]:
    """Backtrack from ``alpha_start`` until sufficient decrease holds."""
    if f_x is None:
        f_x = problem.eval_f(x)
    v = geo.direction_v
    vnorm_sq = geo.v_norm_x_sq
    alpha = alpha_start
    for ell in range(params.max_backtracks + 1):
        x_new = x + alpha * v
        # a trial on or beyond the boundary counts as a failed test
        if np.all(x_new > 0):
            f_new = problem.eval_f(x_new)
            if f_new - f_x <= -params.mu * alpha * vnorm_sq:
                return alpha, x_new, f_new, ell
        alpha *= params.delta
    predicted = params.mu * alpha_start * vnorm_sq
    # below a few ulps of f the test cannot be decided in floating point
    floor_note = "; predicted decrease is below the rounding level of f" if predicted <= 4 * EPS * max(1.0, abs(f_x)) else ""
    raise ArmijoExhausted(
        f"no sufficient decrease after {params.max_backtracks} backtracks "
        f"(alpha_start={alpha_start:.3e}, ||v||_x^2={vnorm_sq:.3e}){floor_note}"
    )


def resolve_config(problem: Problem, config: SolverConfig | None) -> SolverConfig:
    config = config or SolverConfig()
    if config.lipschitz_l is None:
        config = replace(config, lipschitz_l=problem.lipschitz_l)
    return config


def default_kernels(problem: Problem, kernel: Kernel | None = None) -> KernelMap:
    """Replicate ``kernel`` (Gibbs by default) with the working range set by the problem."""
    from .kernels import with_working_range

    upper = problem.coordinate_upper_bound()
    kernel = make_gibbs(0.0, upper) if kernel is None else with_working_range(kernel, upper)
    return KernelMap.uniform(kernel, problem.dimension_n)


def _resolve_kernels(problem: Problem, kernels) -> KernelMap:
    if kernels is None or isinstance(kernels, Kernel):
        return default_kernels(problem, kernels)
    return as_kernel_map(kernels, problem.dimension_n)


def check_start(problem: Problem, x0: np.ndarray) -> np.ndarray:
    x0 = np.array(x0, dtype=float)
    cs = problem.constraints
    if x0.shape != (problem.dimension_n,):
        raise InfeasibleStart(f"start has shape {x0.shape}, expected ({problem.dimension_n},)")
    if not np.all(x0 > 0):
        raise InfeasibleStart("start point is not strictly positive")
    if cs.residual(x0) > cs.feasibility_tolerance():
        raise InfeasibleStart(f"||A x0 - b||_inf = {cs.residual(x0):.3e} exceeds tolerance")
    if not math.isfinite(problem.eval_f(x0)):
        raise InfeasibleStart("f(x0) is not finite")
    return x0


def _converged(comp: float, dviol: float, vnorm: float, config: SolverConfig) -> bool:
    tol = config.tol_complementarity
    if comp <= tol and dviol <= math.sqrt(tol):
        return True
    return vnorm <= config.tol_direction


class _Auditor:
    """Per-step checks of the invariants every HBA run must satisfy."""

    def __init__(self, problem: Problem, config: SolverConfig, beta: float, enabled: bool):
        self.enabled = enabled
        self.problem = problem
        self.config = config
        self.beta = beta
        self.violations: list[str] = []
        lip = config.lipschitz_l
        a = config.armijo
        self.floor_curv = math.inf if lip == 0 else 2.0 * (1.0 - a.mu) * beta * a.delta / lip
        self.feas_tol = problem.constraints.feasibility_tolerance()

    def step(self, k, metric, g, geo, abar, alpha, f_old, f_new, x_new):
        if not self.enabled:
            return
        vv = geo.v_norm_x_sq
        defect, scale = angle_identity_defect(self.problem.constraints, metric, g, geo)
        if defect > ANGLE_RTOL * scale:
            self.violations.append(f"k={k}: angle identity off by {defect:.3e} (scale {scale:.3e})")
        if not f_new <= f_old - self.config.armijo.mu * alpha * vv:
            self.violations.append(f"k={k}: sufficient decrease failed")
        if not np.all(x_new > 0):
            self.violations.append(f"k={k}: iterate left the open orthant")
        res = self.problem.constraints.residual(x_new)
        if res > self.feas_tol:
            self.violations.append(f"k={k}: ||A x - b|| = {res:.3e}")
        floor = min(self.floor_curv, abar)
        if alpha < floor * (1.0 - 1e-12):
            self.violations.append(f"k={k}: step {alpha:.6e} below floor {floor:.6e}")


def hba_step(problem: Problem, x: np.ndarray, kmap: KernelMap, config: SolverConfig, f_x: float | None = None):
    """One HBA update; returns ``(x_new, f_new, alpha, backtracks, geo, alpha_bar)``."""
    g = problem.eval_grad(x)
    metric = metric_at(kmap, x)
    geo = search_direction(problem.constraints, metric, g)
    a0 = alpha_zero(x, geo.reduced_cost_r, kmap, metric.h_diag)
    abar = bootstrap_step(a0, config, kmap.beta)
    alpha, x_new, f_new, ell = armijo_search(problem, x, geo, abar, config.armijo, f_x)
    return x_new, f_new, alpha, ell, geo, abar


def hba_solve(
    problem: Problem,
    x0: np.ndarray | None = None,
    kernels: Kernel | KernelMap | Sequence[Kernel] | None = None,
    config: SolverConfig | None = None,
    callback: Callable[[int, np.ndarray], None] | None = None,
) -> SolveReport:
    """Run the Hessian barrier algorithm from a strictly feasible ``x0``."""
    config = resolve_config(problem, config)
    if x0 is None:
        if problem.start is None:
            raise InfeasibleStart("no start point given and the problem provides none")
        x0 = problem.start
    x = check_start(problem, x0)
    kmap = _resolve_kernels(problem, kernels)
    cs = problem.constraints
    auditor = _Auditor(problem, config, kmap.beta, config.audit)
    trace: list[IterationRecord] = []
    iterates = [x.copy()] if config.record_iterates else None
    f = problem.eval_f(x)
    termination = Termination.MAX_ITERATIONS
    message = ""
    comp = dviol = math.nan
    for k in range(config.max_iterations + 1):
        try:
            g = problem.eval_grad(x)
            metric = metric_at(kmap, x)
            geo = search_direction(cs, metric, g)
        except (SingularMetricSystem, InteriorityError) as exc:
            termination, message = Termination.NUMERICAL_FAILURE, str(exc)
            trace.append(IterationRecord(k, f, 0.0, 0, math.nan, math.nan))
            break
        comp = kkt_residual(x, geo)
        dviol = dual_feasibility_violation(geo)
        vnorm = math.sqrt(geo.v_norm_x_sq)
        if geo.v_norm_x_sq == 0.0 or _converged(comp, dviol, vnorm, config):
            termination = Termination.STATIONARY_START if k == 0 else Termination.TOLERANCE_MET
            trace.append(IterationRecord(k, f, 0.0, 0, comp, vnorm))
            break
        if k == config.max_iterations:
            trace.append(IterationRecord(k, f, 0.0, 0, comp, vnorm))
            break
        try:
            a0 = alpha_zero(x, geo.reduced_cost_r, kmap, metric.h_diag)
            abar = bootstrap_step(a0, config, kmap.beta)
            alpha, x_new, f_new, ell = armijo_search(problem, x, geo, abar, config.armijo, f)
        except ArmijoExhausted as exc:
            termination, message = Termination.NUMERICAL_FAILURE, str(exc)
            trace.append(IterationRecord(k, f, 0.0, 0, comp, vnorm))
            break
        auditor.step(k, metric, g, geo, abar, alpha, f, f_new, x_new)
        trace.append(IterationRecord(k, f, alpha, ell, comp, vnorm))
        x, f = x_new, f_new
        if iterates is not None:
            iterates.append(x.copy())
        if callback is not None:
            callback(k + 1, x)
    return SolveReport(
        final_x=x,
        trace=trace,
        termination=termination,
        final_kkt=(comp, dviol),
        iterates=iterates,
        violations=auditor.violations,
        message=message,
        solver="hba",
    )


# ---------------------------------------------------------------------------
# mirror descent baseline


def constant_steps(alpha: float) -> Callable[[int], float]:
    return lambda k: alpha


def sqrt_decay_steps(alpha: float) -> Callable[[int], float]:
    """``alpha / sqrt(k + 1)`` for iteration ``k = 0, 1, ...``."""
    return lambda k: alpha / math.sqrt(k + 1)


def _as_step_fn(step_sequence) -> Callable[[int], float]:
    if callable(step_sequence):
        return step_sequence
    if np.isscalar(step_sequence):
        return constant_steps(float(step_sequence))
    seq = list(step_sequence)
    return lambda k: float(seq[min(k, len(seq) - 1)])


def mirror_descent_update(x: np.ndarray, grad: np.ndarray, alpha: float, labels: np.ndarray, demands: np.ndarray) -> np.ndarray:
    """Entropic prox step, block by block: ``x_i <- x_i exp(-alpha g_i)`` renormalized to the block demand."""
    z = np.log(x) - alpha * grad
    nblocks = demands.size
    zmax = np.full(nblocks, -np.inf)
    np.maximum.at(zmax, labels, z)
    w = np.exp(z - zmax[labels])
    sums = np.bincount(labels, weights=w, minlength=nblocks)
    out = w * (demands / sums)[labels]
    # underflow to an exact zero would leave the open orthant
    return np.maximum(out, np.finfo(float).tiny)


def mirror_descent_solve(
    problem: Problem,
    x0: np.ndarray | None,
    step_sequence,
    config: SolverConfig | None = None,
    kernels: Kernel | KernelMap | None = None,
) -> SolveReport:
    """Entropic mirror descent on a block-simplex feasible region.

    Trace columns mirror :func:`hba_solve`: ``v_norm_x`` and the
    complementarity residual are computed from the HBA geometry at each
    iterate (entropy metric unless ``kernels`` is given) for diagnostics.
    """
    cs = problem.constraints
    if not cs.covers_all:
        raise UnsupportedGeometry("mirror descent needs disjoint block-simplex constraints covering every coordinate")
    config = resolve_config(problem, config)
    x = check_start(problem, problem.start if x0 is None else x0)
    kmap = _resolve_kernels(problem, kernels)
    steps = _as_step_fn(step_sequence)
    labels = cs.block_labels
    demands = np.asarray(cs.b_vector, dtype=float)
    trace: list[IterationRecord] = []
    iterates = [x.copy()] if config.record_iterates else None
    f = problem.eval_f(x)
    termination = Termination.MAX_ITERATIONS
    comp = dviol = math.nan
    for k in range(config.max_iterations + 1):
        g = problem.eval_grad(x)
        geo = search_direction(cs, metric_at(kmap, x), g)
        comp = kkt_residual(x, geo)
        dviol = dual_feasibility_violation(geo)
        vnorm = math.sqrt(geo.v_norm_x_sq)
        if geo.v_norm_x_sq == 0.0 or _converged(comp, dviol, vnorm, config):
            termination = Termination.STATIONARY_START if k == 0 else Termination.TOLERANCE_MET
            trace.append(IterationRecord(k, f, 0.0, 0, comp, vnorm))
            break
        if k == config.max_iterations:
            trace.append(IterationRecord(k, f, 0.0, 0, comp, vnorm))
            break
        alpha = steps(k)
        trace.append(IterationRecord(k, f, alpha, 0, comp, vnorm))
        x = mirror_descent_update(x, g, alpha, labels, demands)
        f = problem.eval_f(x)
        if iterates is not None:
            iterates.append(x.copy())
    return SolveReport(
        final_x=x,
        trace=trace,
        termination=termination,
        final_kkt=(comp, dviol),
        iterates=iterates,
        solver="md",
    )


# ---------------------------------------------------------------------------
# closed-form special cases


class SpecialCase(str, enum.Enum):
    LV = "LV"
    RD = "RD"
    AS = "AS"
    RN = "RN"


def quadratic_kernel(curvature: float, slope: float) -> Kernel:
    """``theta(t) = curvature/2 t^2 + slope t``; not steep, used only for the RN identity."""
    return Kernel(
        name="quadratic",
        theta=lambda t: 0.5 * curvature * np.asarray(t) ** 2 + slope * np.asarray(t),
        theta_prime=lambda t: curvature * np.asarray(t) + slope,
        theta_second=lambda t: np.full(np.shape(t), curvature, dtype=float),
        beta=curvature,
        epsilon=0.0,
        omega=math.nan,
        steepness_constants=(math.nan, math.nan),
        working_range_upper=math.inf,
        eps_range=math.nan,
        params={"type": "quadratic", "beta": curvature},
    )


def _power_exponent(kmap: KernelMap) -> float:
    qs = {k.exponent for k in kmap.distinct}
    if len(qs) != 1 or None in qs:
        raise StructuralMismatch("kernels must all satisfy theta''(t) = t^(-p) for one p")
    return qs.pop()


def check_special_case_equivalence(
    case: SpecialCase | str,
    problem: Problem,
    x: np.ndarray,
    kernels: Kernel | KernelMap | Sequence[Kernel],
    config: SolverConfig | None = None,
) -> float:
    """Max deviation between one generic HBA update and the closed-form rule.

    Both sides use the step size selected by the generic pipeline.
    LV: ``m = 0`` and ``theta'' = t^-p``.  RD: unit simplex with Gibbs.
    AS: linear ``f`` and ``theta'' = t^-p``.  RN: ``m = 0``, convex quadratic
    with diagonal ``Q`` and ``theta_i = f_i + beta/2 t^2`` (pass
    :func:`quadratic_kernel` instances).
    """
    case = SpecialCase(case)
    config = resolve_config(problem, config)
    x = np.asarray(x, dtype=float)
    n = x.size
    kmap = as_kernel_map(kernels, n)
    cs = problem.constraints
    g = problem.eval_grad(x)

    if case is SpecialCase.LV:
        if cs.m != 0:
            raise StructuralMismatch("LV requires m = 0")
        p = _power_exponent(kmap)
    elif case is SpecialCase.RD:
        if cs.m != 1 or not np.all(cs.a_matrix == 1.0) or cs.b_vector[0] != 1.0:
            raise StructuralMismatch("RD requires the unit simplex A = (1,...,1), b = 1")
        if _power_exponent(kmap) != 1.0:
            raise StructuralMismatch("RD requires the Gibbs kernel with beta = 0")
    elif case is SpecialCase.AS:
        quad = problem.quadratic
        if quad is None or np.any(quad.q_matrix != 0):
            raise StructuralMismatch("AS requires a linear objective")
        p = _power_exponent(kmap)
    else:
        quad = problem.quadratic
        if cs.m != 0 or quad is None:
            raise StructuralMismatch("RN requires m = 0 and a quadratic objective")
        q = quad.q_matrix
        if np.any(q != np.diag(np.diag(q))) or np.any(np.diag(q) < 0):
            raise StructuralMismatch("RN check supports convex quadratics with diagonal Q only")
        curv = np.array([k.theta_second(np.array([1.0]))[0] for k in kmap.kernels])
        beta_reg = curv - np.diag(q)
        if np.ptp(beta_reg) > 1e-12 * max(1.0, float(np.max(np.abs(curv)))) or beta_reg[0] < 0:
            raise StructuralMismatch("RN kernels must be theta_i'' = Q_ii + beta for a common beta >= 0")
        beta = float(beta_reg[0])

    x_new, _, alpha, _, _, _ = hba_step(problem, x, kmap, config)

    if case is SpecialCase.LV:
        closed = x - alpha * x**p * g
    elif case is SpecialCase.RD:
        closed = x - alpha * x * (g - np.sum(x * g))
    elif case is SpecialCase.AS:
        a = cs.a_matrix
        xp = x**p
        c = quad.c_vector
        gram = (a * xp) @ a.T
        proj = xp * c - xp * (a.T @ np.linalg.solve(gram, a @ (xp * c)))
        closed = x - alpha * proj
    else:
        closed = x - alpha * np.linalg.solve(beta * np.eye(n) + quad.q_matrix, g)
    return float(np.max(np.abs(x_new - closed)))
