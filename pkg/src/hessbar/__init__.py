"""Hessian barrier algorithm for linearly constrained optimization."""

from .errors import *  # noqa: F401,F403
from .geometry import ConstraintSystem, GeometryResult, kkt_residual, search_direction
from .kernels import Kernel, KernelMap, make_burg, make_gibbs, make_mixture, make_tsallis, metric_at
from .problems import Problem, lift_box, make_beale_box, make_quadratic, make_rosenbrock_box
from .solver import ArmijoParams, SolveReport, SolverConfig, Termination, hba_solve, mirror_descent_solve

__version__ = "0.1.0"
