"""Problem abstraction and built-in instances.

A :class:`Problem` bundles objective and gradient callables with the
constraint system ``A x = b`` and a gradient Lipschitz constant.  Box
constrained benchmarks are brought into standard form by :func:`lift_box`,
which pairs every original coordinate with a slack so the lifted constraints
are a block simplex with blocks of size two.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError
from .geometry import ConstraintSystem
from .rng import derive_rng

Objective = Callable[[np.ndarray], float]
Gradient = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class QuadraticObjective:
    q_matrix: np.ndarray
    c_vector: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q_matrix, dtype=float)
        c = np.asarray(self.c_vector, dtype=float).reshape(-1)
        if q.ndim != 2 or q.shape[0] != q.shape[1] or q.shape[0] != c.size:
            raise ConfigurationError(f"Q is {q.shape}, c has {c.size} entries")
        scale = max(1.0, float(np.max(np.abs(q)))) if q.size else 1.0
        if np.max(np.abs(q - q.T), initial=0.0) > 1e-12 * scale:
            raise ConfigurationError("Q must be symmetric")
        object.__setattr__(self, "q_matrix", q)
        object.__setattr__(self, "c_vector", c)

    def value(self, x: np.ndarray) -> float:
        return float(0.5 * x @ (self.q_matrix @ x) + self.c_vector @ x)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.q_matrix @ x + self.c_vector


@dataclass(frozen=True)
class Problem:
    """Linearly constrained problem ``min f(x)  s.t.  A x = b, x >= 0``.

    ``unlift`` maps a point of this problem back to the coordinates of the
    problem it was lifted from (identity when None).  ``start`` is a strictly
    feasible point supplied by the generator, if any.
    """

    eval_f: Objective
    eval_grad: Gradient
    constraints: ConstraintSystem
    lipschitz_l: float
    dimension_n: int
    known_optimum: tuple[np.ndarray | None, float] | None = None
    name: str = "problem"
    quadratic: QuadraticObjective | None = None
    start: np.ndarray | None = None
    unlift: Callable[[np.ndarray], np.ndarray] | None = None
    hessian: Callable[[np.ndarray], np.ndarray] | None = None
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.constraints.n != self.dimension_n:
            raise ConfigurationError(
                f"constraints act on {self.constraints.n} coordinates, problem has {self.dimension_n}"
            )
        if self.lipschitz_l < 0:
            raise ConfigurationError("Lipschitz constant must be nonnegative")

    def original_point(self, x: np.ndarray) -> np.ndarray:
        return x if self.unlift is None else self.unlift(x)

    def coordinate_upper_bound(self) -> float:
        """Largest value any feasible coordinate can take (1.0 when unbounded)."""
        bounds = self.constraints.coordinate_upper_bounds()
        return 1.0 if bounds is None else float(np.max(bounds))


def spectral_norm(apply, n: int, iterations: int = 50, tol: float = 1e-8, seed: int = 0) -> float:
    """Power iteration estimate of ``||Q||_2`` for a symmetric operator ``apply``."""
    if n == 0:
        return 0.0
    v = derive_rng(seed, "problems.power_iteration").standard_normal(n)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iterations):
        w = apply(v)
        norm_w = float(np.linalg.norm(w))
        if norm_w == 0.0:
            return 0.0
        v = w / norm_w
        if abs(norm_w - est) <= tol * norm_w:
            est = norm_w
            break
        est = norm_w
    return est


def make_quadratic(q_matrix, c_vector, cs: ConstraintSystem, known_optimum=None, name: str = "quadratic") -> Problem:
    """``f(x) = 1/2 x^T Q x + c^T x`` with ``L = ||Q||_2`` by power iteration."""
    quad = QuadraticObjective(q_matrix, c_vector)
    q = quad.q_matrix
    lip = spectral_norm(lambda v: q @ v, q.shape[0])
    return Problem(
        eval_f=quad.value,
        eval_grad=quad.gradient,
        constraints=cs,
        lipschitz_l=lip,
        dimension_n=q.shape[0],
        known_optimum=known_optimum,
        name=name,
        quadratic=quad,
        hessian=lambda x: q,
    )


@dataclass(frozen=True)
class BoxLift:
    """Slack lifting of ``lower <= z <= upper``.

    Lifted layout is ``(x_1, s_1, x_2, s_2, ...)`` with ``x_i = z_i - lower_i``
    and ``x_i + s_i = upper_i - lower_i``.
    """

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape or not np.all(lo < hi):
            raise ConfigurationError("box requires lower < upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def d(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def lift(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        x = z - self.lower
        out = np.empty(2 * self.d)
        out[0::2] = x
        out[1::2] = self.width - x
        return out

    def unlift(self, lifted: np.ndarray) -> np.ndarray:
        return np.asarray(lifted)[0::2] + self.lower

    def constraints(self) -> ConstraintSystem:
        labels = np.repeat(np.arange(self.d), 2)
        return ConstraintSystem.from_blocks(labels, self.width)

    def center(self) -> np.ndarray:
        return self.lift(0.5 * (self.lower + self.upper))

    def random_interior(self, seed: int, margin: float = 0.01) -> np.ndarray:
        """Uniform draw from the box shrunk by ``margin`` of its width on each side."""
        u = derive_rng(seed, "problems.box_start").uniform(margin, 1.0 - margin, self.d)
        return self.lift(self.lower + u * self.width)


def lift_box(
    f: Objective,
    grad: Gradient,
    lower,
    upper,
    lipschitz_l: float,
    known_optimum: tuple[np.ndarray, float] | None = None,
    name: str = "box",
    hessian: Callable[[np.ndarray], np.ndarray] | None = None,
) -> Problem:
    """Standard-form problem over the lifted box; slack gradients are zero."""
    box = BoxLift(lower, upper)

    def lifted_f(x):
        return f(x[0::2] + box.lower)

    def lifted_grad(x):
        g = np.zeros_like(x, dtype=float)
        g[0::2] = grad(x[0::2] + box.lower)
        return g

    lifted_hess = None
    if hessian is not None:

        def lifted_hess(x):
            h = np.zeros((x.size, x.size))
            h[0::2, 0::2] = hessian(x[0::2] + box.lower)
            return h

    lifted_opt = None
    if known_optimum is not None:
        z_star, f_star = known_optimum
        lifted_opt = (box.lift(z_star), f_star)
    return Problem(
        eval_f=lifted_f,
        eval_grad=lifted_grad,
        constraints=box.constraints(),
        lipschitz_l=lipschitz_l,
        dimension_n=2 * box.d,
        known_optimum=lifted_opt,
        name=name,
        start=box.center(),
        unlift=box.unlift,
        hessian=lifted_hess,
        metadata={"box": box},
    )


def rosenbrock(z: np.ndarray) -> float:
    x1, x2 = z
    return float(100.0 * (x2 - x1 * x1) ** 2 + (1.0 - x1) ** 2)


def rosenbrock_grad(z: np.ndarray) -> np.ndarray:
    x1, x2 = z
    t = x2 - x1 * x1
    return np.array([-400.0 * x1 * t - 2.0 * (1.0 - x1), 200.0 * t])


def rosenbrock_hessian(z: np.ndarray) -> np.ndarray:
    x1, x2 = z
    return np.array([[1200.0 * x1 * x1 - 400.0 * x2 + 2.0, -400.0 * x1], [-400.0 * x1, 200.0]])


_BEALE_C = (1.5, 2.25, 2.625)


def beale(z: np.ndarray) -> float:
    x1, x2 = z
    return float(sum((c - x1 + x1 * x2 ** (j + 1)) ** 2 for j, c in enumerate(_BEALE_C)))


def beale_grad(z: np.ndarray) -> np.ndarray:
    x1, x2 = z
    g1 = g2 = 0.0
    for j, c in enumerate(_BEALE_C):
        p = j + 1
        res = c - x1 + x1 * x2**p
        g1 += 2.0 * res * (x2**p - 1.0)
        g2 += 2.0 * res * x1 * p * x2 ** (p - 1)
    return np.array([g1, g2])


def beale_hessian(z: np.ndarray) -> np.ndarray:
    x1, x2 = z
    h11 = h12 = h22 = 0.0
    for j, c in enumerate(_BEALE_C):
        p = j + 1
        res = c - x1 + x1 * x2**p
        d1 = x2**p - 1.0
        d2 = x1 * p * x2 ** (p - 1)
        h11 += 2.0 * d1 * d1
        h12 += 2.0 * (d1 * d2 + res * p * x2 ** (p - 1))
        d22 = x1 * p * (p - 1) * x2 ** (p - 2) if p >= 2 else 0.0
        h22 += 2.0 * (d2 * d2 + res * d22)
    return np.array([[h11, h12], [h12, h22]])


def hessian_norm_bound(hessian, lower, upper, points: int = 100, margin: float = 1.1, region=None) -> float:
    """``margin * max ||hessian(z)||_2`` over a ``points x points`` grid of the box.

    ``region`` optionally restricts the grid to points where it returns True.
    """
    g1 = np.linspace(lower[0], upper[0], points)
    g2 = np.linspace(lower[1], upper[1], points)
    best = 0.0
    for a in g1:
        for b in g2:
            z = np.array([a, b])
            if region is not None and not region(z):
                continue
            best = max(best, float(np.linalg.norm(hessian(z), 2)))
    return margin * best


def minimizer_curvature_l(hessian, z_star, margin: float = 1.1) -> float:
    """``margin * ||hessian(z_star)||_2``: the curvature that governs the terminal phase."""
    return margin * float(np.linalg.norm(hessian(np.asarray(z_star, dtype=float)), 2))


# Bootstrap scales for the benchmarks.  The grid bound over the whole box
# (about 1.3e4 for Rosenbrock, 1.6e5 for Beale) makes 2 beta / L so small that
# neither run reaches f <= 1e-6 within 1e5 iterations; Armijo backtracking
# absorbs the underestimate away from the minimizer instead.
ROSENBROCK_L = minimizer_curvature_l(rosenbrock_hessian, [1.0, 1.0])
BEALE_L = minimizer_curvature_l(beale_hessian, [3.0, 0.5])


def make_rosenbrock_box(lipschitz_l: float = ROSENBROCK_L) -> Problem:
    """Rosenbrock on ``[-3, 3]^2``, lifted to standard form."""
    return lift_box(
        rosenbrock,
        rosenbrock_grad,
        [-3.0, -3.0],
        [3.0, 3.0],
        lipschitz_l,
        known_optimum=(np.array([1.0, 1.0]), 0.0),
        name="rosenbrock",
        hessian=rosenbrock_hessian,
    )


def make_beale_box(lipschitz_l: float = BEALE_L) -> Problem:
    """Beale on ``[-4, 4]^2``, lifted to standard form."""
    return lift_box(
        beale,
        beale_grad,
        [-4.0, -4.0],
        [4.0, 4.0],
        lipschitz_l,
        known_optimum=(np.array([3.0, 0.5]), 0.0),
        name="beale",
        hessian=beale_hessian,
    )


def _orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    qm, rm = np.linalg.qr(rng.standard_normal((n, n)))
    return qm * np.sign(np.diag(rm))


def random_nonconvex_qp(n: int, m: int, negative_eigs: int, seed: int) -> tuple[Problem, np.ndarray]:
    """Seeded indefinite QP over a bounded polytope, plus a strictly feasible point.

    ``Q = V^T diag(lam) V`` with exactly ``negative_eigs`` negative entries in
    ``lam``.  The first row of ``A`` is all ones so the feasible region is
    bounded (it lies in a scaled simplex); the remaining rows are Gaussian.
    ``b = A x_int`` for a random positive ``x_int`` on the unit simplex.
    """
    if not 1 <= negative_eigs <= n:
        raise ConfigurationError("negative_eigs must lie in [1, n]; use make_quadratic for convex Q")
    if not 1 <= m < n:
        raise ConfigurationError("require 1 <= m < n")
    rng = derive_rng(seed, "problems.nonconvex_qp")
    v = _orthogonal(rng, n)
    mags = rng.uniform(0.5, 2.0, n)
    signs = np.ones(n)
    signs[rng.permutation(n)[:negative_eigs]] = -1.0
    lam = signs * mags
    q = v.T @ (lam[:, None] * v)
    q = 0.5 * (q + q.T)
    c = rng.standard_normal(n)
    a = np.vstack([np.ones((1, n)), rng.standard_normal((m - 1, n))])
    u = rng.uniform(0.5, 1.5, n)
    x_int = u / u.sum()
    b = a @ x_int
    cs = ConstraintSystem(a, b)
    problem = make_quadratic(q, c, cs, name=f"nonconvex_qp_n{n}_m{m}_neg{negative_eigs}_s{seed}")
    problem = _with_start(problem, x_int)
    return problem, x_int


def random_convex_qp_with_optimum(n: int, m: int, seed: int, support: int | None = None) -> tuple[Problem, np.ndarray]:
    """Convex QP whose global minimizer is planted through its KKT conditions.

    Picks ``x*`` with ``support`` positive entries, a dual ``y*`` and a reduced
    cost ``r* >= 0`` vanishing on the support, then sets
    ``c = r* + A^T y* - Q x*`` with ``Q`` positive semidefinite.  The KKT
    conditions hold at ``x*``, which is therefore a global minimizer.
    Returns the problem (with ``known_optimum``) and a strictly feasible start.
    """
    rng = derive_rng(seed, "problems.convex_qp")
    support = support if support is not None else max(m + 1, n // 2)
    if not m < support <= n:
        raise ConfigurationError("support must exceed m and be at most n")
    g = rng.standard_normal((n, n))
    q = g.T @ g / n
    x_star = np.zeros(n)
    on = rng.permutation(n)[:support]
    x_star[on] = rng.uniform(0.5, 1.5, support)
    x_star /= x_star.sum()
    a = np.vstack([np.ones((1, n)), rng.standard_normal((m - 1, n))]) if m > 0 else np.zeros((0, n))
    b = a @ x_star
    y_star = rng.standard_normal(m)
    r_star = rng.uniform(0.1, 1.0, n)
    r_star[on] = 0.0
    c = r_star + a.T @ y_star - q @ x_star
    cs = ConstraintSystem(a, b, n=n)
    quad = QuadraticObjective(q, c)
    problem = make_quadratic(q, c, cs, known_optimum=(x_star, quad.value(x_star)), name=f"convex_qp_n{n}_m{m}_s{seed}")
    # strictly feasible start: x* + t w with w in ker A and w = 1 off the support
    off = np.setdiff1d(np.arange(n), on)
    w = np.zeros(n)
    w[off] = 1.0
    if m > 0:
        w[on] = np.linalg.lstsq(a[:, on], -a[:, off].sum(axis=1), rcond=None)[0]
    neg = w[on] < 0
    t = 0.5 * float(np.min(x_star[on][neg] / -w[on][neg])) if np.any(neg) else 1.0
    start = x_star + min(t, 1.0) * w
    return _with_start(problem, start), start


def _with_start(problem: Problem, start: np.ndarray) -> Problem:
    from dataclasses import replace

    return replace(problem, start=np.asarray(start, dtype=float))
