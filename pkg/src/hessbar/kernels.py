"""Metric-inducing kernels and the diagonal Hessian-Riemannian metric.

Every built-in kernel has the form ``theta(t) = beta/2 t^2 + base(t)`` with
``base''(t) = t^(-q)`` for a family exponent ``q``:

=========  ==================================  =========
family     base(t)                             q
=========  ==================================  =========
gibbs      t log t                             1
tsallis    t^(2-p) / ((1-p)(2-p))              p
burg       -log t                              2
mixture    Tseng-Bomze-Schachinger homotopy    2 gamma
=========  ==================================  =========

Because ``t * base''(t) = t^(1-q)`` is non-increasing for ``q >= 1``, the
lower bounds ``beta`` and ``epsilon`` over a working range ``(0, U]`` are
attained at ``t = U`` and the moderate-steepness constants on ``(0, eps)`` are
attained at ``s = eps``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, InteriorityError

ScalarFn = Callable[[np.ndarray], np.ndarray]

KERNEL_TYPES = ("gibbs", "tsallis", "burg", "mixture")


@dataclass(frozen=True)
class Kernel:
    """A separable barrier kernel together with its analytic constants.

    ``beta`` and ``epsilon`` are lower bounds of ``theta''`` and
    ``t theta''`` over ``(0, working_range_upper]``; ``omega`` and
    ``steepness_constants = (m, M)`` satisfy
    ``m/s <= theta''(s) <= M/s^(2 omega)`` on ``(0, eps_range)``.
    """

    name: str
    theta: ScalarFn
    theta_prime: ScalarFn
    theta_second: ScalarFn
    beta: float
    epsilon: float
    omega: float
    steepness_constants: tuple[float, float]
    working_range_upper: float
    eps_range: float
    params: dict = field(default_factory=dict, compare=False)

    @property
    def exponent(self) -> float | None:
        """``q`` when ``theta''(t) == t^(-q)`` exactly (no quadratic term), else None."""
        if self.params.get("beta", 0.0) != 0.0:
            return None
        return self.params.get("q")

    def to_dict(self) -> dict:
        out = {"type": self.params["type"], "beta": self.params["beta"]}
        for key in ("p", "gamma"):
            if key in self.params:
                out[key] = self.params[key]
        return out


def _power_law_kernel(
    name: str,
    base: ScalarFn,
    base_prime: ScalarFn,
    q: float,
    omega: float,
    beta: float,
    working_range_upper: float,
    eps_range: float | None,
    params: dict,
) -> Kernel:
    if beta < 0:
        raise ConfigurationError(f"regularization beta must be >= 0, got {beta}")
    if not working_range_upper > 0:
        raise ConfigurationError("working_range_upper must be positive")
    if eps_range is None:
        eps_range = min(1.0, working_range_upper) / 2.0
    if not 0 < eps_range < 1:
        raise ConfigurationError("eps_range must lie in (0, 1)")

    def theta(t):
        t = np.asarray(t, dtype=float)
        return 0.5 * beta * t * t + base(t)

    def theta_prime(t):
        t = np.asarray(t, dtype=float)
        return beta * t + base_prime(t)

    def theta_second(t):
        t = np.asarray(t, dtype=float)
        # subnormal t overflows to inf, which the metric maps to h_inv = 0
        with np.errstate(over="ignore", divide="ignore"):
            return beta + t ** (-q)

    upper = working_range_upper
    m_const = eps_range ** (1.0 - q)
    big_m = beta * eps_range ** (2.0 * omega) + eps_range ** (2.0 * omega - q)
    return Kernel(
        name=name,
        theta=theta,
        theta_prime=theta_prime,
        theta_second=theta_second,
        beta=beta + upper ** (-q),
        epsilon=upper ** (1.0 - q),
        omega=omega,
        steepness_constants=(m_const, big_m),
        working_range_upper=upper,
        eps_range=eps_range,
        params={**params, "beta": beta, "q": q},
    )


def make_gibbs(beta: float = 0.0, working_range_upper: float = 1.0, eps_range: float | None = None) -> Kernel:
    """Regularized Gibbs entropy ``beta/2 t^2 + t log t``."""

    def base(t):
        return t * np.log(t)

    def base_prime(t):
        return 1.0 + np.log(t)

    return _power_law_kernel(
        "gibbs", base, base_prime, 1.0, 0.5, beta, working_range_upper, eps_range, {"type": "gibbs"}
    )


def make_tsallis(
    beta: float, p: float, working_range_upper: float = 1.0, eps_range: float | None = None
) -> Kernel:
    """Regularized Tsallis entropy ``beta/2 t^2 + t^(2-p) / ((1-p)(2-p))``, ``1 < p < 2``."""
    if not 1.0 < p < 2.0:
        raise ConfigurationError(f"Tsallis exponent p must lie in (1, 2), got {p}")
    scale = 1.0 / ((1.0 - p) * (2.0 - p))

    def base(t):
        return scale * t ** (2.0 - p)

    def base_prime(t):
        return t ** (1.0 - p) / (1.0 - p)

    return _power_law_kernel(
        "tsallis", base, base_prime, p, 1.0, beta, working_range_upper, eps_range, {"type": "tsallis", "p": p}
    )


def make_burg(beta: float = 0.0, working_range_upper: float = 1.0, eps_range: float | None = None) -> Kernel:
    """Regularized log-barrier ``beta/2 t^2 - log t``."""

    def base(t):
        return -np.log(t)

    def base_prime(t):
        return -1.0 / t

    return _power_law_kernel(
        "burg", base, base_prime, 2.0, 1.0, beta, working_range_upper, eps_range, {"type": "burg"}
    )


def make_mixture(
    beta: float, gamma: float, working_range_upper: float = 1.0, eps_range: float | None = None
) -> Kernel:
    """Homotopy between Gibbs (``gamma = 1/2``) and Burg (``gamma = 1``).

    For every branch ``theta''(t) = beta + t^(-2 gamma)``.
    """
    if not 0.5 <= gamma <= 1.0:
        raise ConfigurationError(f"mixture gamma must lie in [1/2, 1], got {gamma}")
    if gamma == 0.5:

        def base(t):
            return t * np.log(t) - t

        def base_prime(t):
            return np.log(t)

    elif gamma == 1.0:

        def base(t):
            return -np.log(t)

        def base_prime(t):
            return -1.0 / t

    else:
        scale = 1.0 / (2.0 * (1.0 - gamma) * (1.0 - 2.0 * gamma))

        def base(t):
            return scale * t ** (2.0 * (1.0 - gamma))

        def base_prime(t):
            return t ** (1.0 - 2.0 * gamma) / (1.0 - 2.0 * gamma)

    return _power_law_kernel(
        "mixture",
        base,
        base_prime,
        2.0 * gamma,
        gamma,
        beta,
        working_range_upper,
        eps_range,
        {"type": "mixture", "gamma": gamma},
    )


def kernel_from_dict(spec: dict, working_range_upper: float = 1.0) -> Kernel:
    """Build a kernel from ``{type, beta, p?, gamma?}``."""
    kind = spec.get("type")
    beta = float(spec.get("beta", 0.0))
    if kind == "gibbs":
        return make_gibbs(beta, working_range_upper)
    if kind == "burg":
        return make_burg(beta, working_range_upper)
    if kind == "tsallis":
        if "p" not in spec:
            raise ConfigurationError("tsallis kernel requires 'p'")
        return make_tsallis(beta, float(spec["p"]), working_range_upper)
    if kind == "mixture":
        if "gamma" not in spec:
            raise ConfigurationError("mixture kernel requires 'gamma'")
        return make_mixture(beta, float(spec["gamma"]), working_range_upper)
    raise ConfigurationError(f"unknown kernel type {kind!r}; expected one of {KERNEL_TYPES}")


def with_working_range(kernel: Kernel, working_range_upper: float) -> Kernel:
    """Rebuild ``kernel`` with a different coordinate upper bound."""
    return kernel_from_dict(kernel.to_dict(), working_range_upper)


class KernelMap:
    """Assignment of one kernel per coordinate.

    Coordinates sharing a kernel object are grouped so evaluation stays
    vectorized even when the map is built from a per-coordinate list.
    """

    def __init__(self, kernels: Sequence[Kernel]):
        kernels = list(kernels)
        if not kernels:
            raise ConfigurationError("at least one coordinate is required")
        self.n = len(kernels)
        groups: dict[int, tuple[Kernel, list[int]]] = {}
        for i, k in enumerate(kernels):
            groups.setdefault(id(k), (k, []))[1].append(i)
        self._groups = [(k, np.asarray(idx, dtype=np.intp)) for k, idx in groups.values()]
        self._uniform = len(self._groups) == 1

    @classmethod
    def uniform(cls, kernel: Kernel, n: int) -> KernelMap:
        return cls([kernel] * n)

    @property
    def kernels(self) -> list[Kernel]:
        out: list[Kernel] = [None] * self.n  # type: ignore[list-item]
        for k, idx in self._groups:
            for i in idx:
                out[i] = k
        return out

    @property
    def distinct(self) -> list[Kernel]:
        return [k for k, _ in self._groups]

    @property
    def beta(self) -> float:
        """Smallest declared curvature lower bound across coordinates."""
        return min(k.beta for k, _ in self._groups)

    @property
    def omega(self) -> float:
        return max(k.omega for k, _ in self._groups)

    def _apply(self, attr: str, x: np.ndarray) -> np.ndarray:
        if self._uniform:
            return getattr(self._groups[0][0], attr)(x)
        out = np.empty_like(x, dtype=float)
        for k, idx in self._groups:
            out[idx] = getattr(k, attr)(x[idx])
        return out

    def theta(self, x):
        return self._apply("theta", x)

    def theta_prime(self, x):
        return self._apply("theta_prime", x)

    def theta_second(self, x):
        return self._apply("theta_second", x)


def as_kernel_map(kernels: Kernel | KernelMap | Sequence[Kernel], n: int | None = None) -> KernelMap:
    if isinstance(kernels, KernelMap):
        km = kernels
    elif isinstance(kernels, Kernel):
        if n is None:
            raise ConfigurationError("dimension required to replicate a single kernel")
        km = KernelMap.uniform(kernels, n)
    else:
        km = KernelMap(kernels)
    if n is not None and km.n != n:
        raise ConfigurationError(f"kernel map has {km.n} coordinates, expected {n}")
    return km


@dataclass(frozen=True)
class DiagonalMetric:
    h_diag: np.ndarray
    h_inv_diag: np.ndarray

    @classmethod
    def from_diag(cls, h_diag: np.ndarray) -> DiagonalMetric:
        h_diag = np.asarray(h_diag, dtype=float)
        with np.errstate(divide="ignore"):
            h_inv = np.where(np.isinf(h_diag), 0.0, 1.0 / h_diag)
        return cls(h_diag, h_inv)


def metric_at(kernels: Kernel | KernelMap | Sequence[Kernel], x: np.ndarray) -> DiagonalMetric:
    """Diagonal metric ``diag(theta_i''(x_i))`` at a strictly positive ``x``."""
    x = np.asarray(x, dtype=float)
    if not np.all(x > 0):
        bad = int(np.argmin(x))
        raise InteriorityError(f"metric requested at non-interior point: x[{bad}] = {x[bad]!r}")
    km = as_kernel_map(kernels, x.size)
    return DiagonalMetric.from_diag(km.theta_second(x))


def kernel_sandwich_ok(kernel: Kernel, s: np.ndarray) -> np.ndarray:
    """Elementwise check of ``m/s <= theta''(s) <= M/s^(2 omega)``."""
    m_const, big_m = kernel.steepness_constants
    h = kernel.theta_second(s)
    rtol = 1e-12
    lower = m_const / s
    upper = big_m / s ** (2.0 * kernel.omega)
    return (h >= lower * (1 - rtol)) & (h <= upper * (1 + rtol))


def steep_at_zero(kernel: Kernel, depth: int = 12) -> bool:
    """True when ``theta'(10^-k)`` strictly decreases for ``k = 1..depth``."""
    vals = [float(kernel.theta_prime(10.0 ** (-k))) for k in range(1, depth + 1)]
    return all(b < a for a, b in zip(vals, vals[1:])) and math.isfinite(vals[-1])
