"""Empirical convergence rates of value traces."""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from ..errors import InsufficientData, OptimumUnavailable
from ..solver import IterationRecord

MIN_TRACE = 100
MIN_TAIL_POINTS = 20


def predicted_rho(omega: float) -> float:
    """``1 / (2 max(1, omega) - 1)``."""
    return 1.0 / (2.0 * max(1.0, omega) - 1.0)


@dataclass(frozen=True)
class RateReport:
    rho_predicted: float
    rho_fitted: float
    f_infinity_estimate: float
    fit_window: tuple[int, int]
    fit_r_squared: float
    points: int

    def to_dict(self) -> dict:
        out = asdict(self)
        out["fit_window"] = list(self.fit_window)
        return out


class FInfinityMethod(str, enum.Enum):
    KNOWN_OPTIMUM = "KnownOptimum"
    LONG_RUN_BEST = "LongRunBest"


def _values(trace) -> tuple[np.ndarray, np.ndarray]:
    ks = np.array([rec.k for rec in trace], dtype=float)
    fs = np.array([rec.f_value for rec in trace], dtype=float)
    return ks, fs


def estimate_f_infinity(
    trace: Sequence[IterationRecord],
    method: FInfinityMethod | str = FInfinityMethod.LONG_RUN_BEST,
    known_optimum: float | None = None,
    margin: float = 1e-12,
) -> float:
    """Limit value used as the reference for gaps.

    LongRunBest returns ``min f - margin (1 + |min f|)`` so the smallest gap
    stays positive.
    """
    if len(trace) == 0:
        raise InsufficientData("empty trace")
    method = FInfinityMethod(method)
    if method is FInfinityMethod.KNOWN_OPTIMUM:
        if known_optimum is None:
            raise OptimumUnavailable("the problem has no known optimum")
        return float(known_optimum)
    best = float(min(rec.f_value for rec in trace))
    return best - margin * (1.0 + abs(best))


def _tail(trace, f_infinity: float, tail_fraction: float):
    if not 0 < tail_fraction <= 1:
        raise ValueError("tail_fraction must lie in (0, 1]")
    ks, fs = _values(trace)
    k_last = ks[-1]
    k_first = math.ceil((1.0 - tail_fraction) * k_last)
    gap = fs - f_infinity
    keep = (ks >= max(k_first, 1)) & (gap > 0)
    return ks[keep], gap[keep]


def fit_rate(
    trace: Sequence[IterationRecord],
    f_infinity: float,
    tail_fraction: float = 0.5,
    omega: float = 0.5,
) -> RateReport:
    """Least-squares slope of ``log(gap)`` against ``log k`` over the tail window."""
    if len(trace) < MIN_TRACE:
        raise InsufficientData(f"trace has {len(trace)} records, need at least {MIN_TRACE}")
    fmin = min(rec.f_value for rec in trace)
    if f_infinity > fmin:
        raise ValueError(f"f_infinity {f_infinity!r} exceeds the trace minimum {fmin!r}")
    ks, gap = _tail(trace, f_infinity, tail_fraction)
    if ks.size < MIN_TAIL_POINTS:
        raise InsufficientData(f"only {ks.size} usable tail points, need {MIN_TAIL_POINTS}")
    lx = np.log(ks)
    ly = np.log(gap)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return RateReport(
        rho_predicted=predicted_rho(omega),
        rho_fitted=float(-slope),
        f_infinity_estimate=float(f_infinity),
        fit_window=(int(ks[0]), int(ks[-1])),
        fit_r_squared=min(1.0, max(0.0, r2)),
        points=int(ks.size),
    )


@dataclass(frozen=True)
class ComplianceReport:
    compliant: bool
    constant_c: float
    worst_ratio: float
    window_start: int
    points_checked: int

    def to_dict(self) -> dict:
        return asdict(self)


def rate_compliance(
    trace: Sequence[IterationRecord],
    f_infinity: float,
    rho: float = 1.0,
    tail_fraction: float = 0.5,
    slack: float = 1.1,
) -> ComplianceReport:
    """Check ``gap(k) <= slack * C * k^-rho`` after the fit-window start.

    ``C = gap(k_s) * k_s^rho`` makes the bound tight at the first window point
    ``k_s``.  ``worst_ratio`` is ``max gap(k) k^rho / C``.
    """
    ks, gap = _tail(trace, f_infinity, tail_fraction)
    if ks.size < 2:
        raise InsufficientData("need at least two tail points with positive gap")
    c = gap[0] * ks[0] ** rho
    ratios = gap[1:] * ks[1:] ** rho / c
    worst = float(np.max(ratios))
    return ComplianceReport(
        compliant=bool(worst <= slack),
        constant_c=float(c),
        worst_ratio=worst,
        window_start=int(ks[0]),
        points_checked=int(ratios.size),
    )
