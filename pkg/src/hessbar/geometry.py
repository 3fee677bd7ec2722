"""Riemannian projection, dual variable, reduced cost and search direction.

The projection ``P(x) = I - H^-1 A^T (A H^-1 A^T)^-1 A`` is never formed.
Instead the ``m x m`` system for the dual variable is solved and the search
direction follows from the reduced cost, ``v = -H^-1 (grad - A^T y)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import EmptyAffineSet, RankDeficientConstraints, SingularMetricSystem
from .kernels import DiagonalMetric

RANK_RTOL = 1e-10


class ConstraintSystem:
    """Equality constraints ``A x = b`` with full row rank.

    Disjoint 0/1 rows (each coordinate used by at most one row) are detected
    once at construction; :func:`dual_variable` then uses closed-form block
    averages instead of a factorization.
    """

    def __init__(self, a_matrix, b_vector, n: int | None = None):
        if sp.issparse(a_matrix):
            a = np.asarray(a_matrix.toarray(), dtype=float)
        else:
            a = np.asarray(a_matrix, dtype=float)
        if a.ndim == 1:
            a = a.reshape(1, -1) if a.size else np.zeros((0, n or 0))
        if a.shape[0] == 0 and n is not None:
            a = np.zeros((0, n))
        b = np.asarray(b_vector, dtype=float).reshape(-1)
        if a.ndim != 2 or b.shape[0] != a.shape[0]:
            raise ValueError(f"shape mismatch: A is {a.shape}, b has {b.shape[0]} entries")
        self.a_matrix = a
        self.b_vector = b
        self.a_matrix.setflags(write=False)
        self.b_vector.setflags(write=False)
        self.m, self.n = a.shape
        self._check_rank()
        self.block_labels = self._detect_blocks()

    @classmethod
    def unconstrained(cls, n: int) -> ConstraintSystem:
        return cls(np.zeros((0, n)), np.zeros(0), n=n)

    @classmethod
    def from_blocks(cls, labels, demands) -> ConstraintSystem:
        """Block-simplex system: ``sum_{j in block i} x_j = demands[i]``."""
        labels = np.asarray(labels, dtype=np.intp)
        demands = np.asarray(demands, dtype=float)
        a = np.zeros((demands.size, labels.size))
        cols = np.flatnonzero(labels >= 0)
        a[labels[cols], cols] = 1.0
        return cls(a, demands)

    def _check_rank(self) -> None:
        if self.m == 0:
            return
        if self.m > self.n:
            raise RankDeficientConstraints(f"{self.m} rows exceed {self.n} columns")
        sv = np.linalg.svd(self.a_matrix, compute_uv=False)
        rank = int(np.sum(sv > RANK_RTOL * sv[0])) if sv[0] > 0 else 0
        if rank < self.m:
            raise RankDeficientConstraints(f"rank(A) = {rank} < m = {self.m}")
        # full row rank implies A x = b is solvable; keep a cheap residual check anyway
        x_ls = np.linalg.lstsq(self.a_matrix, self.b_vector, rcond=None)[0]
        if np.max(np.abs(self.a_matrix @ x_ls - self.b_vector)) > 1e-8 * (1 + np.max(np.abs(self.b_vector))):
            raise EmptyAffineSet("A x = b has no solution")

    def _detect_blocks(self) -> np.ndarray | None:
        a = self.a_matrix
        if self.m == 0 or not np.all((a == 0.0) | (a == 1.0)):
            return None
        col_counts = a.sum(axis=0)
        if np.any(col_counts > 1):
            return None
        labels = np.full(self.n, -1, dtype=np.intp)
        rows, cols = np.nonzero(a)
        labels[cols] = rows
        return labels

    @property
    def is_block_simplex(self) -> bool:
        return self.block_labels is not None

    @property
    def covers_all(self) -> bool:
        return self.block_labels is not None and bool(np.all(self.block_labels >= 0))

    def residual(self, x: np.ndarray) -> float:
        if self.m == 0:
            return 0.0
        return float(np.max(np.abs(self.a_matrix @ x - self.b_vector)))

    def feasibility_tolerance(self) -> float:
        scale = float(np.max(np.abs(self.b_vector))) if self.m else 0.0
        return 1e-8 * (1.0 + scale)

    def coordinate_upper_bounds(self) -> np.ndarray | None:
        """Per-coordinate upper bounds implied by ``x >= 0`` and nonnegative rows.

        Any row with nonnegative entries bounds each coordinate it touches by
        ``b_i / a_ij``.  Returns None when some coordinate is unbounded this way.
        """
        a, b = self.a_matrix, self.b_vector
        bounds = np.full(self.n, np.inf)
        for i in range(self.m):
            row = a[i]
            if np.all(row >= 0) and b[i] > 0:
                pos = row > 0
                bounds[pos] = np.minimum(bounds[pos], b[i] / row[pos])
        return None if np.any(np.isinf(bounds)) else bounds

    def to_dict(self, sparse: bool = False) -> dict:
        if sparse:
            rows, cols = np.nonzero(self.a_matrix)
            entries = [[int(i), int(j), float(self.a_matrix[i, j])] for i, j in zip(rows, cols)]
            return {"sparse": {"shape": [self.m, self.n], "entries": entries}, "b": self.b_vector.tolist()}
        return {"dense": self.a_matrix.tolist(), "b": self.b_vector.tolist(), "n": self.n}

    @classmethod
    def from_dict(cls, spec: dict, n: int | None = None) -> ConstraintSystem:
        b = spec.get("b", [])
        if "sparse" in spec:
            m_rows, n_cols = spec["sparse"]["shape"]
            a = np.zeros((m_rows, n_cols))
            for i, j, val in spec["sparse"]["entries"]:
                a[int(i), int(j)] = float(val)
            return cls(a, b, n=n_cols)
        if "dense" in spec or "A" in spec:
            n = spec.get("n", n)
            a = np.asarray(spec["dense"] if "dense" in spec else spec["A"], dtype=float)
            if a.size == 0:
                if n is None:
                    raise ValueError("empty dense constraint matrix needs 'n'")
                a = np.zeros((0, n))
            return cls(a, b, n=n)
        raise ValueError("constraints must contain 'dense' (alias 'A') or 'sparse'")


@dataclass(frozen=True)
class GeometryResult:
    dual_y: np.ndarray
    reduced_cost_r: np.ndarray
    direction_v: np.ndarray
    v_norm_x_sq: float


def dual_variable(cs: ConstraintSystem, metric: DiagonalMetric, grad: np.ndarray) -> np.ndarray:
    """Solve ``(A H^-1 A^T) y = A H^-1 grad``."""
    if cs.m == 0:
        return np.zeros(0)
    w = metric.h_inv_diag
    if cs.block_labels is not None:
        labels = cs.block_labels
        on = labels >= 0
        num = np.bincount(labels[on], weights=(w * grad)[on], minlength=cs.m)
        den = np.bincount(labels[on], weights=w[on], minlength=cs.m)
        if np.any(den <= 0):
            raise SingularMetricSystem("a block has zero total inverse metric weight")
        return num / den
    a = cs.a_matrix
    aw = a * w
    gram = aw @ a.T
    rhs = aw @ grad
    try:
        return sla.cho_solve(sla.cho_factor(gram, lower=True, check_finite=True), rhs)
    except (np.linalg.LinAlgError, ValueError):
        pass
    jitter = 1e-12 * np.trace(gram) / cs.m
    try:
        return sla.cho_solve(sla.cho_factor(gram + jitter * np.eye(cs.m), lower=True), rhs)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularMetricSystem(f"A H^-1 A^T not positive definite after jitter {jitter:.3e}") from exc


def reduced_cost(grad: np.ndarray, cs: ConstraintSystem, dual_y: np.ndarray) -> np.ndarray:
    if cs.m == 0:
        return np.array(grad, dtype=float, copy=True)
    if cs.block_labels is not None:
        labels = cs.block_labels
        shift = np.where(labels >= 0, dual_y[np.maximum(labels, 0)], 0.0)
        return grad - shift
    return grad - cs.a_matrix.T @ dual_y


def search_direction(cs: ConstraintSystem, metric: DiagonalMetric, grad: np.ndarray) -> GeometryResult:
    """Negative restricted Riemannian gradient ``v = -P(x) H(x)^-1 grad``."""
    grad = np.asarray(grad, dtype=float)
    y = dual_variable(cs, metric, grad)
    r = reduced_cost(grad, cs, y)
    v = -metric.h_inv_diag * r
    # v^T H v == r^T H^-1 r; the right side avoids inf * 0 under the 1/inf = 0 convention
    vnorm_sq = float(np.dot(metric.h_inv_diag * r, r))
    return GeometryResult(y, r, v, vnorm_sq)


def kkt_residual(x: np.ndarray, result: GeometryResult) -> float:
    """Complementarity residual ``||diag(x) r(x)||_inf``."""
    if x.size == 0:
        return 0.0
    return float(np.max(np.abs(x * result.reduced_cost_r)))


def angle_identity_defect(
    cs: ConstraintSystem, metric: DiagonalMetric, grad: np.ndarray, result: GeometryResult
) -> tuple[float, float]:
    """``(|-grad^T v - ||v||_x^2|, scale)`` for the angle identity.

    Both sides are assembled from ``grad``, ``A^T y`` and ``H^-1``; once
    ``r = grad - A^T y`` cancels near a solution the rounding error is set by
    those inputs rather than by ``||v||_x^2``.  ``scale`` is the largest of
    ``||v||_x^2`` and ``sum_i h_inv_i (|g_i| + |r_i|)(|g_i| + (|A|^T |y|)_i)``.
    """
    grad = np.asarray(grad, dtype=float)
    w = metric.h_inv_diag
    r = result.reduced_cost_r
    lhs = -float(grad @ result.direction_v)
    defect = abs(lhs - result.v_norm_x_sq)
    if cs.m == 0:
        row_mag = np.zeros_like(grad)
    elif cs.block_labels is not None:
        labels = cs.block_labels
        row_mag = np.where(labels >= 0, np.abs(result.dual_y)[np.maximum(labels, 0)], 0.0)
    else:
        row_mag = np.abs(cs.a_matrix).T @ np.abs(result.dual_y)
    terms = float(np.sum(w * (np.abs(grad) + np.abs(r)) * (np.abs(grad) + row_mag)))
    return defect, max(result.v_norm_x_sq, abs(lhs), terms)


def dual_feasibility_violation(result: GeometryResult) -> float:
    r = result.reduced_cost_r
    if r.size == 0:
        return 0.0
    return max(0.0, -float(np.min(r)))
