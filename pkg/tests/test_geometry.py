import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from hessbar.errors import EmptyAffineSet, RankDeficientConstraints, SingularMetricSystem
from hessbar.geometry import (
    ConstraintSystem,
    angle_identity_defect,
    dual_feasibility_violation,
    dual_variable,
    kkt_residual,
    reduced_cost,
    search_direction,
)
from hessbar.kernels import DiagonalMetric, make_burg, make_gibbs, make_tsallis, metric_at


def kkt_direction(h_diag, a, g):
    """Minimizer of g^T z + 1/2 z^T H z subject to A z = 0, from the dense KKT system."""
    n, m = h_diag.size, a.shape[0]
    kkt = np.zeros((n + m, n + m))
    kkt[:n, :n] = np.diag(h_diag)
    kkt[:n, n:] = a.T
    kkt[n:, :n] = a
    rhs = np.concatenate([-g, np.zeros(m)])
    return np.linalg.solve(kkt, rhs)[:n]


def random_instance(rng, n_max=50, m_max=10):
    n = int(rng.integers(2, n_max + 1))
    m = int(rng.integers(0, min(m_max, n - 1) + 1))
    a = rng.standard_normal((m, n))
    x = rng.uniform(0.05, 2.0, n)
    cs = ConstraintSystem(a, a @ x, n=n)
    kernel = [make_gibbs(0), make_burg(0.1), make_tsallis(0, 1.5)][int(rng.integers(3))]
    metric = metric_at(kernel, x)
    g = rng.standard_normal(n) * 10 ** rng.uniform(-2, 2)
    return cs, x, metric, g


# --- constraint system ------------------------------------------------------


def test_rank_deficiency_detected():
    with pytest.raises(RankDeficientConstraints):
        ConstraintSystem(np.array([[1.0, 1.0, 0.0], [2.0, 2.0, 0.0]]), [1.0, 2.0])
    with pytest.raises(RankDeficientConstraints):
        ConstraintSystem(np.ones((3, 2)), np.ones(3))


def test_inconsistent_system_rejected():
    # full row rank always admits a solution, so only the shape error is reachable here
    with pytest.raises(ValueError):
        ConstraintSystem(np.ones((1, 3)), [1.0, 2.0])
    assert issubclass(EmptyAffineSet, ValueError)


def test_block_detection():
    cs = ConstraintSystem.from_blocks([0, 0, 1, 1], [2.0, 3.0])
    assert cs.is_block_simplex and cs.covers_all
    np.testing.assert_array_equal(cs.a_matrix, [[1, 1, 0, 0], [0, 0, 1, 1]])
    assert not ConstraintSystem(np.array([[1.0, 2.0]]), [1.0]).is_block_simplex
    partial = ConstraintSystem(np.array([[1.0, 1.0, 0.0]]), [1.0])
    assert partial.is_block_simplex and not partial.covers_all


def test_sparse_input_and_dict_round_trip():
    a = sp.csr_matrix(np.array([[1.0, 0.0, 2.0], [0.0, 1.0, 1.0]]))
    cs = ConstraintSystem(a, [1.0, 2.0])
    for sparse in (False, True):
        back = ConstraintSystem.from_dict(cs.to_dict(sparse=sparse))
        np.testing.assert_array_equal(back.a_matrix, cs.a_matrix)
        np.testing.assert_array_equal(back.b_vector, cs.b_vector)
    empty = ConstraintSystem.unconstrained(4)
    assert ConstraintSystem.from_dict(empty.to_dict()).n == 4


def test_coordinate_upper_bounds():
    cs = ConstraintSystem.from_blocks([0, 0, 1, 1], [2.0, 3.0])
    np.testing.assert_array_equal(cs.coordinate_upper_bounds(), [2, 2, 3, 3])
    assert ConstraintSystem.unconstrained(3).coordinate_upper_bounds() is None


# --- examples -----------------------------------------------------------------


def test_unconstrained_dual_is_empty_and_reduced_cost_is_gradient():
    cs = ConstraintSystem.unconstrained(3)
    g = np.array([1.0, -2.0, 3.0])
    metric = metric_at(make_gibbs(0), np.ones(3))
    assert dual_variable(cs, metric, g).size == 0
    np.testing.assert_array_equal(reduced_cost(g, cs, np.zeros(0)), g)


def test_simplex_entropy_dual_is_weighted_mean(rng):
    x = rng.dirichlet(np.ones(6))
    g = rng.standard_normal(6)
    cs = ConstraintSystem(np.ones((1, 6)), [1.0])
    metric = metric_at(make_gibbs(0), x)
    y = dual_variable(cs, metric, g)
    assert y[0] == pytest.approx(x @ g, rel=1e-13)
    np.testing.assert_allclose(reduced_cost(g, cs, y), g - x @ g, atol=1e-14)
    geo = search_direction(cs, metric, g)
    np.testing.assert_allclose(geo.direction_v, -x * (g - x @ g), atol=1e-14)


def test_gradient_in_row_space(rng):
    a = rng.standard_normal((3, 8))
    x = rng.uniform(0.5, 1.5, 8)
    cs = ConstraintSystem(a, a @ x)
    w = rng.standard_normal(3)
    metric = metric_at(make_burg(0), x)
    np.testing.assert_allclose(dual_variable(cs, metric, a.T @ w), w, rtol=1e-10)
    geo = search_direction(cs, metric, a.T @ w)
    assert np.max(np.abs(geo.reduced_cost_r)) <= 1e-12
    assert np.max(np.abs(geo.direction_v)) <= 1e-12


def test_zero_gradient():
    cs = ConstraintSystem(np.ones((1, 3)), [1.0])
    geo = search_direction(cs, metric_at(make_gibbs(0), np.full(3, 1 / 3)), np.zeros(3))
    assert not geo.direction_v.any() and not geo.reduced_cost_r.any() and not geo.dual_y.any()


def test_lotka_volterra_direction(rng):
    x = rng.uniform(0.1, 2.0, 5)
    g = rng.standard_normal(5)
    geo = search_direction(ConstraintSystem.unconstrained(5), metric_at(make_tsallis(0, 1.5), x), g)
    np.testing.assert_allclose(geo.direction_v, -(x**1.5) * g, rtol=1e-13)


def test_kkt_residual_examples(rng):
    x = rng.uniform(0.1, 1.0, 5)
    cs = ConstraintSystem(np.ones((1, 5)), [x.sum()])
    metric = metric_at(make_gibbs(0), x)
    g = rng.standard_normal(5)
    geo = search_direction(cs, metric, g)
    assert kkt_residual(x, geo) == pytest.approx(np.max(np.abs(x * geo.reduced_cost_r)))
    # complementary slackness: r supported where x vanishes
    geo0 = search_direction(cs, metric, np.ones(5))
    assert kkt_residual(x, geo0) <= 1e-15
    assert dual_feasibility_violation(geo) == pytest.approx(max(0.0, -geo.reduced_cost_r.min()))


def test_singular_metric_system_raises():
    cs = ConstraintSystem(np.array([[1.0, 2.0, 0.0], [0.0, 1.0, 1.0]]), [1.0, 1.0])
    metric = DiagonalMetric(np.full(3, np.inf), np.zeros(3))
    with pytest.raises(SingularMetricSystem):
        dual_variable(cs, metric, np.ones(3))
    block = ConstraintSystem.from_blocks([0, 0, 1], [1.0, 1.0])
    with pytest.raises(SingularMetricSystem):
        dual_variable(block, metric, np.ones(3))


# --- properties ----------------------------------------------------------------


def test_brute_force_subproblem_oracle(rng):
    for _ in range(100):
        cs, x, metric, g = random_instance(rng, n_max=6, m_max=3)
        geo = search_direction(cs, metric, g)
        z = kkt_direction(metric.h_diag, cs.a_matrix, g)
        assert np.max(np.abs(geo.direction_v - z)) <= 1e-8 * (1 + np.max(np.abs(z)))


def test_tangency_and_angle_identity(rng):
    for _ in range(100):
        cs, x, metric, g = random_instance(rng)
        geo = search_direction(cs, metric, g)
        if cs.m:
            assert np.max(np.abs(cs.a_matrix @ geo.direction_v)) <= 1e-8 * (1 + np.max(np.abs(g)))
        lhs = -g @ geo.direction_v
        assert lhs == pytest.approx(geo.v_norm_x_sq, rel=1e-8)
        np.testing.assert_allclose(geo.direction_v, -geo.reduced_cost_r / metric.h_diag, rtol=1e-13)
        vhv = geo.direction_v @ (metric.h_diag * geo.direction_v)
        assert vhv == pytest.approx(geo.v_norm_x_sq, rel=1e-10)


def test_projection_ignores_row_space_components(rng):
    for _ in range(50):
        cs, x, metric, g = random_instance(rng, m_max=6)
        if cs.m == 0:
            continue
        w = rng.standard_normal(cs.m) * 10
        v1 = search_direction(cs, metric, g).direction_v
        v2 = search_direction(cs, metric, g + cs.a_matrix.T @ w).direction_v
        scale = np.max(np.abs(g)) + np.max(np.abs(cs.a_matrix.T @ w))
        assert np.max(np.abs(v1 - v2)) <= 1e-10 * scale * np.max(metric.h_inv_diag)


def test_zero_direction_iff_gradient_in_row_space(rng):
    for _ in range(30):
        cs, x, metric, _ = random_instance(rng, m_max=5)
        if cs.m == 0:
            continue
        g = cs.a_matrix.T @ rng.standard_normal(cs.m)
        assert np.linalg.norm(search_direction(cs, metric, g).direction_v) <= 1e-8
        g_off = g + rng.standard_normal(cs.n)
        assert np.linalg.norm(search_direction(cs, metric, g_off).direction_v) > 1e-8


@given(st.integers(1, 6), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_block_fast_path_matches_dense_solve(blocks, size, seed):
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(blocks), size)
    x = rng.uniform(0.01, 1.0, labels.size)
    demands = np.bincount(labels, weights=x)
    cs = ConstraintSystem.from_blocks(labels, demands)
    metric = metric_at(make_gibbs(0.5), x)
    g = rng.standard_normal(labels.size)
    y_fast = dual_variable(cs, metric, g)
    a = cs.a_matrix
    y_dense = np.linalg.solve((a * metric.h_inv_diag) @ a.T, (a * metric.h_inv_diag) @ g)
    np.testing.assert_allclose(y_fast, y_dense, rtol=1e-10, atol=1e-12)


def test_angle_identity_defect_is_at_rounding_level(rng):
    for _ in range(50):
        cs, x, metric, g = random_instance(rng)
        geo = search_direction(cs, metric, g)
        defect, scale = angle_identity_defect(cs, metric, g, geo)
        assert scale >= geo.v_norm_x_sq
        assert defect <= 1e-12 * scale
