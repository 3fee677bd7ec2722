import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hessbar.errors import ConfigurationError, InteriorityError
from hessbar.kernels import (
    DiagonalMetric,
    KernelMap,
    kernel_from_dict,
    kernel_sandwich_ok,
    make_burg,
    make_gibbs,
    make_mixture,
    make_tsallis,
    metric_at,
    steep_at_zero,
    with_working_range,
)


def all_kernels(beta=0.0, upper=1.0):
    return [
        make_gibbs(beta, upper),
        make_tsallis(beta, 1.5, upper),
        make_tsallis(beta, 1.1, upper),
        make_burg(beta, upper),
        make_mixture(beta, 0.5, upper),
        make_mixture(beta, 0.75, upper),
        make_mixture(beta, 1.0, upper),
    ]


KERNEL_IDS = ["gibbs", "tsallis1.5", "tsallis1.1", "burg", "mix0.5", "mix0.75", "mix1"]


# --- catalog values ---------------------------------------------------------


def test_gibbs_values():
    k = make_gibbs(0)
    assert float(k.theta(1.0)) == 0.0
    assert float(k.theta_second(0.5)) == 2.0
    assert k.omega == 0.5
    assert k.steepness_constants[0] == 1.0


def test_gibbs_big_m_matches_closed_form():
    k = make_gibbs(0.3, eps_range=0.25)
    assert k.steepness_constants == pytest.approx((1.0, 1.0 + 0.3 * 0.25))


def test_tsallis_values():
    k = make_tsallis(0, 1.5)
    assert float(k.theta_second(1.0)) == 1.0
    assert float(k.theta_second(4.0)) == 0.125
    assert k.omega == 1.0


@pytest.mark.parametrize("p", [1.0, 2.0, 0.5, 2.5])
def test_tsallis_rejects_p_outside_open_interval(p):
    with pytest.raises(ConfigurationError):
        make_tsallis(0, p)


def test_burg_values():
    assert float(make_burg(0).theta_second(1.0)) == 1.0
    assert float(make_burg(2).theta_second(0.5)) == 6.0
    assert make_burg(0).omega == 1.0


def test_mixture_values():
    t = np.array([0.1, 1.0, 10.0])
    np.testing.assert_array_equal(make_mixture(0, 0.5).theta_second(t), make_gibbs(0).theta_second(t))
    assert float(make_mixture(0, 1.0).theta_second(2.0)) == 0.25
    assert float(make_mixture(0, 0.75).theta_second(1.0)) == pytest.approx(1.0, rel=1e-15)


def test_mixture_middle_branch_second_derivative_by_differences():
    k = make_mixture(0, 0.75)
    h = 1e-6
    fd = (k.theta_prime(1.0 + h) - k.theta_prime(1.0 - h)) / (2 * h)
    assert fd == pytest.approx(1.0, rel=1e-8)


@pytest.mark.parametrize("gamma", [0.49, 1.01, 0.0])
def test_mixture_rejects_gamma(gamma):
    with pytest.raises(ConfigurationError):
        make_mixture(0, gamma)


def test_negative_beta_rejected():
    with pytest.raises(ConfigurationError):
        make_gibbs(-1.0)


def test_entropy_on_unit_range_has_beta_one():
    assert make_gibbs(0, 1.0).beta == 1.0
    assert make_gibbs(0, 1.0).epsilon == 1.0


def test_mixture_boundary_branches_shift_theta_by_affine_term():
    t = np.linspace(0.1, 3.0, 7)
    diff = make_mixture(0.2, 0.5).theta(t) - make_gibbs(0.2).theta(t)
    np.testing.assert_allclose(diff, -t, rtol=1e-13)
    np.testing.assert_allclose(make_mixture(0.2, 1.0).theta(t), make_burg(0.2).theta(t), rtol=1e-13)


# --- invariants ------------------------------------------------------------


@pytest.mark.parametrize("beta", [0.0, 0.5])
@pytest.mark.parametrize("kernel_index", range(7), ids=KERNEL_IDS)
def test_curvature_lower_bounds_over_grid(beta, kernel_index):
    upper = 1e3
    k = all_kernels(beta, upper)[kernel_index]
    t = np.logspace(-8, 3, 1000)
    h = k.theta_second(t)
    assert np.all(h > 0)
    assert np.all(h >= k.beta * (1 - 1e-12))
    assert np.all(t * h >= k.epsilon * (1 - 1e-12))


@pytest.mark.parametrize("kernel_index", range(7), ids=KERNEL_IDS)
def test_derivatives_agree_with_central_differences(kernel_index):
    k = all_kernels(0.7, 1.0)[kernel_index]
    t = np.logspace(-3, 3, 200)
    h = 1e-6 * t
    fd1 = (k.theta(t + h) - k.theta(t - h)) / (2 * h)
    fd2 = (k.theta_prime(t + h) - k.theta_prime(t - h)) / (2 * h)
    d1, d2 = k.theta_prime(t), k.theta_second(t)
    assert np.all(np.abs(d1 - fd1) <= 1e-6 * (1 + np.abs(d1)))
    assert np.all(np.abs(d2 - fd2) <= 1e-6 * (1 + np.abs(d2)))


@pytest.mark.parametrize("beta", [0.0, 2.0])
@pytest.mark.parametrize("kernel_index", range(7), ids=KERNEL_IDS)
def test_moderate_steepness_sandwich(beta, kernel_index):
    k = all_kernels(beta, 4.0)[kernel_index]
    s = np.linspace(k.eps_range / 100, k.eps_range * (1 - 1e-9), 100)
    assert np.all(kernel_sandwich_ok(k, s))


@pytest.mark.parametrize("kernel_index", range(7), ids=KERNEL_IDS)
def test_steep_at_zero(kernel_index):
    assert steep_at_zero(all_kernels()[kernel_index])


@given(st.floats(0.0, 10.0), st.floats(0.5, 1.0), st.floats(1e-6, 0.999))
def test_mixture_sandwich_property(beta, gamma, fraction):
    k = make_mixture(beta, gamma)
    assert kernel_sandwich_ok(k, np.array([fraction * k.eps_range]))[0]


@given(st.floats(0.0, 5.0), st.floats(1.01, 1.99), st.floats(1e-4, 1e2))
def test_tsallis_second_derivative_formula(beta, p, t):
    k = make_tsallis(beta, p)
    assert float(k.theta_second(t)) == pytest.approx(beta + t ** (-p), rel=1e-14)


# --- metric ----------------------------------------------------------------


def test_metric_examples():
    m = metric_at(make_gibbs(0), np.array([0.5, 0.25]))
    np.testing.assert_array_equal(m.h_diag, [2.0, 4.0])
    m = metric_at(make_burg(0), np.array([1.0, 0.1]))
    np.testing.assert_allclose(m.h_inv_diag, [1.0, 0.01], rtol=1e-15)


@given(st.lists(st.floats(1e-6, 1e3), min_size=1, max_size=20), st.sampled_from(range(7)))
def test_metric_inverse_identity(xs, kernel_index):
    k = all_kernels(0.3)[kernel_index]
    m = metric_at(k, np.array(xs))
    np.testing.assert_allclose(m.h_diag * m.h_inv_diag, 1.0, rtol=1e-14)


@pytest.mark.parametrize("bad", [0.0, -1e-3])
def test_metric_rejects_boundary(bad):
    with pytest.raises(InteriorityError):
        metric_at(make_gibbs(0), np.array([0.5, bad]))


def test_infinite_curvature_maps_to_zero_inverse():
    m = DiagonalMetric.from_diag(np.array([2.0, np.inf]))
    np.testing.assert_array_equal(m.h_inv_diag, [0.5, 0.0])
    # a subnormal coordinate overflows theta'' and follows the same convention
    m = metric_at(make_burg(0), np.array([1.0, 1e-310]))
    assert m.h_inv_diag[1] == 0.0


def test_per_coordinate_kernels():
    x = np.array([0.5, 0.5, 0.25])
    km = KernelMap([make_gibbs(0), make_burg(0), make_gibbs(0)])
    np.testing.assert_allclose(metric_at(km, x).h_diag, [2.0, 4.0, 4.0])
    assert km.omega == 1.0
    assert km.beta == 1.0


def test_kernel_dict_round_trip():
    for spec in ({"type": "gibbs", "beta": 0.0}, {"type": "tsallis", "beta": 0.1, "p": 1.5}, {"type": "mixture", "beta": 0, "gamma": 0.6}):
        k = kernel_from_dict(spec, 2.0)
        assert kernel_from_dict(k.to_dict(), 2.0).to_dict() == k.to_dict()
    with pytest.raises(ConfigurationError):
        kernel_from_dict({"type": "hellinger"})
    with pytest.raises(ConfigurationError):
        kernel_from_dict({"type": "tsallis", "beta": 0})


def test_working_range_changes_beta():
    k = with_working_range(make_burg(0.0), 4.0)
    assert k.beta == pytest.approx(1 / 16)
    assert k.epsilon == pytest.approx(0.25)
    assert math.isclose(k.eps_range, 0.5)
