import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from dstorm.agd import (
    AgdState,
    CoefficientSchedule,
    NonFiniteGradientError,
    a_lower_bound,
    agd_step,
    next_alpha,
    run_agd,
    theoretical_bound,
)


def test_next_alpha_start_unit_smoothness():
    assert_allclose(next_alpha(0.0, 1.0, 0.0), 1.0)


def test_next_alpha_start_is_inverse_smoothness():
    for L in (0.5, 1.0, 4.0, 100.0):
        for mu in (0.0, 0.1, 1.0):
            assert_allclose(next_alpha(0.0, L, mu), 1.0 / L)


def test_next_alpha_hand_value():
    a = next_alpha(0.25, 4.0, 1.0)
    assert_allclose(a, (1.25 + math.sqrt(6.5625)) / 8.0)
    assert_allclose(a, 0.476467, atol=1e-5)
    # substituting back satisfies the defining quadratic
    lhs = (0.25 + a) * (1.0 + 0.25 * 1.0)
    assert abs(lhs - 4.0 * a * a) <= 1e-12 * 4.0 * a * a


def test_next_alpha_rejects_bad_L():
    with pytest.raises(ValueError):
        next_alpha(0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        next_alpha(0.0, -1.0, 0.0)


def test_recurrence_residual_invariant():
    for L, mu in ((1.0, 0.1), (10.0, 0.01), (4.0, 2.0)):
        coeffs = CoefficientSchedule(L, mu)
        coeffs.extend_to(200)
        for k in range(200):
            a = coeffs.alpha(k + 1)
            lhs = (coeffs.A(k) + a) * (1.0 + coeffs.A(k) * mu)
            rhs = L * a * a
            assert abs(lhs - rhs) <= 1e-10 * rhs


def test_A_sequence_strictly_increasing():
    coeffs = CoefficientSchedule(2.0, 0.5)
    coeffs.extend_to(50)
    As = [coeffs.A(k) for k in range(51)]
    assert all(b > a for a, b in zip(As, As[1:]))


def test_coefficient_growth_and_sum_ratio():
    for kappa in (10.0, 100.0, 1000.0):
        L, mu = float(kappa), 1.0
        coeffs = CoefficientSchedule(L, mu)
        coeffs.extend_to(1000)
        running_sum = 0.0
        for N in range(1, 1001):
            running_sum += coeffs.A(N)
            assert coeffs.A(N) >= a_lower_bound(N, L, mu)
            assert running_sum / coeffs.A(N) <= 1.0 + math.sqrt(L / mu)


def test_a_lower_bound_closed_forms():
    assert_allclose(a_lower_bound(1, 7.0, 1.0), 1.0 / 7.0)
    # L = mu: (1/L) (3/2)^{2(N-1)}
    assert_allclose(a_lower_bound(4, 2.0, 2.0), 0.5 * 1.5**6)


def test_agd_first_step_extrapolation_collapses():
    coeffs = CoefficientSchedule(2.0, 0.5)
    x0 = np.array([1.0, -2.0])
    state = AgdState.initial(x0)
    out = agd_step(state, coeffs, lambda y, r, rng: np.zeros(2), 1, np.random.default_rng(0))
    assert_allclose(out.y, x0, atol=0)  # A^0 = 0 forces weight 1 on u^0


def test_agd_mu_zero_noise_free_update():
    L = 3.0
    coeffs = CoefficientSchedule(L, 0.0)
    grad = lambda y, r, rng: 2.0 * y  # f(x) = ||x||^2, L_f = 2  # noqa: E731
    state = AgdState.initial(np.array([1.0, 1.0]))
    nxt = agd_step(state, coeffs, grad, 1, np.random.default_rng(0))
    alpha = coeffs.alpha(1)
    assert_allclose(nxt.u, state.u - 0.5 * alpha * grad(nxt.y, 1, None), atol=1e-15)


def test_agd_non_finite_gradient_aborts_with_state():
    coeffs = CoefficientSchedule(1.0, 0.0)
    state = AgdState.initial(np.zeros(2))
    with pytest.raises(NonFiniteGradientError) as excinfo:
        agd_step(state, coeffs, lambda y, r, rng: np.array([np.nan, 0.0]), 1,
                 np.random.default_rng(0))
    assert excinfo.value.state is state


def test_agd_quadratic_converges_under_bound():
    # 1-d f(x) = x^2/2, exact oracle, x0 = 1.  The expected-suboptimality
    # bound requires slack between mu and L: at mu = L the proof chain
    # drops a positive (mu/2) sum over extrapolation points and the stated
    # bound is violated (gap/bound reaches 1.11 by N = 3 for L = mu = 1).
    # All decentralized instantiations use mu/L = 1/(4 kappa_g) <= 1/4;
    # mu = L/2 is tested here as the boundary of the verified regime.
    coeffs = CoefficientSchedule(1.0, 0.5)
    grad = lambda y, r, rng: y  # noqa: E731
    states = run_agd(np.array([1.0]), coeffs, grad, 50)
    f = lambda x: 0.5 * float(x @ x)  # noqa: E731
    prev = np.inf
    for N in range(1, 51):
        gap = f(states[N].x)
        bound = theoretical_bound(N, R_sq=1.0, sigma_sq=0.0, L=1.0, mu=0.5, r_list=1)
        assert gap <= bound + 1e-15
        assert gap <= prev + 1e-15  # monotone decrease on this instance
        prev = gap


def test_theoretical_bound_single_iteration():
    # N=1: bound = L R^2 + sigma^2/(2 L r) + delta
    val = theoretical_bound(1, R_sq=2.0, sigma_sq=0.5, L=4.0, mu=1.0,
                            r_list=[5], delta_list=[0.1])
    assert_allclose(val, 4.0 * 2.0 + 0.5 / (2.0 * 4.0 * 5.0) + 0.1)


def test_theoretical_bound_noiseless_is_rate_term():
    coeffs = CoefficientSchedule(3.0, 0.3)
    coeffs.extend_to(20)
    val = theoretical_bound(20, R_sq=1.7, sigma_sq=0.0, L=3.0, mu=0.3, r_list=1)
    assert_allclose(val, 1.7 / coeffs.A(20), rtol=1e-12)


def test_theoretical_bound_monotone_in_batch():
    lo = theoretical_bound(10, 1.0, 1.0, 2.0, 0.1, r_list=[1] * 10)
    hi = theoretical_bound(10, 1.0, 1.0, 2.0, 0.1, r_list=[10] * 10)
    assert hi < lo


def test_iterates_are_convex_combinations():
    coeffs = CoefficientSchedule(5.0, 0.5)
    grad = lambda y, r, rng: y - 3.0  # noqa: E731
    states = run_agd(np.array([0.0]), coeffs, grad, 30)
    for k in range(1, 31):
        alpha = coeffs.alpha(k)
        A_prev, A_cur = coeffs.A(k - 1), coeffs.A(k)
        w1, w2 = alpha / A_cur, A_prev / A_cur
        assert abs(w1 + w2 - 1.0) <= 1e-12
        y_expect = w1 * states[k - 1].u + w2 * states[k - 1].x
        x_expect = w1 * states[k].u + w2 * states[k - 1].x
        assert_allclose(states[k].y, y_expect, atol=1e-12)
        assert_allclose(states[k].x, x_expect, atol=1e-12)
