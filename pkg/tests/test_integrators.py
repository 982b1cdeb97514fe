import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from buckboost.converter import AffineSystem, StateVector
from buckboost.integrators import exact_propagator, exact_step, rk4_step


def test_rk4_constant_derivative_is_exact():
    sys = AffineSystem(np.zeros((2, 2)), np.array([1e6, 0.0]))
    assert rk4_step(sys, StateVector(0.0, 0.0), 1e-9) == pytest.approx((1e-3, 0.0), abs=1e-18)


def test_rk4_decay_matches_fourth_order_series():
    sys = AffineSystem(np.array([[-1e6, 0.0], [0.0, 0.0]]), np.zeros(2))
    i_l, v_c = rk4_step(sys, StateVector(1.0, 0.0), 1e-7)
    # one RK4 step of x' = -x/tau with h/tau = 0.1 gives 1 - z + z^2/2 - z^3/6 + z^4/24 at z = 0.1
    assert i_l == pytest.approx(0.9048375, abs=1e-12)
    assert abs(i_l - np.exp(-0.1)) < 1e-7
    assert v_c == 0.0


def test_rk4_rejects_non_positive_step():
    sys = AffineSystem(np.zeros((2, 2)), np.zeros(2))
    with pytest.raises(ValueError):
        rk4_step(sys, StateVector(0.0, 0.0), 0.0)


def test_exact_zero_step_is_identity():
    sys = AffineSystem(np.array([[-3.0, 1.0], [-2.0, -1.0]]), np.array([4.0, 5.0]))
    assert exact_step(sys, StateVector(0.3, -0.7), 0.0) == StateVector(0.3, -0.7)


def test_exact_pure_integrator():
    sys = AffineSystem(np.zeros((2, 2)), np.array([2.5, 0.0]))
    assert exact_step(sys, StateVector(1.0, 2.0), 3e-3) == pytest.approx((1.0 + 7.5e-3, 2.0), rel=1e-15)


def test_exact_diagonal_decay():
    sys = AffineSystem(np.diag([-2e5, -7e4]), np.zeros(2))
    got = exact_step(sys, StateVector(1.5, -0.5), 1e-5)
    assert got == pytest.approx((1.5 * np.exp(-2.0), -0.5 * np.exp(-0.7)), rel=1e-14)


def test_exact_step_rejects_negative_time():
    sys = AffineSystem(np.zeros((2, 2)), np.zeros(2))
    with pytest.raises(ValueError):
        exact_step(sys, StateVector(0.0, 0.0), -1e-9)


def _expm_route(a, b, dt):
    n = a.shape[0]
    m = np.zeros((n + 1, n + 1))
    m[:n, :n] = a * dt
    m[:n, n] = b * dt
    e = scipy.linalg.expm(m)
    return e[:n, :n], e[:n, n]


mat_entry = st.floats(-5e7, 5e7)


@given(st.tuples(mat_entry, mat_entry, mat_entry, mat_entry), st.tuples(mat_entry, mat_entry), st.floats(1e-11, 1e-8))
def test_closed_form_matches_augmented_expm(entries, b, dt):
    a = np.array(entries).reshape(2, 2)
    b = np.array(b)
    phi, gam = exact_propagator(a, b, dt)
    phi_ref, gam_ref = _expm_route(a, b, dt)
    assert np.allclose(phi, phi_ref, rtol=1e-9, atol=1e-9 * np.abs(phi_ref).max())
    assert np.allclose(gam, gam_ref, rtol=1e-9, atol=1e-9 * (np.abs(gam_ref).max() + np.abs(b).max() * dt))


@pytest.mark.parametrize(
    "a",
    [
        np.array([[-1e6, 1.0], [0.0, -1e6]]),  # defective
        np.array([[-1e6, 0.0], [0.0, -1e6 * (1 + 1e-9)]]),  # nearly repeated
        np.array([[0.0, -3.5e6], [3.5e6, 0.0]]),  # undamped oscillator
    ],
)
def test_closed_form_special_spectra(a):
    b = np.array([1e6, -2e5])
    phi, gam = exact_propagator(a, b, 3.125e-10)
    phi_ref, gam_ref = _expm_route(a, b, 3.125e-10)
    np.testing.assert_allclose(phi, phi_ref, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(gam, gam_ref, rtol=1e-10, atol=1e-18)


@given(st.floats(-1e7, 0.0), st.floats(-1.0, 1.0), st.floats(1e-10, 1e-8))
def test_rk4_agrees_with_exact_on_small_steps(lam, x0, dt):
    sys = AffineSystem(np.array([[lam, 0.0], [1e5, -1e5]]), np.array([3e4, 0.0]))
    r = np.array(rk4_step(sys, StateVector(x0, 0.0), dt))
    e = np.array(exact_step(sys, StateVector(x0, 0.0), dt))
    z = max(abs(lam), 1e5) * dt
    assert np.allclose(r, e, atol=(z**5) * (abs(x0) + 1.0) + 1e-15)
