import math

import numpy as np
import pytest
import scipy.linalg
import scipy.signal
from hypothesis import given
from hypothesis import strategies as st

from buckboost.controllers import (
    AnalogType3,
    ControllerState,
    Digital2p2z,
    OpenLoop,
    Variant,
    bilinear_2p2z,
    design_defaults,
    digital_2p2z_update,
    digital_transfer,
    open_loop_duty,
    type3_duty,
    type3_matrices,
    type3_transfer,
    type3_update,
)
from buckboost.converter import ConverterParams

LARGE = ConverterParams(vin=2.5, l=1e-6, c=22e-6, r_l=8e-2, r_esr=60e-3, r_load=10.0)
SMALL = ConverterParams(vin=2.5, l=280e-9, c=250e-9, r_l=0.5, r_esr=1e-4, r_load=10.0)


def test_open_loop_duty_is_constant():
    spec = OpenLoop(d=0.5644599303135889)
    assert open_loop_duty(spec, 0).d == open_loop_duty(spec, 10**6).d == 0.5644599303135889
    assert open_loop_duty(OpenLoop(d=0.3932038834951456), 7).d == 0.3932038834951456


def test_type3_zero_input_stays_zero():
    spec = design_defaults(LARGE, Variant.ANALOG_TYPE3)
    state = ControllerState()
    for _ in range(100):
        state, y = type3_update(spec, state, spec.v_ref, 1e-9)
        assert y == 0.0
    assert state.analog == (0.0, 0.0, 0.0)


def test_type3_realization_matches_transfer_function():
    spec = design_defaults(LARGE, Variant.ANALOG_TYPE3)
    a, b, c = type3_matrices(spec)
    for w in (1e3, 2e5, 1e6, 3e7):
        s = 1j * w
        ss = c @ np.linalg.solve(s * np.eye(3) - a, b)
        assert ss == pytest.approx(type3_transfer(spec, s), rel=1e-9)


def test_type3_step_response_against_lti_oracle():
    spec = AnalogType3(k=2e4, wz1=1e5, wz2=2e5, wp1=1e6, wp2=5e6, v_ref=1.0)
    num = np.polymul([1 / spec.wz1, 1], [1 / spec.wz2, 1]) * spec.k
    den = np.polymul([1, 0], np.polymul([1 / spec.wp1, 1], [1 / spec.wp2, 1]))
    t = np.linspace(0, 20e-6, 2001)
    _, y_ref = scipy.signal.step((num, den), T=t)
    state, ys = ControllerState(), [0.0]
    for dt in np.diff(t):
        state, y = type3_update(spec, state, 0.0, dt)  # error = v_ref - 0 = 1
        ys.append(y)
    np.testing.assert_allclose(ys, y_ref, rtol=1e-6, atol=1e-9 * np.abs(y_ref).max())
    # integrator slope is k
    assert state.analog[0] == pytest.approx(spec.k * t[-1], rel=1e-9)


def test_analog_design_corner_frequencies():
    spec = design_defaults(LARGE, Variant.ANALOG_TYPE3)
    assert spec.wz1 == pytest.approx(2.1320071635561043e5, rel=1e-12)
    assert spec.wz2 == spec.wz1
    assert spec.wp1 == pytest.approx(7.575757575757576e5, rel=1e-12)
    assert spec.wp2 == pytest.approx(math.pi * 50e6, rel=1e-12)


def test_analog_design_crossover():
    from buckboost.controllers import control_to_output, duty_for_ratio

    spec = design_defaults(LARGE, Variant.ANALOG_TYPE3)
    s = 2j * math.pi * 100e3
    d = duty_for_ratio(LARGE.vin, 3.24)
    assert abs(type3_transfer(spec, s) * control_to_output(LARGE, d, s)) == pytest.approx(1.0, rel=1e-9)


def test_esr_pole_above_nyquist_is_capped():
    spec = design_defaults(SMALL, Variant.ANALOG_TYPE3)
    assert spec.wp1 == spec.wp2 == pytest.approx(math.pi * SMALL.f_sw)


@pytest.mark.parametrize("params", [LARGE, SMALL, LARGE.replace(vin=5.0), SMALL.replace(vin=5.0)])
def test_digital_design_has_exact_integrator(params):
    spec = design_defaults(params, Variant.DIGITAL_2P2Z)
    assert abs(1.0 + spec.a1 + spec.a2) <= 1e-12


def test_bilinear_matches_scipy():
    k, wz1, wz2, wp, fs = 3e4, 2.1e5, 3e5, 1.5e8, 50e6
    b_ours = bilinear_2p2z(k, wz1, wz2, wp, fs)
    num = k * np.polymul([1 / wz1, 1], [1 / wz2, 1])
    den = np.polymul([1, 0], [1 / wp, 1])
    bz, az = scipy.signal.bilinear(num, den, fs)
    bz, az = bz / az[0], az / az[0]
    np.testing.assert_allclose(b_ours[:3], bz, rtol=1e-9)
    np.testing.assert_allclose(b_ours[3:], az[1:], rtol=1e-9, atol=1e-12)


def test_digital_tracks_analog_response_below_nyquist():
    analog = design_defaults(SMALL, Variant.ANALOG_TYPE3)
    digital = design_defaults(SMALL, Variant.DIGITAL_2P2Z)
    fs = SMALL.f_sw
    for f in (1e4, 1e5, 1e6):
        w = 2 * math.pi * f
        z = np.exp(1j * w / fs)
        # analog law without the pole the sampling supplies
        ref = type3_transfer(analog, 1j * w) * (1 + 1j * w / analog.wp2)
        assert abs(digital_transfer(digital, z)) == pytest.approx(abs(ref), rel=0.02)


def test_2p2z_zero_error_from_rest_clamps_to_floor():
    spec = Digital2p2z(b0=0.3, b1=-0.5, b2=0.2, a1=-0.8, a2=-0.2)
    state, cmd = digital_2p2z_update(spec, ControllerState(), spec.v_ref)
    assert cmd.d == spec.d_min
    assert state.errors == (0.0, 0.0)


def test_2p2z_accumulator_ramp():
    spec = Digital2p2z(b0=1.0, b1=0.0, b2=0.0, a1=-1.0, a2=0.0, d_min=1e-6, v_ref=1.0)
    state = ControllerState()
    for n in range(60):
        state, cmd = digital_2p2z_update(spec, state, 0.99)
        expected = min(0.01 * (n + 1), spec.d_max)
        assert cmd.d == pytest.approx(expected, abs=1e-12)


def test_2p2z_impulse_response_default_design():
    d = design_defaults(SMALL, Variant.DIGITAL_2P2Z)
    spec = Digital2p2z(b0=d.b0, b1=d.b1, b2=d.b2, a1=d.a1, a2=d.a2, v_ref=1.0)
    state = ControllerState()
    outs = []
    for v in (0.0, 1.0, 1.0):  # e = 1, 0, 0
        state, _ = digital_2p2z_update(spec, state, v)
        outs.append(state.outputs[0])
    assert outs[0] == pytest.approx(d.b0, rel=1e-15)
    # the raw second term b1 - a1*b0 is negative for this design, so the
    # stored value is the clamp floor and the third term continues from it
    raw1 = d.b1 - d.a1 * d.b0
    assert raw1 < spec.d_min and outs[1] == spec.d_min
    raw2 = d.b2 - d.a1 * spec.d_min - d.a2 * d.b0
    assert outs[2] == pytest.approx(min(max(raw2, spec.d_min), spec.d_max), rel=1e-14)


def test_2p2z_impulse_response_unclamped_coefficients():
    spec = Digital2p2z(b0=0.3, b1=0.1, b2=0.05, a1=-1.2, a2=0.2, v_ref=1.0, d_min=1e-9, d_max=0.999)
    state, seq = ControllerState(), []
    for v in (0.0, 1.0, 1.0):
        state, cmd = digital_2p2z_update(spec, state, v)
        seq.append(cmd.d)
    u0 = 0.3
    u1 = 0.1 + 1.2 * u0
    u2 = 0.05 + 1.2 * u1 - 0.2 * u0
    assert seq == pytest.approx([u0, u1, u2], rel=1e-14)


def test_spec_validation():
    with pytest.raises(ValueError):
        Digital2p2z(b0=1, b1=0, b2=0, a1=-0.5, a2=0.0)
    with pytest.raises(ValueError):
        AnalogType3(k=1, wz1=10, wz2=5, wp1=100, wp2=200)
    with pytest.raises(ValueError):
        OpenLoop(d=0.99)


@given(st.floats(-50, 50))
def test_type3_duty_is_bounded(y):
    spec = design_defaults(LARGE, Variant.ANALOG_TYPE3)
    d = type3_duty(spec, y).d
    assert spec.d_min <= d <= spec.d_max


@given(st.lists(st.floats(-5.0, 10.0), min_size=1, max_size=80), st.integers(0, 10))
def test_digital_duty_bounded_and_state_bounded(samples, bits):
    spec = design_defaults(SMALL, Variant.DIGITAL_2P2Z, resolution_bits=bits)
    state = ControllerState()
    e_max = max(abs(spec.v_ref - v) for v in samples)
    for v in samples:
        state, cmd = digital_2p2z_update(spec, state, v)
        assert spec.d_min <= cmd.d <= spec.d_max
        assert abs(state.outputs[0]) <= spec.d_max + abs(spec.b0) * e_max


def test_digital_regulates_averaged_plant():
    """Closed loop against the averaged plant: the error decays to zero."""
    spec = design_defaults(SMALL, Variant.DIGITAL_2P2Z, soft_start=0.0)
    p = SMALL
    T = p.period
    a_on = lambda d: np.array(  # noqa: E731
        [[-p.r_l / p.l, -(1 - d) / p.l], [(1 - d) / p.c, -1 / (p.r_load * p.c)]]
    )
    x = np.zeros(2)
    state = ControllerState()
    for _ in range(20000):
        state, cmd = digital_2p2z_update(spec, state, x[1])
        d = cmd.d
        a = a_on(d)
        b = np.array([d * p.vin / p.l, 0.0])
        m = np.zeros((3, 3))
        m[:2, :2], m[:2, 2] = a * T, b * T
        e = scipy.linalg.expm(m)
        x = e[:2, :2] @ x + e[:2, 2]
    assert x[1] == pytest.approx(spec.v_ref, abs=1e-6)
