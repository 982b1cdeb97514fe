"""Duty-cycle controllers: fixed duty, analog Type-III, digital 2p2z.

Controller specs are immutable values.  The analog compensator is a
continuous-time system that the engine co-simulates with the plant; the
digital one is a difference equation evaluated once per switching period.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from typing import Union

import numpy as np

from .converter import AffineSystem, ConverterParams, Phase, output_row
from .pwm import D_MAX, D_MIN, DutyCommand, clamp, duty_for_ratio, quantize_duty

V_REF = 3.24


class Variant(enum.Enum):
    OPEN_LOOP = "open"
    ANALOG_TYPE3 = "analog"
    DIGITAL_2P2Z = "digital"


def _check_common(spec) -> None:
    if not spec.v_ref > 0:
        raise ValueError(f"v_ref must be > 0, got {spec.v_ref!r}")
    if not 0 < spec.d_min <= spec.d_max < 1:
        raise ValueError("duty limits must satisfy 0 < d_min <= d_max < 1")
    if getattr(spec, "soft_start", 0.0) < 0:
        raise ValueError("soft_start must be >= 0")


def reference_at(spec, t: float) -> float:
    """Reference voltage at time ``t``, ramped linearly over ``spec.soft_start``."""
    ramp = getattr(spec, "soft_start", 0.0)
    if ramp <= 0 or t >= ramp:
        return spec.v_ref
    return spec.v_ref * t / ramp


@dataclasses.dataclass(frozen=True)
class OpenLoop:
    d: float
    v_ref: float = V_REF
    d_min: float = D_MIN
    d_max: float = D_MAX

    variant = Variant.OPEN_LOOP

    def __post_init__(self):
        _check_common(self)
        if not self.d_min <= self.d <= self.d_max:
            raise ValueError(f"d must lie in [{self.d_min}, {self.d_max}], got {self.d!r}")


@dataclasses.dataclass(frozen=True)
class AnalogType3:
    """``Gc(s) = k (1 + s/wz1)(1 + s/wz2) / (s (1 + s/wp1)(1 + s/wp2))``; duty = output / v_ramp."""

    k: float
    wz1: float
    wz2: float
    wp1: float
    wp2: float
    v_ramp: float = 1.0
    v_ref: float = V_REF
    d_min: float = D_MIN
    d_max: float = D_MAX
    soft_start: float = 0.0

    variant = Variant.ANALOG_TYPE3

    def __post_init__(self):
        _check_common(self)
        if not self.k > 0:
            raise ValueError(f"k must be > 0, got {self.k!r}")
        if not 0 < self.wz1 <= self.wz2 < self.wp1 <= self.wp2:
            raise ValueError("Type-III corners must satisfy 0 < wz1 <= wz2 < wp1 <= wp2")
        if not self.v_ramp > 0:
            raise ValueError(f"v_ramp must be > 0, got {self.v_ramp!r}")


@dataclasses.dataclass(frozen=True)
class Digital2p2z:
    """``u[n] = b0 e[n] + b1 e[n-1] + b2 e[n-2] - a1 u[n-1] - a2 u[n-2]``; ``u`` is the duty."""

    b0: float
    b1: float
    b2: float
    a1: float
    a2: float
    resolution_bits: int = 0
    v_ref: float = V_REF
    d_min: float = D_MIN
    d_max: float = D_MAX
    adc_bits: int = 0
    adc_full_scale: float = 5.0
    soft_start: float = 0.0

    variant = Variant.DIGITAL_2P2Z

    def __post_init__(self):
        _check_common(self)
        coeffs = (self.b0, self.b1, self.b2, self.a1, self.a2)
        if not all(math.isfinite(c) for c in coeffs):
            raise ValueError("2p2z coefficients must be finite")
        if abs(1.0 + self.a1 + self.a2) > 1e-9:
            raise ValueError("2p2z denominator must contain an integrator (1 + a1 + a2 == 0)")
        if self.resolution_bits < 0 or self.adc_bits < 0:
            raise ValueError("resolution_bits and adc_bits must be >= 0")


ControllerSpec = Union[OpenLoop, AnalogType3, Digital2p2z]


@dataclasses.dataclass(frozen=True)
class ControllerState:
    analog: tuple[float, float, float] = (0.0, 0.0, 0.0)
    errors: tuple[float, float] = (0.0, 0.0)  # e[n-1], e[n-2]
    outputs: tuple[float, float] = (0.0, 0.0)  # u[n-1], u[n-2]


def open_loop_duty(spec: OpenLoop, n: int) -> DutyCommand:
    return DutyCommand(spec.d, 0, spec.d_min, spec.d_max)


# ---------------------------------------------------------------- analog


def type3_matrices(spec: AnalogType3) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """State-space ``(A, B, C)`` of the compensator driven by the error.

    Cascade realization: an integrator followed by two lead-lag sections.
    State 0 is the integrator, states 1 and 2 are the lag states of the
    sections with poles ``wp1`` and ``wp2``.
    """
    r1 = spec.wp1 / spec.wz1
    r2 = spec.wp2 / spec.wz2
    a = np.array(
        [
            [0.0, 0.0, 0.0],
            [spec.wp1, -spec.wp1, 0.0],
            [spec.wp2 * r1, spec.wp2 * (1.0 - r1), -spec.wp2],
        ]
    )
    b = np.array([spec.k, 0.0, 0.0])
    c = np.array([r2 * r1, r2 * (1.0 - r1), 1.0 - r2])
    return a, b, c


def type3_output(spec: AnalogType3, state: ControllerState) -> float:
    _, _, c = type3_matrices(spec)
    return float(c @ np.asarray(state.analog))


def type3_duty(spec: AnalogType3, control_voltage: float) -> DutyCommand:
    return DutyCommand(clamp(control_voltage / spec.v_ramp, spec.d_min, spec.d_max), 0, spec.d_min, spec.d_max)


def type3_update(spec: AnalogType3, state: ControllerState, v_out: float, dt: float) -> tuple[ControllerState, float]:
    """Advance the compensator by one RK4 step with the error held at ``v_ref - v_out``."""
    from .integrators import rk4_step

    a, b, c = type3_matrices(spec)
    e = spec.v_ref - v_out
    z = rk4_step(AffineSystem(a, b * e), np.asarray(state.analog, dtype=float), dt)
    new = dataclasses.replace(state, analog=tuple(float(v) for v in z))
    return new, float(c @ z)


def type3_transfer(spec: AnalogType3, s):
    return (
        spec.k
        * (1 + s / spec.wz1)
        * (1 + s / spec.wz2)
        / (s * (1 + s / spec.wp1) * (1 + s / spec.wp2))
    )


# ---------------------------------------------------------------- digital


def _adc(spec: Digital2p2z, v: float) -> float:
    if spec.adc_bits == 0:
        return v
    lsb = spec.adc_full_scale / (1 << spec.adc_bits)
    code = min(max(math.floor(v / lsb + 0.5), 0), (1 << spec.adc_bits) - 1)
    return code * lsb


def digital_2p2z_update(
    spec: Digital2p2z, state: ControllerState, v_out_sampled: float, v_ref: float | None = None
) -> tuple[ControllerState, DutyCommand]:
    e = (spec.v_ref if v_ref is None else v_ref) - _adc(spec, v_out_sampled)
    e1, e2 = state.errors
    u1, u2 = state.outputs
    u = spec.b0 * e + spec.b1 * e1 + spec.b2 * e2 - spec.a1 * u1 - spec.a2 * u2
    # anti-windup: the clamped value is what the recurrence remembers
    u = clamp(u, spec.d_min, spec.d_max)
    new = dataclasses.replace(state, errors=(e, e1), outputs=(u, u1))
    d = clamp(quantize_duty(u, spec.resolution_bits), spec.d_min, spec.d_max)
    return new, DutyCommand(d, spec.resolution_bits, spec.d_min, spec.d_max)


def bilinear_2p2z(k: float, wz1: float, wz2: float, wp: float, fs: float) -> tuple[float, ...]:
    """Tustin map of ``k (1 + s/wz1)(1 + s/wz2) / (s (1 + s/wp))`` at sample rate ``fs``.

    Returns ``(b0, b1, b2, a1, a2)``.  The pole at the origin maps to ``z = 1``
    and is kept exact by building the denominator as ``(1 - z^-1)(1 + p z^-1)``.
    """
    kk = 2.0 * fs
    # (1 + s/w) (1 + z^-1) = (1 + kk/w) + (1 - kk/w) z^-1
    n1 = (1 + kk / wz1, 1 - kk / wz1)
    n2 = (1 + kk / wz2, 1 - kk / wz2)
    num = (n1[0] * n2[0], n1[0] * n2[1] + n1[1] * n2[0], n1[1] * n2[1])
    lead = kk * (1 + kk / wp)
    p = (1 - kk / wp) / (1 + kk / wp)
    b0, b1, b2 = (k * coef / lead for coef in num)
    a1 = p - 1.0
    a2 = -1.0 - a1
    return b0, b1, b2, a1, a2


def digital_transfer(spec: Digital2p2z, z):
    zi = 1.0 / z
    return (spec.b0 + spec.b1 * zi + spec.b2 * zi**2) / (1 + spec.a1 * zi + spec.a2 * zi**2)


# ---------------------------------------------------------------- design


def control_to_output(params: ConverterParams, d: float, s, v_out: float | None = None):
    """Small-signal duty-to-output response of the averaged power stage."""
    if v_out is None:
        v_out = params.vin * d / (1 - d)
    dp = 1.0 - d
    i_l = v_out / (params.r_load * dp)
    r_eff = d * params.r_on_path + dp * params.r_off_path
    drive = params.vin + v_out - (params.r_on_path - params.r_off_path) * i_l
    z_l = params.l * s + r_eff
    num = drive * dp - z_l * i_l
    den = z_l * (params.c * s + 1.0 / params.r_load) + dp * dp
    esr_zero = 1.0 + s * params.r_esr * params.c
    return num / den * esr_zero


def design_defaults(
    params: ConverterParams,
    variant: Variant | str,
    v_ref: float = V_REF,
    crossover: float | None = None,
    resolution_bits: int = 0,
    soft_start: float | None = None,
) -> ControllerSpec:
    """Default compensator placed from the power-stage values.

    Both zeros sit at the LC resonance, the poles at the ESR zero and at
    ``pi * f_sw`` (the ESR pole is capped there), and the gain puts the loop crossover at ``f_sw / 500``
    (against the averaged small-signal plant at the ideal operating duty).
    The digital law drops the ``pi * f_sw`` pole, which the sampling already
    provides, and maps the rest with the bilinear transform.  Unless given,
    the reference soft-start lasts 20 LC time constants ``sqrt(l*c)``.
    """
    variant = Variant(variant)
    d_op = duty_for_ratio(params.vin, v_ref)
    if variant is Variant.OPEN_LOOP:
        return OpenLoop(d=d_op, v_ref=v_ref)

    w0 = 1.0 / math.sqrt(params.l * params.c)
    w_esr = 1.0 / (params.r_esr * params.c) if params.r_esr > 0 else math.inf
    w_nyq = math.pi * params.f_sw
    # a compensator pole above the sampling Nyquist band has no effect
    wp1, wp2 = sorted((min(w_esr, w_nyq), w_nyq))
    wc = 2 * math.pi * (crossover if crossover is not None else params.f_sw / 500)

    if soft_start is None:
        soft_start = 20.0 * math.sqrt(params.l * params.c)
    unit = AnalogType3(k=1.0, wz1=w0, wz2=w0, wp1=wp1, wp2=wp2, v_ref=v_ref, soft_start=soft_start)
    loop = abs(type3_transfer(unit, 1j * wc) * control_to_output(params, d_op, 1j * wc, v_ref)) / unit.v_ramp
    k = 1.0 / loop
    analog = dataclasses.replace(unit, k=k)
    if variant is Variant.ANALOG_TYPE3:
        return analog
    coeffs = bilinear_2p2z(k * analog.v_ramp, w0, w0, wp1, params.f_sw)
    return Digital2p2z(*coeffs, resolution_bits=resolution_bits, v_ref=v_ref, soft_start=soft_start)


# ---------------------------------------------------------------- engine hooks


class ControllerRuntime:
    """Per-run controller driver used by the simulation engine.

    ``extra_states`` is the number of continuous states appended to the plant
    state vector; ``augment`` builds the joint affine system for a phase and
    ``period_start`` returns the duty latched for the coming period.  ``mode``
    is a hashable tag for the current ``augment`` variant, so the engine can
    cache the systems it builds.
    """

    extra_states = 0

    def __init__(self, spec):
        self.spec = spec
        self.state = ControllerState()
        self.mode = None

    def initial(self) -> np.ndarray:
        return np.zeros(self.extra_states)

    def augment(self, params: ConverterParams, phase: Phase, sys: AffineSystem) -> AffineSystem:
        return sys

    def period_start(self, n: int, x: np.ndarray, params: ConverterParams) -> DutyCommand:
        raise NotImplementedError


class _OpenLoopRuntime(ControllerRuntime):
    def period_start(self, n, x, params):
        return open_loop_duty(self.spec, n)


class _AnalogRuntime(ControllerRuntime):
    """Type-III compensator co-simulated with the plant.

    The integrator stops for a period when the output is saturated and the
    error would drive it further into saturation (conditional integration).
    """

    extra_states = 3

    def __init__(self, spec):
        super().__init__(spec)
        self._a, self._b, self._c = type3_matrices(spec)
        self.mode = (False, reference_at(spec, 0.0))  # (integrator frozen, reference)

    def augment(self, params, phase, sys):
        row = output_row(params, phase)
        a = np.zeros((5, 5))
        a[:2, :2] = sys.a
        a[2:, 2:] = self._a
        b = np.concatenate([sys.b, np.zeros(3)])
        frozen, v_ref = self.mode
        if not frozen:
            a[2:, :2] = -np.outer(self._b, row)
            b[2:] = self._b * v_ref
        return AffineSystem(a, b)

    def period_start(self, n, x, params):
        y = float(self._c @ x[2:])
        d = y / self.spec.v_ramp
        v_ref = reference_at(self.spec, n * params.period)
        e = v_ref - x[1] * params.r_load / (params.r_load + params.r_esr)
        frozen = (d > self.spec.d_max and e > 0) or (d < self.spec.d_min and e < 0)
        self.mode = (frozen, v_ref)
        self._x = x
        return type3_duty(self.spec, y)

    @property
    def state(self) -> ControllerState:
        return ControllerState(analog=tuple(float(v) for v in self._x[2:]))

    @state.setter
    def state(self, value: ControllerState):
        self._x = np.concatenate([np.zeros(2), value.analog])


class _DigitalRuntime(ControllerRuntime):
    def period_start(self, n, x, params):
        v_out = float(output_row(params, Phase.ON) @ x[:2])
        v_ref = reference_at(self.spec, n * params.period)
        self.state, cmd = digital_2p2z_update(self.spec, self.state, v_out, v_ref)
        return cmd


def make_runtime(spec: ControllerSpec) -> ControllerRuntime:
    if isinstance(spec, OpenLoop):
        return _OpenLoopRuntime(spec)
    if isinstance(spec, AnalogType3):
        return _AnalogRuntime(spec)
    if isinstance(spec, Digital2p2z):
        return _DigitalRuntime(spec)
    raise TypeError(f"unknown controller spec {type(spec).__name__}")
