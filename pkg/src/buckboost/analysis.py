"""Steady-state checks and transient metrics on simulated traces."""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .converter import ConverterParams, Phase
from .engine import Trace


class InsufficientDataError(ValueError):
    """The trace does not cover the span a measurement needs."""


def ideal_ratio(d: float) -> float:
    """Lossless conversion ratio ``vout/vin`` at duty ``d``."""
    if not 0 < d < 1:
        raise ValueError("duty must lie strictly between 0 and 1")
    return d / (1.0 - d)


@dataclasses.dataclass(frozen=True)
class SteadyStatePrediction:
    i_l_avg: float
    v_out_avg: float
    duty: float


def averaged_steady_state(params: ConverterParams, d: float) -> SteadyStatePrediction:
    """Equilibrium of the duty-weighted average of the two conduction topologies.

    Solves::

        d*vin = r_eff*i_l + (1-d)*v_out      (inductor volt-second balance)
        (1-d)*i_l = v_out / r_load           (capacitor charge balance)

    with ``r_eff`` the duty-weighted conduction resistance.  Dead-time and
    ESR are ignored.
    """
    if not 0 < d < 1:
        raise ValueError("duty must lie strictly between 0 and 1")
    dp = 1.0 - d
    r_eff = d * params.r_on_path + dp * params.r_off_path
    m = np.array([[r_eff, dp], [dp, -1.0 / params.r_load]])
    i_l, v_out = np.linalg.solve(m, [d * params.vin, 0.0])
    return SteadyStatePrediction(float(i_l), float(v_out), d)


def max_average_output(params: ConverterParams, d_max: float = 0.95, points: int = 20001) -> float:
    """Highest averaged output voltage reachable for any duty up to ``d_max``."""
    duties = np.linspace(1e-4, d_max, points)
    dp = 1.0 - duties
    r_eff = duties * params.r_on_path + dp * params.r_off_path
    v = duties * params.vin / (dp + r_eff / (params.r_load * dp))
    return float(v.max())


# ---------------------------------------------------------------- balances


def _inductor_voltage(params: ConverterParams, codes, i_l, v_c):
    k = params.r_load / (params.r_load + params.r_esr)
    on = params.vin - params.r_on_path * i_l
    v_out_off = (v_c + params.r_esr * i_l) * k
    off = -(params.r_off_path * i_l + v_out_off)
    dead = -(params.r_l * i_l + 2.0 * params.v_diode * np.sign(i_l) + v_out_off)
    return np.select([codes == Phase.ON.code, codes == Phase.OFF.code], [on, off], dead)


def _capacitor_current(params: ConverterParams, codes, i_l, v_c):
    k = params.r_load / (params.r_load + params.r_esr)
    on = -v_c * k / params.r_load
    off = i_l - (v_c + params.r_esr * i_l) * k / params.r_load
    return np.where(codes == Phase.ON.code, on, off)


def last_period(trace: Trace) -> Trace:
    """Samples spanning the last complete switching period of the trace."""
    period = trace.period
    eps = 1e-9
    k_end = math.floor(trace.t[-1] / period + eps)
    t_b = k_end * period
    t_a = t_b - period
    if t_a < trace.t[0] - eps * period:
        raise InsufficientDataError("trace is shorter than one switching period")
    win = trace.window(t_a, t_b)
    if len(win) < 3 or abs(win.t[0] - t_a) > eps * period or abs(win.t[-1] - t_b) > eps * period:
        raise InsufficientDataError("last period is not densely recorded")
    return win


def _phase_trapezoid(trace: Trace, integrand) -> float:
    # each interval belongs to the segment that ends at its right sample
    codes = trace.phase[1:]
    left = integrand(codes, trace.i_l[:-1], trace.v_c[:-1])
    right = integrand(codes, trace.i_l[1:], trace.v_c[1:])
    return float(np.sum(0.5 * np.diff(trace.t) * (left + right)))


def volt_second_balance(trace: Trace, params: ConverterParams) -> float:
    """Integral of the inductor voltage over the last full period (V*s)."""
    win = last_period(trace)
    return _phase_trapezoid(win, lambda c, i, v: _inductor_voltage(params, c, i, v))


def charge_balance(trace: Trace, params: ConverterParams) -> float:
    """Integral of the capacitor current over the last full period (A*s)."""
    win = last_period(trace)
    return _phase_trapezoid(win, lambda c, i, v: _capacitor_current(params, c, i, v))


@dataclasses.dataclass(frozen=True)
class BalanceCheck:
    volt_seconds: float
    charge: float
    volt_seconds_rel: float  # relative to vin*T
    charge_rel: float  # relative to mean(i_l)*T
    tolerance: float

    @property
    def steady(self) -> bool:
        return abs(self.volt_seconds_rel) <= self.tolerance and abs(self.charge_rel) <= self.tolerance


def balance_check(trace: Trace, params: ConverterParams, tolerance: float = 1e-3) -> BalanceCheck:
    vs = volt_second_balance(trace, params)
    q = charge_balance(trace, params)
    win = last_period(trace)
    i_avg = abs(time_mean(win.t, win.i_l))
    vs_ref = params.vin * trace.period
    q_ref = i_avg * trace.period
    return BalanceCheck(
        vs,
        q,
        vs / vs_ref if vs_ref > 0 else math.inf,
        q / q_ref if q_ref > 0 else math.inf,
        tolerance,
    )


# ---------------------------------------------------------------- metrics


def time_mean(t: np.ndarray, y: np.ndarray) -> float:
    if len(t) < 2 or t[-1] == t[0]:
        return float(np.mean(y))
    # integrate the deviation from the first sample so constant signals are exact
    return float(y[0] + np.trapezoid(y - y[0], t) / (t[-1] - t[0]))


def tail(trace: Trace, periods: int) -> Trace:
    return trace.window(trace.t[-1] - periods * trace.period)


@dataclasses.dataclass(frozen=True)
class TransientMetrics:
    overshoot_pct: float
    settling_time: float  # math.inf when the trace never settles
    ss_error: float
    ripple_pp: float
    final_mean: float

    @property
    def settled(self) -> bool:
        return math.isfinite(self.settling_time)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        if not self.settled:
            out["settling_time"] = "unsettled"
        return out


def transient_metrics(trace: Trace, v_ref: float, band: float = 0.02, tail_periods: int = 10) -> TransientMetrics:
    """Overshoot, settling, steady-state error and ripple of ``v_out``.

    Final value and ripple come from the last ``tail_periods`` periods.
    Settling time is measured from the first sample of the trace to the
    first instant after which ``v_out`` stays within ``band`` of the final
    value.
    """
    if len(trace) == 0:
        raise InsufficientDataError("empty trace")
    end = tail(trace, tail_periods)
    final = time_mean(end.t, end.v_out)
    ripple = float(end.v_out.max() - end.v_out.min())
    overshoot = max(float(trace.v_out.max()) - final, 0.0) / abs(final) * 100.0 if final else 0.0

    outside = np.flatnonzero(np.abs(trace.v_out - final) > band * abs(final))
    if len(outside) == 0:
        settling = 0.0
    elif outside[-1] == len(trace) - 1:
        settling = math.inf
    else:
        settling = float(trace.t[outside[-1] + 1] - trace.t[0])
    return TransientMetrics(overshoot, settling, abs(final - v_ref), ripple, final)
