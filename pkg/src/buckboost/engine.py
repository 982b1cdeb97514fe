"""Time-domain simulation of the switched converter.

Time is tracked as (period index, offset within the period) so that period
boundaries stay exact multiples of the switching period however long the run.
Every integration step lies entirely inside one conduction segment and never
straddles a parameter step event.
"""

from __future__ import annotations

import dataclasses
import enum
import logging
import math
from typing import Iterator, Sequence

import numpy as np

from .controllers import ControllerSpec, make_runtime
from .converter import ConverterParams, Phase, blocked_affine, output_row, phase_affine
from .integrators import DivergenceError, advance_euler, advance_map, advance_rk4, exact_propagator
from .pwm import schedule_period

log = logging.getLogger(__name__)


class Integrator(enum.Enum):
    RK4 = "rk4"
    EXACT = "exact"
    EULER = "euler"  # negative control for verification only


@dataclasses.dataclass(frozen=True)
class SimConfig:
    """Run length and stepping.

    ``dense_tail_periods`` forces every step of the final periods to be
    recorded regardless of ``record_decimation``, which keeps long runs small
    while leaving full resolution for steady-state measurements.
    """

    t_end: float
    steps_per_period: int = 64
    record_decimation: int = 1
    integrator: Integrator = Integrator.RK4
    dense_tail_periods: int = 0

    def __post_init__(self):
        if not (isinstance(self.t_end, (int, float)) and math.isfinite(self.t_end) and self.t_end > 0):
            raise ValueError(f"t_end must be a positive number, got {self.t_end!r}")
        if self.steps_per_period < 4:
            raise ValueError("steps_per_period must be >= 4")
        if self.record_decimation < 1:
            raise ValueError("record_decimation must be >= 1")
        if self.dense_tail_periods < 0:
            raise ValueError("dense_tail_periods must be >= 0")
        object.__setattr__(self, "integrator", Integrator(self.integrator))


class EventTarget(enum.Enum):
    VIN = "vin"
    RLOAD = "r_load"


@dataclasses.dataclass(frozen=True)
class StepEvent:
    t: float
    target: EventTarget
    new_value: float

    def __post_init__(self):
        object.__setattr__(self, "target", EventTarget(self.target))
        if not self.t >= 0:
            raise ValueError("event time must be >= 0")

    def apply(self, params: ConverterParams) -> ConverterParams:
        return params.replace(**{self.target.value: self.new_value})


@dataclasses.dataclass
class Trace:
    """Recorded samples, stored column-wise."""

    t: np.ndarray
    i_l: np.ndarray
    v_c: np.ndarray
    v_out: np.ndarray
    duty: np.ndarray
    phase: np.ndarray  # Phase codes
    period: float
    final_state: np.ndarray | None = None
    final_params: ConverterParams | None = None

    def __len__(self) -> int:
        return len(self.t)

    def samples(self) -> Iterator[tuple[float, float, float, float, float, Phase]]:
        for row in zip(self.t, self.i_l, self.v_c, self.v_out, self.duty, self.phase):
            yield (*(float(v) for v in row[:5]), Phase.from_code(row[5]))

    def select(self, mask: np.ndarray) -> "Trace":
        return dataclasses.replace(
            self,
            t=self.t[mask],
            i_l=self.i_l[mask],
            v_c=self.v_c[mask],
            v_out=self.v_out[mask],
            duty=self.duty[mask],
            phase=self.phase[mask],
        )

    def window(self, t_from: float, t_to: float = math.inf) -> "Trace":
        eps = 1e-9 * self.period
        return self.select((self.t >= t_from - eps) & (self.t <= t_to + eps))

    def shifted(self, dt: float) -> "Trace":
        return dataclasses.replace(self, t=self.t + dt)


class _Recorder:
    """Accumulates recorded steps; columns are assembled once at the end."""

    def __init__(self):
        self.times: list = []
        self.states: list = []
        self.counts: list[int] = []
        self.tags: list[tuple] = []  # (duty, phase code, output row)

    def add(self, times, states, duty, phase_code, row):
        self.times.append(np.asarray(times, dtype=float))
        self.states.append(states[:, :2])
        self.counts.append(len(states))
        self.tags.append((duty, phase_code, row))

    def build(self, period: float, final_state, final_params) -> Trace:
        t = np.concatenate(self.times)
        x = np.concatenate(self.states)
        counts = np.asarray(self.counts)
        duty = np.repeat([tag[0] for tag in self.tags], counts)
        phase = np.repeat(np.array([tag[1] for tag in self.tags], dtype=np.int8), counts)
        rows = np.repeat(np.array([tag[2] for tag in self.tags]), counts, axis=0)
        v_out = np.einsum("ij,ij->i", x, rows)
        return Trace(t, x[:, 0].copy(), x[:, 1].copy(), v_out, duty, phase, period, final_state, final_params)


def run(
    params: ConverterParams,
    controller: ControllerSpec,
    sim: SimConfig,
    events: Sequence[StepEvent] = (),
    initial_state=None,
) -> Trace:
    """Simulate from a cold start (or ``initial_state``) until ``sim.t_end``.

    Raises :class:`DivergenceError` carrying the failure time when the state
    stops being finite, and ``UnrealizableDutyError`` when a commanded duty
    does not fit around the dead-time.
    """
    events = list(events)
    if any(e2.t < e1.t for e1, e2 in zip(events, events[1:])):
        raise ValueError("events must be sorted by time")

    runtime = make_runtime(controller)
    period = params.period
    h_max = period / sim.steps_per_period
    n_periods = max(1, math.ceil(sim.t_end / period - 1e-9))
    last_offset = sim.t_end - (n_periods - 1) * period
    dense_from = sim.t_end - sim.dense_tail_periods * period - 1e-9 * period
    dec = sim.record_decimation
    use_exact = sim.integrator is Integrator.EXACT
    stepper = advance_euler if sim.integrator is Integrator.EULER else advance_rk4

    dim = 2 + runtime.extra_states
    x = np.concatenate([np.zeros(2), runtime.initial()])
    if initial_state is not None:
        init = np.asarray(initial_state, dtype=float)
        x[: len(init)] = init

    buf = np.empty((sim.steps_per_period + 2, dim))
    rec = _Recorder()
    systems: dict = {}
    maps: dict = {}
    counter = 0
    ev_idx = 0
    rows = {ph: output_row(params, ph) for ph in Phase}

    def system(phase: Phase, branch: int):
        key = (phase, branch, runtime.mode)
        if key not in systems:
            if len(systems) > 64:
                systems.clear()
            if branch == 0:
                base = blocked_affine(params)
            else:
                base = phase_affine(params, phase, branch)
            systems[key] = runtime.augment(params, phase, base)
        return systems[key]

    def propagator(phase: Phase, branch: int, h: float):
        key = (phase, branch, runtime.mode, h)
        if key not in maps:
            if len(maps) > 4096:
                maps.clear()
            maps[key] = exact_propagator(*system(phase, branch), h)
        return maps[key]

    def integrate(phase: Phase, t0: float, start: float, stop: float, duty: float, final: bool):
        nonlocal x, counter, rows
        span = stop - start
        if span <= 1e-12 * period:
            return
        n = max(1, math.ceil(span / h_max - 1e-9))
        h = span / n

        branch, clamp = 1, False
        if phase is Phase.DEAD:
            if x[0] == 0.0:
                branch = 0
            else:
                branch = 1 if x[0] > 0 else -1
                clamp = True
        alt_branch = 0 if clamp else branch
        if use_exact:
            phi, gam = propagator(phase, branch, h)
            phi_alt, gam_alt = propagator(phase, alt_branch, h)
            done = advance_map(phi, gam, phi_alt, gam_alt, clamp, x, n, buf)
        else:
            a, b = system(phase, branch)
            a_alt, b_alt = system(phase, alt_branch)
            done = stepper(a, b, a_alt, b_alt, clamp, x, h, n, buf)
        if done < n:
            t_fail = t0 + start + (done + 1) * h
            raise DivergenceError(f"non-finite state at t={t_fail:.6g} s", t=t_fail)

        tail = t0 + stop >= dense_from
        first = dec - counter % dec
        if tail or final:
            offsets = start + h * np.arange(1, n + 1)
            offsets[-1] = stop
            times = t0 + offsets
            mask = ((counter + np.arange(1, n + 1)) % dec == 0) | (times >= dense_from)
            mask[-1] |= final
            if mask.any():
                rec.add(times[mask], buf[:n][mask], duty, phase.code, rows[phase])
        elif first <= n:
            idx = list(range(first - 1, n, dec))
            times = [t0 + start + (i + 1) * h for i in idx]
            if idx[-1] == n - 1:
                times[-1] = t0 + stop
            rec.add(times, buf[idx], duty, phase.code, rows[phase])
        counter += n
        x = buf[n - 1].copy()

    for k in range(n_periods):
        t0 = k * period
        while ev_idx < len(events) and events[ev_idx].t <= t0 + 1e-9 * period:
            params = events[ev_idx].apply(params)
            rows = {ph: output_row(params, ph) for ph in Phase}
            systems.clear()
            maps.clear()
            ev_idx += 1

        cmd = runtime.period_start(k, x, params)
        schedule = schedule_period(cmd, params)
        if k == 0:
            rec.add([0.0], x[None, :].copy(), cmd.d, Phase.ON.code, rows[Phase.ON])

        end = period if k < n_periods - 1 else last_offset
        start = 0.0
        bounds = schedule.boundaries()
        bounds[-1] = period
        for (phase, _), stop in zip(schedule.segments, bounds):
            stop = min(stop, end)
            if start >= stop:
                break
            while ev_idx < len(events) and events[ev_idx].t - t0 < stop:
                ev_off = events[ev_idx].t - t0
                integrate(phase, t0, start, ev_off, cmd.d, False)
                start = max(start, ev_off)
                params = events[ev_idx].apply(params)
                rows = {ph: output_row(params, ph) for ph in Phase}
                systems.clear()
                maps.clear()
                ev_idx += 1
            is_final = k == n_periods - 1 and stop >= end
            integrate(phase, t0, start, stop, cmd.d, is_final)
            start = stop

    trace = rec.build(period, x.copy(), params)
    log.debug("run finished: %d periods, %d samples", n_periods, len(trace))
    return trace
