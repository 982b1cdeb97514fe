"""Trailing-edge PWM with symmetric dead-time insertion."""

from __future__ import annotations

import dataclasses
import math

from .converter import ConverterParams, Phase

D_MIN = 0.05
D_MAX = 0.95


class UnrealizableDutyError(ValueError):
    """The requested duty leaves no room for the dead-time intervals."""


@dataclasses.dataclass(frozen=True)
class DutyCommand:
    d: float
    resolution_bits: int = 0
    d_min: float = D_MIN
    d_max: float = D_MAX

    def __post_init__(self):
        if not 0 < self.d_min <= self.d_max < 1:
            raise ValueError(f"duty limits must satisfy 0 < d_min <= d_max < 1, got {self.d_min}, {self.d_max}")
        if not self.d_min <= self.d <= self.d_max:
            raise ValueError(f"duty {self.d!r} outside [{self.d_min}, {self.d_max}]")
        if self.resolution_bits < 0:
            raise ValueError("resolution_bits must be >= 0")


@dataclasses.dataclass(frozen=True)
class SwitchSchedule:
    segments: tuple[tuple[Phase, float], ...]

    @property
    def period(self) -> float:
        return math.fsum(dur for _, dur in self.segments)

    def boundaries(self) -> list[float]:
        """Segment end offsets within the period; the last one equals the period."""
        out, acc = [], 0.0
        for _, dur in self.segments:
            acc += dur
            out.append(acc)
        return out

    def fraction(self, phase: Phase) -> float:
        return math.fsum(dur for p, dur in self.segments if p is phase) / self.period


def schedule_period(cmd: DutyCommand, params: ConverterParams) -> SwitchSchedule:
    """Split one switching period into conduction segments.

    The dead-time is taken symmetrically out of both conduction intervals, so
    the switch-node duty stays equal to ``cmd.d``.
    """
    period = params.period
    t_dead = params.t_dead
    t_on = cmd.d * period
    if t_dead == 0.0:
        return SwitchSchedule(((Phase.ON, t_on), (Phase.OFF, period - t_on)))
    if t_on <= t_dead or period - t_on <= t_dead:
        raise UnrealizableDutyError(
            f"duty {cmd.d:g} cannot be realized with t_dead={t_dead:g} s at f_sw={params.f_sw:g} Hz"
        )
    on = t_on - t_dead
    off = period - on - 2 * t_dead  # (1 - d) T - t_dead
    return SwitchSchedule(((Phase.ON, on), (Phase.DEAD, t_dead), (Phase.OFF, off), (Phase.DEAD, t_dead)))


def duty_for_ratio(vin: float, vout_target: float) -> float:
    """Ideal duty for a target conversion ratio, ``vout/vin = d/(1-d)`` inverted."""
    if vin <= 0 or vout_target <= 0:
        raise ValueError("vin and vout_target must be positive")
    return vout_target / (vin + vout_target)


def quantize_duty(d: float, resolution_bits: int) -> float:
    """Round ``d`` to the nearest multiple of ``2**-resolution_bits`` (ties round up)."""
    if resolution_bits == 0:
        return d
    scale = float(1 << resolution_bits)
    return math.floor(d * scale + 0.5) / scale


def clamp(x: float, lo: float, hi: float) -> float:
    return lo if x < lo else hi if x > hi else x
