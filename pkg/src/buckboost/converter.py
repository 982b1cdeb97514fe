"""Power-stage model of the four-switch non-inverting buck-boost converter.

The plant has two states, the inductor current ``i_l`` and the capacitor
voltage ``v_c``.  Each conduction topology is an affine linear system once the
resistive load closes the output equation, so every phase can be written as
``dx/dt = a @ x + b``.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from typing import NamedTuple

import numpy as np


class Phase(enum.Enum):
    """Active conduction path."""

    ON = "ON"  # M1/M3 conduct
    OFF = "OFF"  # M2/M4 conduct
    DEAD = "DEAD"  # body diodes D2/D4 conduct

    @property
    def code(self) -> int:
        return _PHASE_CODES[self]

    @classmethod
    def from_code(cls, code: int) -> "Phase":
        return _PHASES_BY_CODE[int(code)]


_PHASE_CODES = {Phase.ON: 0, Phase.OFF: 1, Phase.DEAD: 2}
_PHASES_BY_CODE = {v: k for k, v in _PHASE_CODES.items()}


class StateVector(NamedTuple):
    i_l: float
    v_c: float


class AffineSystem(NamedTuple):
    """``dx/dt = a @ x + b``."""

    a: np.ndarray
    b: np.ndarray


@dataclasses.dataclass(frozen=True)
class ConverterParams:
    """Electrical constants of the power stage, SI units throughout.

    Tables that quote a single lumped conduction resistance map onto ``r_l``
    with all four switch resistances left at zero.
    """

    vin: float
    l: float
    c: float
    r_l: float = 0.0
    r_on1: float = 0.0
    r_on2: float = 0.0
    r_on3: float = 0.0
    r_on4: float = 0.0
    r_esr: float = 0.0
    r_load: float = 10.0
    f_sw: float = 50e6
    t_dead: float = 0.0
    v_diode: float = 0.7

    def __post_init__(self):
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ValueError(f"{f.name} must be a finite number, got {value!r}")
        for name in ("l", "c", "r_load", "f_sw"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)!r}")
        for name in ("r_l", "r_on1", "r_on2", "r_on3", "r_on4", "r_esr", "t_dead", "v_diode"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)!r}")
        if self.vin < 0:
            raise ValueError(f"vin must be >= 0, got {self.vin!r}")
        if 2 * self.t_dead >= 1 / self.f_sw:
            raise ValueError("t_dead must be shorter than half the switching period")

    @property
    def period(self) -> float:
        return 1.0 / self.f_sw

    @property
    def r_on_path(self) -> float:
        """Series resistance seen by the inductor while M1/M3 conduct."""
        return self.r_l + self.r_on1 + self.r_on3

    @property
    def r_off_path(self) -> float:
        """Series resistance seen by the inductor while M2/M4 conduct."""
        return self.r_l + self.r_on2 + self.r_on4

    def replace(self, **changes) -> "ConverterParams":
        return dataclasses.replace(self, **changes)


def _load_divider(params: ConverterParams) -> float:
    return params.r_load / (params.r_load + params.r_esr)


def output_voltage(params: ConverterParams, phase: Phase, state) -> float:
    """Output voltage with the resistive load closing the ESR loop.

    While M2/M4 or the body diodes conduct, the inductor current also flows
    through the capacitor ESR, which lifts the output by ``r_esr * i_l``.
    Works elementwise when the state fields are arrays.
    """
    i_l, v_c = state
    if phase is Phase.ON:
        return v_c * _load_divider(params)
    return (v_c + params.r_esr * i_l) * _load_divider(params)


def inductor_voltage(params: ConverterParams, phase: Phase, state) -> float:
    """Voltage across the ideal inductance, ``L * di/dt``."""
    i_l, _ = state
    if phase is Phase.ON:
        return params.vin - params.r_on_path * i_l
    v_out = output_voltage(params, phase, state)
    if phase is Phase.OFF:
        return -(params.r_off_path * i_l + v_out)
    return -(params.r_l * i_l + 2.0 * params.v_diode * np.sign(i_l) + v_out)


def capacitor_current(params: ConverterParams, phase: Phase, state) -> float:
    i_l, _ = state
    i_out = output_voltage(params, phase, state) / params.r_load
    if phase is Phase.ON:
        return -i_out
    return i_l - i_out


def phase_dynamics(params: ConverterParams, phase: Phase, state) -> tuple[float, float]:
    """Right-hand side ``(di_l/dt, dv_c/dt)`` for one conduction topology."""
    return (
        inductor_voltage(params, phase, state) / params.l,
        capacitor_current(params, phase, state) / params.c,
    )


def phase_affine(params: ConverterParams, phase: Phase, branch: int = 1) -> AffineSystem:
    """Matrix form of :func:`phase_dynamics`.

    For the dead-time topology the diode drop depends on the current
    direction; ``branch`` selects the sign of ``i_l`` the system is valid for.
    """
    l, c = params.l, params.c
    k = _load_divider(params)
    tau_c = c * (params.r_load + params.r_esr)
    if phase is Phase.ON:
        a = np.array([[-params.r_on_path / l, 0.0], [0.0, -1.0 / tau_c]])
        b = np.array([params.vin / l, 0.0])
        return AffineSystem(a, b)

    r_series = params.r_off_path if phase is Phase.OFF else params.r_l
    a = np.array(
        [
            [-(r_series + params.r_esr * k) / l, -k / l],
            [k / c, -1.0 / tau_c],
        ]
    )
    b = np.zeros(2)
    if phase is Phase.DEAD:
        b[0] = -2.0 * params.v_diode * float(np.sign(branch)) / l
    return AffineSystem(a, b)


def blocked_affine(params: ConverterParams) -> AffineSystem:
    """Dead-time topology once the body diodes have stopped conducting.

    The inductor current is pinned at zero and the capacitor discharges into
    the load alone.
    """
    a, _ = phase_affine(params, Phase.DEAD)
    a = a.copy()
    a[0, :] = 0.0
    return AffineSystem(a, np.zeros(2))


def output_row(params: ConverterParams, phase: Phase) -> np.ndarray:
    """Row vector ``r`` with ``output_voltage == r @ (i_l, v_c)``."""
    k = _load_divider(params)
    if phase is Phase.ON:
        return np.array([0.0, k])
    return np.array([params.r_esr * k, k])
