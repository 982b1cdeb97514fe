"""Simulator for the four-switch non-inverting synchronous buck-boost converter."""

from .analysis import (
    BalanceCheck,
    InsufficientDataError,
    SteadyStatePrediction,
    TransientMetrics,
    averaged_steady_state,
    balance_check,
    charge_balance,
    ideal_ratio,
    transient_metrics,
    volt_second_balance,
)
from .config import ConfigError, dump_config, load_config, parse_config, write_trace_csv
from .controllers import (
    AnalogType3,
    ControllerState,
    Digital2p2z,
    OpenLoop,
    Variant,
    design_defaults,
    digital_2p2z_update,
    type3_update,
)
from .converter import AffineSystem, ConverterParams, Phase, StateVector, output_voltage, phase_affine, phase_dynamics
from .engine import EventTarget, Integrator, SimConfig, StepEvent, Trace, run
from .integrators import DivergenceError, exact_step, rk4_step
from .pwm import DutyCommand, SwitchSchedule, UnrealizableDutyError, duty_for_ratio, quantize_duty, schedule_period
from .scenarios import ComparisonReport, Scenario, ScenarioError, preset, run_scenario, run_suite

__all__ = [name for name in dir() if not name.startswith("_")]
