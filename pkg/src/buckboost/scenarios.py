"""Preset experiments: boost and buck operation, each without feedback, with the
analog compensator, and with the digital compensator.

Component values per column are fixed below; the digital-controller and
no-feedback columns share one power stage, the analog column uses a larger
inductor and capacitor with lower losses.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import math
from typing import Iterable, Sequence

from .analysis import (
    BalanceCheck,
    InsufficientDataError,
    SteadyStatePrediction,
    TransientMetrics,
    averaged_steady_state,
    balance_check,
    max_average_output,
    tail,
    time_mean,
    transient_metrics,
)
from .controllers import V_REF, ControllerSpec, OpenLoop, Variant, design_defaults
from .converter import ConverterParams
from .engine import EventTarget, Integrator, SimConfig, StepEvent, Trace, run
from .integrators import DivergenceError
from .pwm import UnrealizableDutyError, duty_for_ratio

VIN = {"boost": 2.5, "buck": 5.0}

# Component columns: (L, C, lumped conduction resistance, load, ESR).
SMALL_STAGE = dict(l=280e-9, c=250e-9, r_l=0.5, r_load=10.0, r_esr=1e-4)
LARGE_STAGE = dict(l=1e-6, c=22e-6, r_l=8e-2, r_load=10.0, r_esr=60e-3)

COLUMNS = {Variant.OPEN_LOOP: "small", Variant.DIGITAL_2P2Z: "small", Variant.ANALOG_TYPE3: "large"}
STAGES = {"small": SMALL_STAGE, "large": LARGE_STAGE}

# Run length and recording decimation per column; the large stage needs
# about ten times longer to reach steady state.
TIMING = {"small": (200e-6, 8), "large": (2e-3, 64)}

PRESET_NAMES = ("boost-open", "boost-analog", "boost-digital", "buck-open", "buck-analog", "buck-digital")

REGULATION_TOL = 0.01
UNREGULATED_TOL = 0.05
ORACLE_TOL = 0.02
BALANCE_TOL = 1e-3
STEP_VIN = {"boost": 5.0, "buck": 2.5}
STEP_RLOAD = 5.0
MEAN_PERIODS = 20


@dataclasses.dataclass(frozen=True)
class Scenario:
    name: str
    params: ConverterParams
    controller: ControllerSpec
    sim: SimConfig
    events: tuple[StepEvent, ...] = ()


def preset(name: str) -> Scenario:
    try:
        mode, tag = name.split("-")
        variant = Variant(tag)
        vin = VIN[mode]
    except (ValueError, KeyError):
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}") from None
    column = COLUMNS[variant]
    t_end, decimation = TIMING[column]
    params = ConverterParams(vin=vin, f_sw=50e6, **STAGES[column])
    if variant is Variant.OPEN_LOOP:
        controller: ControllerSpec = OpenLoop(d=duty_for_ratio(vin, V_REF), v_ref=V_REF)
    else:
        controller = design_defaults(params, variant, v_ref=V_REF)
    sim = SimConfig(t_end=t_end, record_decimation=decimation, dense_tail_periods=MEAN_PERIODS)
    return Scenario(name, params, controller, sim)


def step_variants(scenario: Scenario) -> list[Scenario]:
    """Input-voltage and load step versions of a scenario, both at mid-run."""
    t_step = scenario.sim.t_end / 2
    mode = "boost" if scenario.params.vin < V_REF else "buck"
    return [
        dataclasses.replace(
            scenario, name=f"{scenario.name}+vin-step", events=(StepEvent(t_step, EventTarget.VIN, STEP_VIN[mode]),)
        ),
        dataclasses.replace(
            scenario, name=f"{scenario.name}+load-step", events=(StepEvent(t_step, EventTarget.RLOAD, STEP_RLOAD),)
        ),
    ]


@dataclasses.dataclass
class ScenarioResult:
    scenario: Scenario
    trace: Trace
    metrics: TransientMetrics  # measured from the last step event (or from t = 0)
    balance: BalanceCheck | None
    mean_v_out: float
    mean_i_l: float
    final_duty: float
    prediction: SteadyStatePrediction | None
    flags: dict[str, bool]

    @property
    def name(self) -> str:
        return self.scenario.name

    @property
    def passed(self) -> bool:
        return all(self.flags.values())

    def to_dict(self) -> dict:
        row = {
            "name": self.name,
            "metrics": self.metrics.to_dict(),
            "mean_v_out": self.mean_v_out,
            "mean_i_l": self.mean_i_l,
            "final_duty": self.final_duty,
            "samples": len(self.trace),
            "flags": self.flags,
            "passed": self.passed,
        }
        if self.balance is not None:
            row["volt_second_residual_rel"] = self.balance.volt_seconds_rel
            row["charge_residual_rel"] = self.balance.charge_rel
        if self.prediction is not None:
            row["averaged_v_out"] = self.prediction.v_out_avg
            row["averaged_i_l"] = self.prediction.i_l_avg
        return row


def evaluate(scenario: Scenario, trace: Trace) -> ScenarioResult:
    spec = scenario.controller
    params = trace.final_params or scenario.params
    t_from = scenario.events[-1].t if scenario.events else 0.0
    metrics = transient_metrics(trace.window(t_from), spec.v_ref)
    end = tail(trace, MEAN_PERIODS)
    mean_v = time_mean(end.t, end.v_out)
    mean_i = time_mean(end.t, end.i_l)
    try:
        balance = balance_check(trace, params, BALANCE_TOL)
    except InsufficientDataError:
        balance = None

    flags: dict[str, bool] = {}
    prediction = None
    closed = not isinstance(spec, OpenLoop)
    if closed:
        flags["regulated"] = abs(mean_v - spec.v_ref) <= REGULATION_TOL * spec.v_ref
        boost = params.vin < spec.v_ref
        flags["duty_mode"] = bool(trace.duty[-1] > 0.5) if boost else bool(trace.duty[-1] < 0.5)
    elif scenario.events:
        flags["unregulated"] = abs(mean_v - spec.v_ref) > UNREGULATED_TOL * spec.v_ref
    else:
        prediction = averaged_steady_state(params, spec.d)
        flags["averaged_oracle"] = (
            abs(mean_v - prediction.v_out_avg) <= ORACLE_TOL * abs(prediction.v_out_avg)
            and abs(mean_i - prediction.i_l_avg) <= ORACLE_TOL * abs(prediction.i_l_avg)
        )
    if not scenario.events:
        flags["steady"] = balance is not None and balance.steady
    return ScenarioResult(scenario, trace, metrics, balance, mean_v, mean_i, float(trace.duty[-1]), prediction, flags)


class ScenarioError(RuntimeError):
    """A scenario failed to simulate; the message names the scenario."""

    def __init__(self, name: str, cause: Exception):
        super().__init__(f"scenario {name!r}: {cause}")
        self.name = name
        self.cause = cause

    def __reduce__(self):
        return type(self), (self.name, self.cause)


def run_scenario(scenario: Scenario) -> ScenarioResult:
    try:
        trace = run(scenario.params, scenario.controller, scenario.sim, scenario.events)
    except (DivergenceError, UnrealizableDutyError) as exc:
        raise ScenarioError(scenario.name, exc) from exc
    return evaluate(scenario, trace)


def _attempt(scenario: Scenario) -> ScenarioResult | ScenarioError:
    try:
        return run_scenario(scenario)
    except ScenarioError as exc:
        return exc


def _map(fn, items: Sequence, jobs: int | None):
    if jobs == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------- comparison


@dataclasses.dataclass(frozen=True)
class MatchedComparison:
    """Analog and digital compensators on one power stage under one step test."""

    mode: str
    step: str
    feasible: bool
    analog: TransientMetrics
    digital: TransientMetrics

    @property
    def settling_delta(self) -> float:
        return self.digital.settling_time - self.analog.settling_time

    @property
    def overshoot_delta(self) -> float:
        return self.digital.overshoot_pct - self.analog.overshoot_pct

    @property
    def digital_not_slower(self) -> bool:
        return self.digital.settling_time <= self.analog.settling_time


MATCHED_NOTE = (
    "Matched-component experiment: both compensators use their default designs for the "
    "small power stage (280 nH, 250 nF, 0.5 ohm), so the only difference is the control law. "
    "Settling is measured from the step instant to within +/-2% of the final value."
)


def matched_scenarios() -> list[Scenario]:
    out = []
    for mode in ("boost", "buck"):
        params = ConverterParams(vin=VIN[mode], **SMALL_STAGE)
        sim = SimConfig(t_end=TIMING["small"][0], record_decimation=1, dense_tail_periods=MEAN_PERIODS)
        for variant in (Variant.ANALOG_TYPE3, Variant.DIGITAL_2P2Z):
            base = Scenario(f"matched-{mode}-{variant.value}", params, design_defaults(params, variant), sim)
            out.extend(step_variants(base))
    return out


def _matched_feasible(scenario: Scenario) -> bool:
    params = scenario.params
    for ev in scenario.events:
        params = ev.apply(params)
    return max_average_output(params, scenario.controller.d_max) >= scenario.controller.v_ref


@dataclasses.dataclass
class ComparisonReport:
    results: list[ScenarioResult]
    pairwise: dict[str, dict[str, float]]
    matched: list[MatchedComparison]
    errors: dict[str, str] = dataclasses.field(default_factory=dict)
    note: str = MATCHED_NOTE

    @property
    def passed(self) -> bool:
        rows_ok = not self.errors and all(r.passed for r in self.results)
        matched_ok = all(m.digital_not_slower for m in self.matched if m.feasible)
        return rows_ok and matched_ok

    def to_dict(self) -> dict:
        rows = [r.to_dict() for r in self.results]
        matched = [
            {
                "mode": m.mode,
                "step": m.step,
                "feasible": m.feasible,
                "analog": m.analog.to_dict(),
                "digital": m.digital.to_dict(),
                "settling_delta": m.settling_delta if math.isfinite(m.settling_delta) else None,
                "overshoot_delta": m.overshoot_delta,
                "digital_not_slower": m.digital_not_slower,
            }
            for m in self.matched
        ]
        return {
            "scenarios": rows,
            "pairwise": self.pairwise,
            "matched": matched,
            "errors": self.errors,
            "note": self.note if self.matched else "",
            "passed": self.passed,
        }


def _pairwise(results: Iterable[ScenarioResult]) -> dict[str, dict[str, float]]:
    by_name = {r.name: r for r in results}
    out = {}
    for name, res in by_name.items():
        if "-analog" not in name:
            continue
        other = by_name.get(name.replace("-analog", "-digital"))
        if other is None:
            continue
        key = name.replace("-analog", "")
        delta = other.metrics.settling_time - res.metrics.settling_time
        out[key] = {
            "settling_delta": delta if math.isfinite(delta) else None,
            "overshoot_delta": other.metrics.overshoot_pct - res.metrics.overshoot_pct,
        }
    return out


def run_suite(
    names: Sequence[str],
    step_tests: bool = False,
    matched: bool | None = None,
    jobs: int | None = None,
    integrator: Integrator | None = None,
    steps_per_period: int | None = None,
) -> ComparisonReport:
    """Run presets and compare them.

    With ``step_tests`` every closed-loop preset also gets its input and load
    step variants.  ``matched`` (default: same as ``step_tests``) adds the
    matched-component analog/digital comparison.  Results are ordered by
    scenario name regardless of execution order.  ``integrator`` and
    ``steps_per_period`` override the stepping of every scenario.
    """
    if matched is None:
        matched = step_tests
    overrides = {}
    if integrator is not None:
        overrides["integrator"] = Integrator(integrator)
    if steps_per_period is not None:
        overrides["steps_per_period"] = steps_per_period

    def tuned(scen: Scenario) -> Scenario:
        return dataclasses.replace(scen, sim=dataclasses.replace(scen.sim, **overrides)) if overrides else scen

    scenarios = []
    for name in names:
        scen = tuned(preset(name))
        scenarios.append(scen)
        if step_tests and not isinstance(scen.controller, OpenLoop):
            scenarios.extend(step_variants(scen))
    if len({s.name for s in scenarios}) != len(scenarios):
        raise ValueError("scenario names must be unique")

    matched_specs = [tuned(m) for m in matched_scenarios()] if matched else []
    outcomes = _map(_attempt, scenarios + matched_specs, jobs)
    errors = {e.name: str(e.cause) for e in outcomes if isinstance(e, ScenarioError)}
    results = [r for r in outcomes if isinstance(r, ScenarioResult)]
    suite_names = {s.name for s in scenarios}
    suite_results = sorted((r for r in results if r.name in suite_names), key=lambda r: r.name)
    matched_results = {r.name: r for r in results if r.name not in suite_names}

    comparisons = []
    for mode in ("boost", "buck"):
        for step in ("vin-step", "load-step"):
            ana = matched_results.get(f"matched-{mode}-analog+{step}")
            dig = matched_results.get(f"matched-{mode}-digital+{step}")
            if ana is None or dig is None:
                continue
            feasible = _matched_feasible(ana.scenario)
            comparisons.append(MatchedComparison(mode, step, feasible, ana.metrics, dig.metrics))
    return ComparisonReport(suite_results, _pairwise(suite_results), comparisons, dict(sorted(errors.items())))
