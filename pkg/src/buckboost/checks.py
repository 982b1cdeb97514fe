"""Property checks run by ``buckboost verify`` and the acceptance tests.

Each check returns :class:`Check` rows holding a measured residual and the
tolerance it is held to.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Sequence

import numpy as np

from .analysis import averaged_steady_state, balance_check, ideal_ratio, tail, time_mean
from .controllers import OpenLoop
from .converter import ConverterParams
from .engine import Integrator, SimConfig, run
from .pwm import duty_for_ratio
from .scenarios import BALANCE_TOL, ORACLE_TOL, PRESET_NAMES, SMALL_STAGE, preset, run_scenario

SWEEP_DUTIES = (0.25, 0.5, 0.75)
SWEEP_PERIODS = 2000
SWEEP_TOL = 0.01
AGREEMENT_PERIODS = 1000
AGREEMENT_TOL = 1e-6


@dataclasses.dataclass(frozen=True)
class Check:
    name: str
    residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return math.isfinite(self.residual) and abs(self.residual) <= self.tolerance


def lossless_params(vin: float = 2.5) -> ConverterParams:
    """Small power stage with every parasitic resistance and the dead-time removed."""
    stage = dict(SMALL_STAGE, r_l=0.0, r_esr=0.0)
    return ConverterParams(vin=vin, **stage)


def lossless_sweep(
    duties: Sequence[float] = SWEEP_DUTIES, integrator: Integrator = Integrator.RK4, steps_per_period: int = 64
) -> list[Check]:
    """Mean output over the last 20 of 2000 periods against ``d/(1-d)``."""
    params = lossless_params()
    rows = []
    for d in duties:
        sim = SimConfig(
            t_end=SWEEP_PERIODS * params.period,
            steps_per_period=steps_per_period,
            record_decimation=steps_per_period,
            integrator=integrator,
            dense_tail_periods=20,
        )
        trace = run(params, OpenLoop(d=d), sim)
        end = tail(trace, 20)
        ratio = time_mean(end.t, end.v_out) / params.vin
        rows.append(Check(f"ratio d={d}", ratio / ideal_ratio(d) - 1.0, SWEEP_TOL))
    return rows


def integrator_agreement(
    periods: int = AGREEMENT_PERIODS, integrator: Integrator = Integrator.RK4, steps_per_period: int = 64
) -> Check:
    """Largest state deviation of ``integrator`` from the closed-form route on boost-open.

    Each state component is normalized by its largest magnitude over the run.
    """
    scen = preset("boost-open")
    t_end = periods * scen.params.period
    traces = []
    for route in (integrator, Integrator.EXACT):
        sim = SimConfig(t_end=t_end, steps_per_period=steps_per_period, integrator=route)
        traces.append(run(scen.params, scen.controller, sim))
    test, ref = traces
    err = 0.0
    for col in ("i_l", "v_c"):
        a, b = getattr(test, col), getattr(ref, col)
        err = max(err, float(np.max(np.abs(a - b)) / np.max(np.abs(b))))
    return Check(f"{integrator.value} vs exact", err, AGREEMENT_TOL)


def fixed_duty_scenario(name: str, integrator: Integrator = Integrator.RK4, steps_per_period: int = 64):
    """The preset's power stage driven at the ideal duty for 3.24 V, no dead-time."""
    scen = preset(name)
    params = scen.params.replace(t_dead=0.0)
    ctrl = OpenLoop(d=duty_for_ratio(params.vin, scen.controller.v_ref), v_ref=scen.controller.v_ref)
    sim = dataclasses.replace(
        scen.sim,
        integrator=integrator,
        steps_per_period=steps_per_period,
        record_decimation=steps_per_period,
    )
    return dataclasses.replace(scen, params=params, controller=ctrl, sim=sim)


def averaged_match(name: str, integrator: Integrator = Integrator.RK4, steps_per_period: int = 64) -> list[Check]:
    scen = fixed_duty_scenario(name, integrator, steps_per_period)
    res = run_scenario(scen)
    pred = averaged_steady_state(scen.params, scen.controller.d)
    return [
        Check(f"{name} mean i_l vs averaged", res.mean_i_l / pred.i_l_avg - 1.0, ORACLE_TOL),
        Check(f"{name} mean v_out vs averaged", res.mean_v_out / pred.v_out_avg - 1.0, ORACLE_TOL),
    ]


def preset_balances(name: str, integrator: Integrator = Integrator.RK4, steps_per_period: int = 64) -> list[Check]:
    scen = preset(name)
    sim = dataclasses.replace(scen.sim, integrator=integrator, steps_per_period=steps_per_period)
    res = run_scenario(dataclasses.replace(scen, sim=sim))
    bal = balance_check(res.trace, res.trace.final_params, BALANCE_TOL)
    return [
        Check(f"{name} volt-second", bal.volt_seconds_rel, BALANCE_TOL),
        Check(f"{name} charge", bal.charge_rel, BALANCE_TOL),
    ]


def _preset_checks(args) -> list[Check]:
    name, integrator, steps = args
    return averaged_match(name, integrator, steps) + preset_balances(name, integrator, steps)


def verify_all(
    integrator: Integrator = Integrator.RK4, steps_per_period: int = 64, jobs: int | None = None
) -> dict[str, list[Check]]:
    """Every verification group, keyed by group title."""
    import concurrent.futures

    jobs_args = [(name, integrator, steps_per_period) for name in PRESET_NAMES]
    if jobs == 1:
        per_preset = [_preset_checks(a) for a in jobs_args]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            per_preset = list(pool.map(_preset_checks, jobs_args))
    averaged = [c for rows in per_preset for c in rows[:2]]
    balances = [c for rows in per_preset for c in rows[2:]]
    return {
        "lossless conversion ratio (relative error)": lossless_sweep(integrator=integrator, steps_per_period=steps_per_period),
        "integrator agreement (max relative state error)": [
            integrator_agreement(integrator=integrator, steps_per_period=steps_per_period)
        ],
        "averaged model (relative error)": averaged,
        "steady-state balances (relative residual)": balances,
    }
