"""Acceptance gate: every criterion at its stated tolerance.

Each check records a PASS/FAIL line; the lines are printed in the pytest
terminal summary (see conftest.py) and when this file is run as a script.
"""

import math
import time

import pytest

from buckboost.analysis import ideal_ratio
from buckboost.checks import averaged_match, integrator_agreement, lossless_sweep
from buckboost.controllers import OpenLoop
from buckboost.engine import SimConfig, run
from buckboost.scenarios import (
    PRESET_NAMES,
    matched_scenarios,
    preset,
    run_scenario,
    run_suite,
    step_variants,
)

V_REF = 3.24
CLOSED = ("boost-analog", "boost-digital", "buck-analog", "buck-digital")
OPEN = ("boost-open", "buck-open")

RESULTS: dict[str, list[tuple[bool, str]]] = {}


def record(criterion: str, ok: bool, detail: str) -> None:
    RESULTS.setdefault(criterion, []).append((bool(ok), detail))


def summary_lines() -> list[str]:
    lines = []
    for criterion in sorted(RESULTS, key=lambda c: int(c.split()[0][1:])):
        rows = RESULTS[criterion]
        ok = all(r[0] for r in rows)
        failed = [d for passed, d in rows if not passed]
        tail = f" -- failing: {'; '.join(failed)}" if failed else ""
        lines.append(f"[{'PASS' if ok else 'FAIL'}] {criterion} ({sum(r[0] for r in rows)}/{len(rows)}){tail}")
    return lines


@pytest.fixture(scope="module")
def presets():
    # compile the kernels outside the timed runs
    warm = preset("boost-open")
    run(warm.params, warm.controller, SimConfig(t_end=10 * warm.params.period))
    cache = {}

    def get(name):
        if name not in cache:
            start = time.perf_counter()
            res = run_scenario(preset(name))
            cache[name] = (res, time.perf_counter() - start)
        return cache[name]

    return get


# 1 ---------------------------------------------------------------------------


def test_c1_lossless_conversion_ratio():
    start = time.perf_counter()
    rows = lossless_sweep((0.25, 0.5, 0.75))
    elapsed = time.perf_counter() - start
    for row in rows:
        record("C1 lossless d/(1-d) sweep", row.passed, f"{row.name}: rel err {row.residual:.2e}")
    record("C1 lossless d/(1-d) sweep", elapsed < 5.0, f"runtime {elapsed:.2f}s")
    assert all(r.passed for r in rows), [(r.name, r.residual) for r in rows]
    assert elapsed < 5.0
    assert ideal_ratio(0.75) == 3.0


# 2, 3 ------------------------------------------------------------------------


@pytest.mark.parametrize("name", CLOSED)
def test_c2_c3_regulation(presets, name):
    res, elapsed = presets(name)
    criterion = "C2 boost regulation" if name.startswith("boost") else "C3 buck regulation"
    err = abs(res.mean_v_out - V_REF)
    boost = name.startswith("boost")
    duty_ok = res.final_duty > 0.5 if boost else res.final_duty < 0.5
    ok = err <= 0.01 * V_REF and elapsed < 30.0 and duty_ok
    record(
        criterion,
        ok,
        f"{name}: mean {res.mean_v_out:.4f} V (err {err / V_REF:.3%}), duty {res.final_duty:.4f}, {elapsed:.1f}s",
    )
    assert err <= 0.01 * V_REF
    assert elapsed < 30.0
    assert duty_ok


# 4 ---------------------------------------------------------------------------


@pytest.mark.parametrize("name", CLOSED)
@pytest.mark.parametrize("step", ["vin-step", "load-step"])
def test_c4_closed_loop_recovers_after_step(name, step):
    scen = {s.name.rsplit("+", 1)[1]: s for s in step_variants(preset(name))}[step]
    res = run_scenario(scen)
    err = abs(res.mean_v_out - V_REF) / V_REF
    record("C4 step robustness", err <= 0.01, f"{scen.name}: final {res.mean_v_out:.4f} V (err {err:.2%})")
    assert err <= 0.01


@pytest.mark.parametrize("name", OPEN)
@pytest.mark.parametrize("step", ["vin-step", "load-step"])
def test_c4_open_loop_does_not_recover(name, step):
    scen = {s.name.rsplit("+", 1)[1]: s for s in step_variants(preset(name))}[step]
    res = run_scenario(scen)
    err = abs(res.mean_v_out - V_REF) / V_REF
    record("C4 step robustness", err > 0.05, f"{scen.name}: final {res.mean_v_out:.4f} V (err {err:.2%})")
    assert err > 0.05


# 5 ---------------------------------------------------------------------------


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_c5_averaged_model(name):
    rows = averaged_match(name)
    for row in rows:
        record("C5 averaged-model match", row.passed, f"{row.name}: {row.residual:+.2e}")
    assert all(r.passed for r in rows), [(r.name, r.residual) for r in rows]


# 6 ---------------------------------------------------------------------------


def test_c6_rk4_vs_exact():
    row = integrator_agreement(1000)
    record("C6 RK4 vs exact", row.passed, f"boost-open 1000 periods: max rel err {row.residual:.2e}")
    assert row.residual <= 1e-6


# 7 ---------------------------------------------------------------------------


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_c7_balance_residuals(presets, name):
    res, _ = presets(name)
    bal = res.balance
    ok = bal is not None and abs(bal.volt_seconds_rel) <= 1e-3 and abs(bal.charge_rel) <= 1e-3
    record(
        "C7 balance residuals",
        ok,
        f"{name}: volt-second {bal.volt_seconds_rel:+.2e}, charge {bal.charge_rel:+.2e}",
    )
    assert ok


# 8 ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def matched_report():
    return run_suite([], matched=True, jobs=1)


def test_c8_matched_comparison_reports_deltas(matched_report):
    data = matched_report.to_dict()
    assert len(data["matched"]) == len(matched_scenarios()) // 2 == 4
    for row in data["matched"]:
        assert "settling_delta" in row and "overshoot_delta" in row
        assert math.isfinite(row["overshoot_delta"])
    assert data["note"]
    record("C8 matched comparison", True, "deltas computed for 4 matched step tests")


@pytest.mark.parametrize("mode", ["boost", "buck"])
@pytest.mark.parametrize("step", ["vin-step", "load-step"])
def test_c8_digital_settles_no_slower(matched_report, mode, step):
    (m,) = [m for m in matched_report.matched if m.mode == mode and m.step == step]
    ok = m.digital.settling_time <= m.analog.settling_time
    note = "" if m.feasible else " [target unreachable after step]"
    record(
        "C8 matched comparison",
        ok,
        f"{mode} {step}: digital {m.digital.settling_time * 1e6:.3f} us vs analog "
        f"{m.analog.settling_time * 1e6:.3f} us, overshoot delta {m.overshoot_delta:+.3f}%{note}",
    )
    assert ok


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
