"""Scenario configuration files and trace/report output.

A configuration is an INI document::

    [scenario]
    name = boost-open

    [converter]
    vin = 2.5
    l = 2.8e-07
    ...

    [controller]
    variant = open
    d = 0.5644599303135889

    [sim]
    t_end = 0.0002

    [events]
    t = 0.0001
    target = vin
    new_value = 5.0

Keys are the dataclass field names, values are SI numbers.  Event fields are
comma-separated lists of equal length, one entry per event.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import enum
import io
import json
import math
from pathlib import Path

from .controllers import AnalogType3, Digital2p2z, OpenLoop, Variant
from .converter import ConverterParams, Phase
from .engine import EventTarget, Integrator, SimConfig, StepEvent, Trace
from .scenarios import Scenario

SECTIONS = ("scenario", "converter", "controller", "sim", "events")
CONTROLLER_TYPES = {Variant.OPEN_LOOP: OpenLoop, Variant.ANALOG_TYPE3: AnalogType3, Variant.DIGITAL_2P2Z: Digital2p2z}
INT_FIELDS = {"steps_per_period", "record_decimation", "dense_tail_periods", "resolution_bits", "adc_bits"}
EVENT_FIELDS = ("t", "target", "new_value")


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry when known."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


def _number(section: str, key: str, text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: not a number: {text!r}", key) from None
    if key in INT_FIELDS:
        if not (math.isfinite(value) and value == int(value)):
            raise ConfigError(f"[{section}] {key}: expected an integer, got {text!r}", key)
        return int(value)
    return value


def _fields(cls) -> dict[str, dataclasses.Field]:
    return {f.name: f for f in dataclasses.fields(cls)}


def _build(section: str, cls, entries: dict[str, str], special: dict | None = None):
    known = _fields(cls)
    special = special or {}
    for key in entries:
        if key not in known:
            raise ConfigError(f"[{section}] unknown key {key!r}", key)
    kwargs = {}
    for key, text in entries.items():
        kwargs[key] = special[key](text) if key in special else _number(section, key, text)
    for name, f in known.items():
        if name not in kwargs and f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise ConfigError(f"[{section}] missing required key {name!r}", name)
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        key = next((k for k in kwargs if str(exc).startswith(k + " ")), None)
        raise ConfigError(f"[{section}] {exc}", key) from None


def parse_config(text: str, default_name: str = "scenario") -> Scenario:
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str  # keys are case-sensitive field names
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]", section)

    def entries(section: str) -> dict[str, str]:
        return dict(parser[section]) if parser.has_section(section) else {}

    scen = entries("scenario")
    for key in scen:
        if key != "name":
            raise ConfigError(f"[scenario] unknown key {key!r}", key)
    name = scen.get("name", default_name)

    params = _build("converter", ConverterParams, entries("converter"))

    ctrl = entries("controller")
    try:
        variant = Variant(ctrl.pop("variant", "open"))
    except ValueError:
        raise ConfigError("[controller] variant must be one of open, analog, digital", "variant") from None
    controller = _build("controller", CONTROLLER_TYPES[variant], ctrl)

    sim = _build("sim", SimConfig, entries("sim"), {"integrator": _integrator})

    events = _parse_events(entries("events"))
    return Scenario(name, params, controller, sim, events)


def _parse_events(entries: dict[str, str]) -> tuple[StepEvent, ...]:
    for key in entries:
        if key not in EVENT_FIELDS:
            raise ConfigError(f"[events] unknown key {key!r}", key)
    if not entries:
        return ()
    columns = {}
    for key in EVENT_FIELDS:
        if key not in entries:
            raise ConfigError(f"[events] missing required key {key!r}", key)
        columns[key] = [item.strip() for item in entries[key].split(",") if item.strip()]
    counts = {len(v) for v in columns.values()}
    if len(counts) != 1:
        raise ConfigError("[events] t, target and new_value must list the same number of entries", "t")
    events = []
    for t, target, value in zip(columns["t"], columns["target"], columns["new_value"]):
        try:
            tgt = EventTarget(target)
        except ValueError:
            raise ConfigError(f"[events] target must be vin or r_load, got {target!r}", "target") from None
        try:
            events.append(StepEvent(_number("events", "t", t), tgt, _number("events", "new_value", value)))
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"[events] {exc}", "t") from None
    if any(b.t < a.t for a, b in zip(events, events[1:])):
        raise ConfigError("[events] events must be sorted by t", "t")
    return tuple(events)


def _integrator(text: str) -> Integrator:
    if text not in (Integrator.RK4.value, Integrator.EXACT.value):
        raise ConfigError("[sim] integrator must be rk4 or exact", "integrator")
    return Integrator(text)


def load_config(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, default_name=path.stem)


def _fmt(value) -> str:
    if isinstance(value, enum.Enum):
        return value.value
    return repr(value)


def dump_config(scenario: Scenario) -> str:
    """Serialize a scenario; :func:`parse_config` reproduces it exactly."""
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    parser["scenario"] = {"name": scenario.name}
    parser["converter"] = {f: _fmt(v) for f, v in dataclasses.asdict(scenario.params).items()}
    ctrl = {"variant": scenario.controller.variant.value}
    ctrl.update({f: _fmt(v) for f, v in dataclasses.asdict(scenario.controller).items()})
    parser["controller"] = ctrl
    parser["sim"] = {f.name: _fmt(getattr(scenario.sim, f.name)) for f in dataclasses.fields(scenario.sim)}
    if scenario.events:
        parser["events"] = {
            key: ", ".join(_fmt(getattr(ev, key)) for ev in scenario.events) for key in EVENT_FIELDS
        }
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


# ---------------------------------------------------------------- output

CSV_HEADER = ("t", "i_l", "v_c", "v_out", "duty", "phase")
_PHASE_NAMES = {p.code: p.name for p in Phase}


def write_trace_csv(trace: Trace, path: str | Path) -> None:
    """Write samples with shortest round-trip float formatting (``repr``)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        cols = [trace.t.tolist(), trace.i_l.tolist(), trace.v_c.tolist(), trace.v_out.tolist(), trace.duty.tolist()]
        names = [_PHASE_NAMES[int(c)] for c in trace.phase]
        for t, i, v, vo, d, ph in zip(*cols, names):
            writer.writerow((repr(t), repr(i), repr(v), repr(vo), repr(d), ph))


def read_trace_csv(path: str | Path) -> dict[str, list]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_HEADER:
            raise ValueError(f"unexpected header {header!r}")
        out: dict[str, list] = {k: [] for k in CSV_HEADER}
        for row in reader:
            for key, value in zip(CSV_HEADER, row):
                out[key].append(value if key == "phase" else float(value))
    return out


def write_json(data: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=False, allow_nan=False) + "\n")
