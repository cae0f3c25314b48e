"""Flat ``section.key = value`` configuration files.

Sections:

``sim.*``        simulator settings (system, until, seed, ring, limits, ...)
``cost.*``       cost model overrides, durations with units
``flow.<n>.*``   bound flows: protocol, port, priority, limit, receiver_*
``task.<n>.*``   user tasks: priority, kind (busy | measurement)
``workload.<n>.*`` traffic: flow or protocol/port, pattern and its knobs
``exp.*``        experiment parameters (sweeps, grids, flood sizes)

Durations accept ``ns``, ``us``, ``ms`` and ``s`` suffixes; a bare number is
nanoseconds.  Limits are written ``capacity/period`` (``7/1ms``) or
``unbounded``.  Every error is a :class:`ConfigError` naming the key.
"""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..engine import BUSY, MEASUREMENT, FlowConfig, SimConfig, TaskDescriptor
from ..errors import ConfigError, FlowRxError
from ..model import MS, S, US, CostModel, FrameSpec
from ..workload import Burst, ConstantRate, Poisson, WorkloadEntry, WorkloadSpec

_UNITS = {"ns": 1, "us": US, "µs": US, "ms": MS, "s": S}
_DURATION_RE = re.compile(r"^([0-9]*\.?[0-9]+(?:[eE][+-]?[0-9]+)?)\s*(ns|us|µs|ms|s)?$")
_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


# -- scalar parsers ---------------------------------------------------------


def parse_duration(text: str, key: str = "") -> int:
    m = _DURATION_RE.match(text.strip())
    if not m:
        raise ConfigError(f"not a duration: {text!r} (use e.g. 5s, 1.62us, 250000ns)", key)
    value = float(m.group(1)) * _UNITS[m.group(2) or "ns"]
    ns = round(value)
    if abs(value - ns) > 1e-6 * max(1.0, abs(value)):
        raise ConfigError(f"{text!r} is not a whole number of nanoseconds", key)
    return int(ns)


def format_duration(ns: int) -> str:
    for unit in ("s", "ms", "us"):
        if ns and ns % _UNITS[unit] == 0:
            return f"{ns // _UNITS[unit]}{unit}"
    return f"{ns}ns"


def parse_limit(text: str, key: str = "") -> Optional[tuple]:
    t = text.strip().lower()
    if t in ("unbounded", "none", "off"):
        return None
    cap, sep, per = t.partition("/")
    if not sep:
        raise ConfigError(f"not a limit: {text!r} (use capacity/period, e.g. 7/1ms)", key)
    capacity = parse_int(cap, key)
    if capacity < 1:
        raise ConfigError(f"limit capacity must be >= 1, got {capacity}", key)
    period = parse_duration(per, key)
    if period <= 0:
        raise ConfigError("limit period must be positive", key)
    return capacity, period


def format_limit(limit) -> str:
    return "unbounded" if limit is None else f"{limit[0]}/{format_duration(limit[1])}"


def parse_int(text: str, key: str = "") -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise ConfigError(f"not an integer: {text!r}", key) from None


def parse_float(text: str, key: str = "") -> float:
    try:
        v = float(text.strip())
    except ValueError:
        raise ConfigError(f"not a number: {text!r}", key) from None
    if not math.isfinite(v):
        raise ConfigError(f"not a finite number: {text!r}", key)
    return v


def parse_bool(text: str, key: str = "") -> bool:
    t = text.strip().lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise ConfigError(f"not a boolean: {text!r}", key)


def parse_floats(text: str, key: str = "") -> tuple:
    items = [s for s in (p.strip() for p in text.split(",")) if s]
    if not items:
        raise ConfigError("empty list", key)
    return tuple(parse_float(s, key) for s in items)


def _fmt_float(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


# -- experiment parameters ------------------------------------------------------


@dataclass(frozen=True)
class ExpParams:
    """Knobs shared by the built-in experiments; all have working defaults."""

    # flows used by the experiments
    hp_port: int = 5001
    lp_port: int = 5002
    hp_priority: int = 10
    lp_priority: int = 2
    measurement_priority: int = 6
    # cpu-per-packet
    rates: tuple = (1e2, 1e3, 1e4, 1e5, 1e6)
    duration: int = 5 * S
    # latency-dist
    flood_size: int = 100_000
    flood_spacing: int = 10 * US
    hp_flood_start: Optional[int] = None  # None: right after the LP flood
    min_samples: int = 100
    # mitigation-map
    hp_rates: tuple = (100, 193, 373, 720, 1389, 2683, 5179, 10000)
    lp_rates: tuple = (100, 167, 278, 464, 774, 1292, 2154, 3594, 5995, 10000)
    cell_duration: int = 3 * S
    hp_limit: Optional[tuple] = (1, 1 * MS)
    modified_limit: Optional[tuple] = (7, 1 * MS)
    baseline_limit: Optional[tuple] = (3, 2 * MS)
    # headroom search
    cpu_budget: float = 0.1
    budget_period: int = 10 * MS
    headroom_duration: int = 200 * MS


_EXP_KINDS = {
    "hp_port": "int", "lp_port": "int", "hp_priority": "int", "lp_priority": "int",
    "measurement_priority": "int", "rates": "floats", "duration": "duration",
    "flood_size": "int", "flood_spacing": "duration", "hp_flood_start": "duration",
    "min_samples": "int", "hp_rates": "floats", "lp_rates": "floats",
    "cell_duration": "duration", "hp_limit": "limit", "modified_limit": "limit",
    "baseline_limit": "limit", "cpu_budget": "float", "budget_period": "duration",
    "headroom_duration": "duration",
}


def _validate_exp(p: ExpParams) -> None:
    for name in ("rates", "hp_rates", "lp_rates"):
        vals = getattr(p, name)
        if not vals:
            raise ConfigError("must not be empty", f"exp.{name}")
        for v in vals:
            if not v > 0:
                raise ConfigError(f"rates must be positive, got {v}", f"exp.{name}")
    for v in p.rates:
        if not 1e2 <= v <= 1e6:
            raise ConfigError(f"rate {v} outside 1e2..1e6", "exp.rates")
    if p.hp_flood_start is not None and p.hp_flood_start < 0:
        raise ConfigError("must be >= 0", "exp.hp_flood_start")
    for name in ("duration", "cell_duration", "flood_spacing", "budget_period", "headroom_duration"):
        if getattr(p, name) <= 0:
            raise ConfigError("must be positive", f"exp.{name}")
    if p.flood_size < 10_000:
        raise ConfigError(f"flood size must be >= 10000, got {p.flood_size}", "exp.flood_size")
    if p.hp_port == p.lp_port:
        raise ConfigError("hp and lp flows need distinct ports", "exp.lp_port")
    for name in ("hp_port", "lp_port"):
        if not 0 <= getattr(p, name) <= 0xFFFF:
            raise ConfigError("must be a 16-bit port", f"exp.{name}")
    if not 0 < p.cpu_budget <= 1:
        raise ConfigError("must be in (0, 1]", "exp.cpu_budget")
    if p.min_samples < 1:
        raise ConfigError("must be >= 1", "exp.min_samples")


# -- whole file -------------------------------------------------------------------

_SIM_KINDS = {
    "system": "str", "until": "duration", "seed": "int", "ring_size": "int",
    "recycle_threshold": "float", "max_prio": "int", "global_limit": "limit",
    "shortcircuit": "bool", "eager_cache": "bool", "network_floor": "int",
    "poll_priority": "int", "arp_icmp_priority": "int", "max_sockets": "int",
    "instrumentation_overhead": "float", "isr_jitter": "float", "audit": "bool",
}
_FLOW_KEYS = {"protocol", "port", "priority", "limit", "receiver_priority", "receiver_cost"}
_TASK_KEYS = {"priority", "kind"}
_WORKLOAD_KEYS = {"flow", "protocol", "port", "remote_port", "payload_len", "fragment", "pattern",
                  "rate", "count", "spacing", "start", "duration", "seed"}
_PARSERS = {"int": parse_int, "float": parse_float, "bool": parse_bool, "duration": parse_duration,
            "limit": parse_limit, "floats": parse_floats, "str": lambda t, k="": t.strip()}


@dataclass
class ExperimentConfig:
    """A parsed config file: a base simulation plus experiment parameters.

    ``entries`` keeps the normalised ``key -> text`` pairs so the file can be
    written back out (see :func:`dump_config`).
    """

    sim: SimConfig
    exp: ExpParams = field(default_factory=ExpParams)
    entries: dict = field(default_factory=dict)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        entries = dict(self.entries)
        entries["sim.seed"] = str(seed)
        return parse_config("".join(f"{k} = {v}\n" for k, v in entries.items()))


def _lines(text: str):
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"line {n}: expected 'section.key = value', got {raw.strip()!r}")
        yield n, key, value.strip()


def parse_config(text: str) -> ExperimentConfig:
    entries = {}
    for n, key, value in _lines(text):
        if key in entries:
            raise ConfigError(f"line {n}: duplicate key", key)
        entries[key] = value

    sim_kw, cost_kw, exp_kw = {}, {}, {}
    flows, tasks, loads = {}, {}, {}
    for key, value in entries.items():
        parts = key.split(".")
        section = parts[0]
        if section == "sim" and len(parts) == 2:
            kind = _SIM_KINDS.get(parts[1])
            if kind is None:
                raise ConfigError("unknown key", key)
            sim_kw[parts[1]] = _PARSERS[kind](value, key)
        elif section == "cost" and len(parts) == 2:
            if parts[1] not in {f.name for f in dataclasses.fields(CostModel)}:
                raise ConfigError("unknown cost parameter", key)
            cost_kw[parts[1]] = parse_duration(value, key)
        elif section == "exp" and len(parts) == 2:
            kind = _EXP_KINDS.get(parts[1])
            if kind is None:
                raise ConfigError("unknown key", key)
            exp_kw[parts[1]] = _PARSERS[kind](value, key)
        elif section in ("flow", "task", "workload") and len(parts) == 3:
            allowed, bucket = {"flow": (_FLOW_KEYS, flows), "task": (_TASK_KEYS, tasks),
                               "workload": (_WORKLOAD_KEYS, loads)}[section]
            if parts[2] not in allowed:
                raise ConfigError("unknown key", key)
            bucket.setdefault(parts[1], {})[parts[2]] = (key, value)
        else:
            raise ConfigError("unknown section or malformed key", key)

    try:
        cost = CostModel(**cost_kw)
    except FlowRxError as e:
        raise ConfigError(str(e), "cost") from None

    flow_cfgs = [_flow(name, kv) for name, kv in flows.items()]
    task_cfgs = [_task(name, kv) for name, kv in tasks.items()]
    by_name = {fc.name: fc for fc in flow_cfgs}
    load_entries = tuple(_workload(name, kv, by_name, sim_kw.get("seed", 0)) for name, kv in loads.items())

    sim = SimConfig(cost=cost, flows=flow_cfgs, tasks=task_cfgs,
                    workload=WorkloadSpec(load_entries), **sim_kw)
    sim.validate()
    exp = ExpParams(**exp_kw)
    _validate_exp(exp)
    return ExperimentConfig(sim, exp, dict(sorted(entries.items())))


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config: {e.strerror}", str(path)) from None
    except UnicodeDecodeError:
        raise ConfigError("config is not valid UTF-8", str(path)) from None
    return parse_config(text)


def dump_config(cfg: ExperimentConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in sorted(cfg.entries.items()))


def _get(kv, name, parser, default=None, required=False):
    if name not in kv:
        if required:
            raise ConfigError("required", kv.get("_prefix", "") + name)
        return default
    key, value = kv[name]
    return parser(value, key)


def _flow(name, kv) -> FlowConfig:
    prefix = f"flow.{name}."
    kv = dict(kv, _prefix=prefix)
    limit = _get(kv, "limit", parse_limit)
    return FlowConfig(
        name=name,
        protocol=_get(kv, "protocol", _PARSERS["str"], "udp"),
        port=_get(kv, "port", parse_int, required=True),
        priority=_get(kv, "priority", parse_int, required=True),
        capacity=None if limit is None else limit[0],
        period=None if limit is None else limit[1],
        receiver_priority=_get(kv, "receiver_priority", parse_int),
        receiver_cost=_get(kv, "receiver_cost", parse_duration, 0),
    )


def _task(name, kv) -> TaskDescriptor:
    kv = dict(kv, _prefix=f"task.{name}.")
    kind = _get(kv, "kind", _PARSERS["str"], BUSY)
    if kind not in (BUSY, MEASUREMENT):
        raise ConfigError(f"must be busy or measurement, got {kind!r}", f"task.{name}.kind")
    return TaskDescriptor(name, _get(kv, "priority", parse_int, required=True), kind)


def _workload(name, kv, flows, default_seed) -> WorkloadEntry:
    prefix = f"workload.{name}."
    kv = dict(kv, _prefix=prefix)
    flow_name = _get(kv, "flow", _PARSERS["str"])
    if flow_name is not None:
        if flow_name not in flows:
            raise ConfigError(f"no flow named {flow_name!r}", prefix + "flow")
        protocol, port = flows[flow_name].protocol, flows[flow_name].port
    else:
        protocol = _get(kv, "protocol", _PARSERS["str"], required=True)
        port = _get(kv, "port", parse_int)
    if protocol not in ("arp", "icmp", "udp", "tcp"):
        raise ConfigError(f"unknown protocol {protocol!r}", prefix + "protocol")
    if protocol in ("udp", "tcp") and port is None:
        raise ConfigError("udp/tcp traffic needs a port", prefix + "port")
    target = FrameSpec(protocol, port, _get(kv, "remote_port", parse_int),
                       _get(kv, "payload_len", parse_int, 0), _get(kv, "fragment", parse_bool, False))

    pattern = _get(kv, "pattern", _PARSERS["str"], "constant")
    if pattern == "constant":
        rate = _get(kv, "rate", parse_float, required=True)
        if not rate > 0:
            raise ConfigError(f"rate must be positive, got {_fmt_float(rate)}", prefix + "rate")
        pat = ConstantRate(rate)
    elif pattern == "poisson":
        rate = _get(kv, "rate", parse_float, required=True)
        if not rate > 0:
            raise ConfigError(f"rate must be positive, got {_fmt_float(rate)}", prefix + "rate")
        pat = Poisson(rate, _get(kv, "seed", parse_int, default_seed))
    elif pattern == "burst":
        count = _get(kv, "count", parse_int, required=True)
        if count < 0:
            raise ConfigError("must be >= 0", prefix + "count")
        spacing = _get(kv, "spacing", parse_duration, required=True)
        if spacing <= 0:
            raise ConfigError("must be positive", prefix + "spacing")
        pat = Burst(count, spacing)
    else:
        raise ConfigError(f"must be constant, poisson or burst, got {pattern!r}", prefix + "pattern")
    return WorkloadEntry(target, pat, _get(kv, "start", parse_duration, 0),
                         _get(kv, "duration", parse_duration), name)
