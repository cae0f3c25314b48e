"""The built-in experiments.

Each returns a :class:`Table` of raw values; ``Table.to_csv`` does the one
and only formatting step so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import io
import math
import sys
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ..engine import BASELINE, MEASUREMENT, MODIFIED, PATH_LABELS, FlowConfig, MetricsStore, \
    SimConfig, TaskDescriptor, run
from ..errors import ConfigError, InsufficientSamples
from ..model import S, FrameSpec
from ..workload import Burst, ConstantRate, WorkloadEntry, WorkloadSpec
from .config import ExperimentConfig, ExpParams

CPU_HEADER = ("rate", "variant", "avg_us_per_packet")
LATENCY_HEADER = ("path", "p0", "p90", "p99", "p999", "p9999")
MAP_HEADER = ("system", "hp_rate", "lp_rate", "cpu_util", "hp_liveness")
HEADROOM_HEADER = ("system", "limit_capacity", "limit_period_ns", "polling_onset_pps", "cpu_util_at_onset")

VARIANTS = ("modified-LP", "modified-LP-no-shortcircuit", "modified-LP-eager-cache", "modified-HP",
            "baseline")
QUANTILES = (0.0, 90.0, 99.0, 99.9, 99.99)
MODIFIED_PATHS = tuple(p for p in PATH_LABELS if p != "baseline")


@dataclass
class Table:
    name: str
    header: tuple
    rows: list
    notes: list = field(default_factory=list)

    def column(self, name):
        i = self.header.index(name)
        return [r[i] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for row in self.rows:
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()


def _fmt(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, float):
        if math.isnan(v):
            return "NA"
        return f"{v:.4f}"
    return str(v)


def _rate_value(r: float):
    return int(r) if float(r).is_integer() else float(r)


# -- shared scenario -----------------------------------------------------------


def _flows(p: ExpParams, hp_limit=None):
    cap, per = hp_limit if hp_limit is not None else (None, None)
    return [FlowConfig("hp", "udp", p.hp_port, p.hp_priority, cap, per),
            FlowConfig("lp", "udp", p.lp_port, p.lp_priority)]


def _scenario(base: SimConfig, p: ExpParams, entries, until, hp_limit=None, **changes) -> SimConfig:
    return replace(base, flows=_flows(p, hp_limit),
                   tasks=[TaskDescriptor("measurement", p.measurement_priority, MEASUREMENT)],
                   workload=WorkloadSpec(tuple(entries)), until=until, **changes)


def _flood(port, pattern, name, start=0):
    return WorkloadEntry(FrameSpec("udp", port), pattern, start=start, name=name)


# -- CPU time per packet ---------------------------------------------------------------


def cpu_variant_config(cfg: ExperimentConfig, variant: str, rate: float) -> SimConfig:
    p = cfg.exp
    base = replace(cfg.sim, global_limit=None)
    port = p.hp_port if variant == "modified-HP" else p.lp_port
    flood = [_flood(port, ConstantRate(rate), "flood")]
    kw = dict(system=MODIFIED, shortcircuit=True, eager_cache=False)
    if variant == "modified-LP-no-shortcircuit":
        kw["shortcircuit"] = False
    elif variant == "modified-LP-eager-cache":
        kw.update(shortcircuit=False, eager_cache=True)
    elif variant == "baseline":
        kw["system"] = BASELINE
    elif variant not in ("modified-LP", "modified-HP"):
        raise ConfigError(f"unknown variant {variant!r}", "exp.variant")
    return _scenario(base, p, flood, p.duration, **kw)


def exp_cpu_per_packet(cfg: ExperimentConfig, variants=VARIANTS) -> Table:
    rows = []
    for rate in cfg.exp.rates:
        for v in variants:
            m = run(cpu_variant_config(cfg, v, rate))
            rows.append((_rate_value(rate), v, m.avg_packet_cost / 1000.0))
    order = {v: i for i, v in enumerate(VARIANTS)}
    rows.sort(key=lambda r: (r[0], order.get(r[1], len(order)), r[1]))
    return Table("cpu_per_packet", CPU_HEADER, rows)


# -- ISR path latency -------------------------------------------------------------------


def latency_config(cfg: ExperimentConfig) -> SimConfig:
    """LP flood, then a rate-limited HP flood of the same size."""
    p = cfg.exp
    span = p.flood_size * p.flood_spacing
    hp_start = span if p.hp_flood_start is None else p.hp_flood_start
    lp = _flood(p.lp_port, Burst(p.flood_size, p.flood_spacing), "lp")
    hp = _flood(p.hp_port, Burst(p.flood_size, p.flood_spacing), "hp", start=hp_start)
    end = max(span, hp_start + span)
    return _scenario(replace(cfg.sim, global_limit=None), p, [lp, hp], end + S // 100,
                     hp_limit=p.hp_limit, system=MODIFIED)


def path_percentiles(hist: dict, min_samples: int = 100):
    """Percentiles (us) of one path's duration histogram ``{ns: count}``."""
    n = sum(hist.values())
    if n < min_samples:
        raise InsufficientSamples(f"{n} samples, need {min_samples}")
    keys = np.fromiter(hist.keys(), dtype=np.int64, count=len(hist))
    counts = np.fromiter(hist.values(), dtype=np.int64, count=len(hist))
    samples = np.repeat(keys, counts)
    q = np.percentile(samples, QUANTILES, method="inverted_cdf")
    return tuple(float(x) / 1000.0 for x in q)


def exp_latency_dist(cfg: ExperimentConfig, metrics: Optional[MetricsStore] = None) -> Table:
    m = metrics if metrics is not None else run(latency_config(cfg))
    rows, notes = [], []
    for path in MODIFIED_PATHS:
        hist = m.path_latency.get(path, {})
        try:
            rows.append((path,) + path_percentiles(hist, cfg.exp.min_samples))
        except InsufficientSamples as e:
            notes.append(f"{path}: insufficient samples ({e})")
            rows.append((path,) + (None,) * len(QUANTILES))
    return Table("latency_dist", LATENCY_HEADER, rows, notes)


# -- mitigation map --------------------------------------------------------------------------


def map_cell_config(cfg: ExperimentConfig, system: str, hp_rate: float, lp_rate: float) -> SimConfig:
    p = cfg.exp
    entries = []
    if hp_rate > 0:
        entries.append(_flood(p.hp_port, ConstantRate(hp_rate), "hp"))
    if lp_rate > 0:
        entries.append(_flood(p.lp_port, ConstantRate(lp_rate), "lp"))
    limit = p.modified_limit if system == MODIFIED else p.baseline_limit
    return _scenario(cfg.sim, p, entries, p.cell_duration, hp_limit=p.hp_limit, system=system,
                     global_limit=limit, shortcircuit=True, eager_cache=False)


def map_cell(cfg: ExperimentConfig, system: str, hp_rate: float, lp_rate: float) -> MetricsStore:
    return run(map_cell_config(cfg, system, hp_rate, lp_rate))


def exp_mitigation_map(cfg: ExperimentConfig, systems=(MODIFIED, BASELINE), on_cell=None) -> Table:
    """``on_cell(system, hp_rate, lp_rate, metrics)`` is called after each cell, if given."""
    p = cfg.exp
    rows = []
    for system in systems:
        for hp in p.hp_rates:
            for lp in p.lp_rates:
                m = map_cell(cfg, system, hp, lp)
                rows.append((system, _rate_value(hp), _rate_value(lp), m.cpu_util,
                             m.flow(f"udp:{p.hp_port}").liveness))
                if on_cell is not None:
                    on_cell(system, hp, lp, m)
    rows.sort(key=lambda r: (r[0] != MODIFIED, r[0], r[1], r[2]))
    return Table("mitigation_map", MAP_HEADER, rows)


# -- sustained-load headroom ----------------------------------------------------------------------


def budget_limits(cfg: ExperimentConfig):
    """Global limits giving both systems the same packet-processing CPU budget.

    A budget of ``cpu_budget`` of each ``budget_period`` admits as many
    packets as fit at the per-packet IRQ cost of each system.
    """
    p, cost = cfg.exp, cfg.sim.cost
    budget = p.cpu_budget * p.budget_period
    return {MODIFIED: (max(1, int(budget // cost.isr_regular)), p.budget_period),
            BASELINE: (max(1, int(budget // cost.baseline_full)), p.budget_period)}


def _headroom_run(cfg, system, limit, rate) -> MetricsStore:
    p = cfg.exp
    flood = [_flood(p.lp_port, ConstantRate(rate), "lp")]
    return run(_scenario(cfg.sim, p, flood, p.headroom_duration, system=system, global_limit=limit,
                         shortcircuit=True, eager_cache=False))


def polling_onset(cfg: ExperimentConfig, system: str, limit, rel_tol: float = 0.005):
    """Lowest constant LP rate (pkt/s) that drives the system into polling.

    Bracket by doubling, then bisect until the bracket is within ``rel_tol``.
    Returns ``(rate, metrics just below onset)``.
    """
    lo, hi = 10.0, 20.0
    m_lo = _headroom_run(cfg, system, limit, lo)
    if m_lo.polling_entries:
        raise ConfigError(f"{system} polls even at {lo} pkt/s", "exp.cpu_budget")
    while not _headroom_run(cfg, system, limit, hi).polling_entries:
        lo, hi = hi, hi * 2
        if hi > 1e8:
            raise ConfigError(f"{system} never enters polling", "exp.cpu_budget")
    while hi / lo > 1 + rel_tol:
        mid = math.sqrt(lo * hi)
        m = _headroom_run(cfg, system, limit, mid)
        if m.polling_entries:
            hi = mid
        else:
            lo, m_lo = mid, m
    return hi, m_lo


def exp_headroom(cfg: ExperimentConfig) -> Table:
    limits = budget_limits(cfg)
    rows = []
    for system in (MODIFIED, BASELINE):
        onset, m = polling_onset(cfg, system, limits[system])
        rows.append((system, limits[system][0], limits[system][1], round(onset, 1), m.cpu_util))
    analytic = cfg.sim.cost.baseline_full / cfg.sim.cost.isr_regular
    ratio = rows[0][3] / rows[1][3]
    return Table("headroom", HEADROOM_HEADER, rows,
                 [f"analytic ratio {analytic:.3f}", f"empirical onset ratio {ratio:.3f}"])


EXPERIMENTS = {
    "cpu-per-packet": exp_cpu_per_packet,
    "latency-dist": exp_latency_dist,
    "mitigation-map": exp_mitigation_map,
    "headroom": exp_headroom,
}


def warn(msg: str) -> None:
    print(f"flowrx: {msg}", file=sys.stderr)
