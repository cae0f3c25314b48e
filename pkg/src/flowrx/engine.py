"""Deterministic discrete-event simulation of a single-core receive path.

Execution contexts, from most to least urgent: the receive ISR (never
preempted, never nested), then tasks by fixed priority, then idle.  Tasks
carry remaining work and are preempted simply by re-picking the most
important ready context after every event.

Two systems are modelled:

``modified``
    ISR demultiplexes into the flow queues (regular / shortcircuit /
    mitigating / prio-raise / recycle-raise paths); a single network task
    inherits the highest queued-or-in-process flow priority and finishes
    the packets.
``baseline``
    Every packet is fully processed at ``baseline_full`` cost in interrupt
    context, in ring order.

Both optionally sit behind a global deferrable server.  When an arrival finds
the global budget exhausted the receive IRQ is masked and a polling task
drains the ring once per server period, until a period starts whose budget is
not immediately used up.
"""

from __future__ import annotations

import enum
from bisect import bisect_left, bisect_right
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .buffer_pool import DEFAULT_RECYCLE_THRESHOLD, DEFAULT_RING_SIZE, BdRing
from .classifier import DEFAULT_MAX_ENTRIES, SocketTable, classify
from .errors import ConfigError, FlowRxError, InvariantViolation, RingEmpty
from .flow_queues import FlowQueueSet
from .model import (BACKGROUND_PRIO, DEFAULT_ARP_ICMP_PRIO, MAX_PRIO, TIME_LIMIT, S,
                    CostModel, FlowKey, Packet, build_frame, decode_headers)
from .rate_limiter import DeferrableServer
from .workload import WorkloadSpec, generate

MODIFIED = "modified"
BASELINE = "baseline"


class IsrPath(enum.IntEnum):
    REGULAR = 0
    SHORTCIRCUIT = 1
    MITIGATING = 2
    PRIO_RAISE = 3
    RECYCLE_RAISE = 4
    BASELINE = 5

    @property
    def label(self) -> str:
        return _PATH_LABELS[self]


_PATH_LABELS = ["regular", "shortcircuit", "mitigating", "prio_raise", "recycle_raise", "baseline"]
PATH_LABELS = tuple(_PATH_LABELS)

_REG, _SC, _MIT, _RAISE, _RECRAISE, _BASE = range(6)
_PATHS = list(IsrPath)


class Mode(enum.Enum):
    IRQ = "irq"
    POLLING = "polling"


class Progress(enum.Enum):
    PROCESSED = "processed"
    BLOCKED = "blocked"


BUSY = "busy"
MEASUREMENT = "measurement"
RECEIVER = "receiver"
NETWORK = "network"
POLLING = "polling"
BEHAVIORS = (BUSY, MEASUREMENT, RECEIVER, NETWORK, POLLING)


@dataclass
class TaskDescriptor:
    name: str
    base_priority: int
    behavior: str = BUSY
    flow: Optional[FlowKey] = None
    cost: int = 0


@dataclass
class FlowConfig:
    name: str
    protocol: str
    port: int
    priority: int
    capacity: Optional[int] = None
    period: Optional[int] = None
    receiver_priority: Optional[int] = None
    receiver_cost: int = 0

    @property
    def key(self) -> FlowKey:
        return FlowKey(self.protocol, self.port)


@dataclass
class SimConfig:
    system: str = MODIFIED
    cost: CostModel = field(default_factory=CostModel)
    flows: list = field(default_factory=list)
    tasks: list = field(default_factory=list)
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    until: int = 1 * S
    seed: int = 0
    ring_size: int = DEFAULT_RING_SIZE
    recycle_threshold: float = DEFAULT_RECYCLE_THRESHOLD
    max_prio: int = MAX_PRIO
    global_limit: Optional[tuple] = None  # (capacity, period ns)
    shortcircuit: bool = True
    eager_cache: bool = False
    network_floor: int = BACKGROUND_PRIO
    poll_priority: Optional[int] = None  # None -> max_prio
    arp_icmp_priority: int = DEFAULT_ARP_ICMP_PRIO
    max_sockets: int = DEFAULT_MAX_ENTRIES
    instrumentation_overhead: float = 0.0
    isr_jitter: float = 0.0
    audit: bool = False
    trace: bool = False

    def validate(self) -> None:
        def prio(name, v):
            if not isinstance(v, int) or not 0 <= v <= self.max_prio:
                raise ConfigError(f"priority must be an integer in 0..{self.max_prio}, got {v!r}", name)

        if self.system not in (MODIFIED, BASELINE):
            raise ConfigError(f"must be 'modified' or 'baseline', got {self.system!r}", "sim.system")
        if not isinstance(self.until, int) or self.until <= 0 or self.until > TIME_LIMIT:
            raise ConfigError(f"must be a positive duration, got {self.until!r}", "sim.until")
        if not isinstance(self.max_prio, int) or self.max_prio < 1:
            raise ConfigError("must be an integer >= 1", "sim.max_prio")
        if not isinstance(self.ring_size, int) or self.ring_size < 1:
            raise ConfigError(f"must be >= 1, got {self.ring_size!r}", "sim.ring_size")
        if not 0 <= self.recycle_threshold <= 1:
            raise ConfigError(f"must be in [0, 1], got {self.recycle_threshold}", "sim.recycle_threshold")
        if self.global_limit is not None:
            cap, per = self.global_limit
            if not isinstance(cap, int) or cap < 1 or not isinstance(per, int) or per <= 0:
                raise ConfigError(f"needs capacity >= 1 and period > 0, got {self.global_limit}",
                                  "sim.global_limit")
        prio("sim.network_floor", self.network_floor)
        prio("sim.arp_icmp_priority", self.arp_icmp_priority)
        if self.poll_priority is not None:
            prio("sim.poll_priority", self.poll_priority)
        if self.instrumentation_overhead < 0:
            raise ConfigError("must be >= 0", "sim.instrumentation_overhead")
        if self.isr_jitter < 0:
            raise ConfigError("must be >= 0", "sim.isr_jitter")
        names, keys = set(), set()
        for fc in self.flows:
            base = f"flow.{fc.name}"
            if fc.name in names:
                raise ConfigError("duplicate flow name", base)
            names.add(fc.name)
            if fc.protocol not in ("udp", "tcp"):
                raise ConfigError(f"must be udp or tcp, got {fc.protocol!r}", base + ".protocol")
            if not isinstance(fc.port, int) or not 0 <= fc.port <= 0xFFFF:
                raise ConfigError(f"must be a 16-bit port, got {fc.port!r}", base + ".port")
            if fc.key in keys:
                raise ConfigError(f"{fc.key} bound twice", base + ".port")
            keys.add(fc.key)
            prio(base + ".priority", fc.priority)
            if fc.receiver_priority is not None:
                prio(base + ".receiver_priority", fc.receiver_priority)
            if fc.capacity is not None:
                if not isinstance(fc.capacity, int) or fc.capacity < 1:
                    raise ConfigError(f"must be >= 1, got {fc.capacity!r}", base + ".capacity")
                if not isinstance(fc.period, int) or fc.period <= 0:
                    raise ConfigError(f"must be a positive duration, got {fc.period!r}", base + ".period")
            if fc.receiver_cost < 0:
                raise ConfigError("must be >= 0", base + ".receiver_cost")
        if len(self.flows) > self.max_sockets:
            raise ConfigError(f"{len(self.flows)} flows exceed the socket table size {self.max_sockets}",
                              "sim.max_sockets")
        for td in self.tasks:
            base = f"task.{td.name}"
            if td.behavior not in (BUSY, MEASUREMENT):
                raise ConfigError(f"must be busy or measurement, got {td.behavior!r}", base + ".kind")
            prio(base + ".priority", td.base_priority)
        if sum(td.behavior == MEASUREMENT for td in self.tasks) > 1:
            raise ConfigError("at most one measurement task", "task")
        for i, entry in enumerate(self.workload.entries):
            name = f"workload.{entry.name or i}"
            rate = getattr(entry.pattern, "rate", None)
            if rate is not None and not rate > 0:
                raise ConfigError(f"must be positive, got {rate}", name + ".rate")


@dataclass
class FlowMetrics:
    sent: int = 0
    received: int = 0
    delivered: int = 0
    dropped_nic: int = 0
    dropped_shortcircuit: int = 0
    dropped_rate_limit: int = 0
    dropped_revoked: int = 0

    @property
    def liveness(self) -> float:
        return self.delivered / self.sent if self.sent else float("nan")


@dataclass
class MetricsStore:
    system: str
    elapsed: int = 0
    idle_time: int = 0
    isr_time: int = 0
    task_time: dict = field(default_factory=dict)
    task_kind: dict = field(default_factory=dict)
    path_counts: dict = field(default_factory=dict)
    poll_path_counts: dict = field(default_factory=dict)
    path_latency: dict = field(default_factory=dict)  # label -> {duration ns: count}
    flows: dict = field(default_factory=dict)          # str(FlowKey) -> FlowMetrics
    handled_isr: int = 0
    handled_poll: int = 0
    polling_entries: int = 0
    polling_time: int = 0
    measurement_task: Optional[str] = None
    audit_checks: int = 0
    trace: list = field(default_factory=list)
    deliveries: list = field(default_factory=list)

    @property
    def handled(self) -> int:
        return self.handled_isr + self.handled_poll

    @property
    def packet_cpu_time(self) -> int:
        return self.isr_time + sum(t for n, t in self.task_time.items()
                                   if self.task_kind[n] in (NETWORK, POLLING, RECEIVER))

    @property
    def avg_packet_cost(self) -> float:
        """Packet-processing CPU per handled packet, ns."""
        return self.packet_cpu_time / self.handled if self.handled else float("nan")

    @property
    def cpu_util(self) -> float:
        if not self.elapsed:
            return 0.0
        if self.measurement_task is not None:
            return 1.0 - self.task_time[self.measurement_task] / self.elapsed
        return self.packet_cpu_time / self.elapsed

    def check_conservation(self) -> None:
        total = self.idle_time + self.isr_time + sum(self.task_time.values())
        if total != self.elapsed:
            raise InvariantViolation(f"CPU time {total} != elapsed {self.elapsed}")

    def flow(self, key) -> FlowMetrics:
        return self.flows[str(key)]


class _Task:
    __slots__ = ("name", "kind", "priority", "order", "cost", "flow", "remaining", "active",
                 "cpu", "pending", "job")

    def __init__(self, name, kind, priority, order, cost=0, flow=None):
        self.name = name
        self.kind = kind
        self.priority = priority
        self.order = order
        self.cost = cost
        self.flow = flow
        self.remaining = 0
        self.active = False
        self.cpu = 0
        self.pending = 0
        self.job = None


class _StreamInfo:
    __slots__ = ("flow", "prio", "summary", "payload_len", "fm", "qflow")

    def __init__(self, flow, prio, summary, payload_len, fm, qflow):
        self.flow = flow
        self.prio = prio
        self.summary = summary
        self.payload_len = payload_len
        self.fm = fm
        self.qflow = qflow


_FOREVER = 1 << 80


class Simulator:
    def __init__(self, config: SimConfig):
        config.validate()
        self.cfg = config
        self.cost = config.cost
        self.baseline = config.system == BASELINE
        self.until = config.until
        self.max_prio = config.max_prio
        self.table = SocketTable(config.max_sockets, config.max_prio)
        self.queues = FlowQueueSet(config.max_prio)
        self.ring = BdRing(config.ring_size, config.recycle_threshold)
        self.global_server = (DeferrableServer(*config.global_limit)
                              if config.global_limit is not None else None)
        self.shortcircuit = config.shortcircuit
        self.clock = 0
        self.polling = False
        self._polling_since = 0
        self._next_boundary = _FOREVER
        self.rng = np.random.default_rng(config.seed)
        self.metrics = MetricsStore(config.system)
        self._flow_metrics = {}
        self._prio_of = {}

        self.queues.register_flow(FlowKey.ARP_ICMP, config.arp_icmp_priority)
        self.queues.register_flow(FlowKey.BACKGROUND, BACKGROUND_PRIO)
        self._prio_of[FlowKey.ARP_ICMP] = config.arp_icmp_priority
        self._prio_of[FlowKey.BACKGROUND] = BACKGROUND_PRIO
        for fc in config.flows:
            self.table.bind(fc.protocol, fc.port, fc.priority, fc.capacity, fc.period)
            self.queues.register_flow(fc.key, fc.priority, fc.capacity, fc.period)
            self._prio_of[fc.key] = fc.priority
        for key in self._prio_of:
            self._flow_metrics[key] = FlowMetrics()

        # tasks; equal priorities resolve by this order
        self.tasks = []
        self.network = None
        self.poller = None
        self._receivers = {}
        if self.global_server is not None:
            pp = config.poll_priority if config.poll_priority is not None else config.max_prio
            self.poller = self._add_task("polling", POLLING, pp)
            self.poller.job = deque()
        if not self.baseline:
            self.network = self._add_task("network", NETWORK, config.network_floor)
        for fc in config.flows:
            rp = fc.receiver_priority if fc.receiver_priority is not None else fc.priority
            rx = self._add_task(f"rx:{fc.name}", RECEIVER, rp, cost=fc.receiver_cost, flow=fc.key)
            self._receivers[fc.key] = rx
        for td in config.tasks:
            self._add_task(td.name, td.behavior, td.base_priority)
            if td.behavior == MEASUREMENT:
                self.metrics.measurement_task = td.name
        self._net_prio = config.network_floor
        self._net_current = None
        self._raises = []

        # ISR path costs
        over = 1.0 + config.instrumentation_overhead
        extra = self.cost.isr_eager_cache_extra if config.eager_cache else 0
        base = [self.cost.isr_regular, self.cost.isr_shortcircuit, self.cost.isr_mitigating,
                self.cost.isr_prio_raise, self.cost.isr_recycle_raise, self.cost.baseline_full]
        self._path_cost = [int(round((c + (extra if i != _BASE else 0)) * over))
                           for i, c in enumerate(base)]
        self._path_counts = [0] * len(_PATHS)
        self._poll_counts = [0] * len(_PATHS)
        self._jitter = config.isr_jitter
        self._latency = [Counter() for _ in _PATHS] if self._jitter else None

        # arrivals
        times, streams = generate(config.workload, config.until)
        self._times = times.tolist()
        self._streams = streams.tolist()
        self._n_arrivals = len(self._times)
        self._idx = 0
        self._received = deque()
        self._stream_info = []
        self._stream_received = [0] * len(config.workload.entries)
        for entry in config.workload.entries:
            self._stream_info.append(self._classify_frame(build_frame(entry.target),
                                                          entry.target.payload_len))
        self._stream_sent = np.bincount(streams[: bisect_left(self._times, config.until)],
                                        minlength=len(config.workload.entries)).tolist()

        self.audit = config.audit
        self.trace = config.trace
        self._fast_env = None
        self._sc_by_stream = [0] * len(self._stream_info)

    def _add_task(self, name, kind, priority, cost=0, flow=None):
        if any(t.name == name for t in self.tasks):
            raise ConfigError("duplicate task name", f"task.{name}")
        t = _Task(name, kind, priority, len(self.tasks), cost, flow)
        self.tasks.append(t)
        return t

    def _classify_frame(self, frame, payload_len=0):
        summary = decode_headers(frame)
        flow = classify(summary, self.table)
        return _StreamInfo(flow, self._prio_of[flow], summary, payload_len,
                           self._flow_metrics[flow], self.queues.flow_state(flow))

    # -- network task priority ---------------------------------------------

    @property
    def network_priority(self) -> int:
        return self._net_prio

    def recompute_network_priority(self, processing: Optional[FlowKey] = None) -> int:
        cands = []
        hi = self.queues.highest_enqueued_priority()
        if hi is not None:
            cands.append(hi)
        if processing is not None:
            cands.append(self._prio_of[processing])
        return max(cands) if cands else self.cfg.network_floor

    def _formula_priority(self) -> int:
        # independent of the bitmap bookkeeping: scan every flow
        prios = [self._prio_of[f] for f in self.queues.flows() if self.queues.length(f)]
        if self._net_current is not None:
            prios.append(self._prio_of[self._net_current.flow])
        return max(prios) if prios else self.cfg.network_floor

    def _lower_net_prio(self):
        mask = self.queues._mask
        if mask and mask.bit_length() - 1 >= self._net_prio:
            return
        cur = self._net_current
        new = self.recompute_network_priority(cur.flow if cur is not None else None)
        if new < self._net_prio:
            self._net_prio = new
            self._raises.clear()

    # -- ISR paths ------------------------------------------------------------

    def _demux(self, buf, info, arrival, now):
        """First driver half: decide the path for one received buffer."""
        ring = self.ring
        q = self.queues
        flow = info.flow
        prio = info.prio
        recycle = len(ring._free) <= ring.threshold_count
        if recycle and self.shortcircuit:
            low = q.lowest_enqueued_priority()
            if low is not None and prio <= low:
                ring.return_buffer(buf)
                q.note_shortcircuit(flow)
                info.fm.dropped_shortcircuit += 1
                return _SC
        if not q.admit(flow, now):
            ring.return_buffer(buf)
            info.fm.dropped_rate_limit += 1
            return _MIT
        recycled = False
        if recycle:
            victim = q.revoke_lowest(now)
            if victim is not None:
                ring.return_buffer(victim.buffer_id)
                self._flow_metrics[victim.flow].dropped_revoked += 1
                recycled = True
        q.push(Packet(buf, flow, arrival, info.payload_len, info.summary))
        if prio > self._net_prio:
            if self.audit:
                self._check_raise(prio)
            self._net_prio = prio
            return _RECRAISE if recycled else _RAISE
        if recycled:
            self._lower_net_prio()
        return _REG

    def _check_raise(self, prio):
        r = self._raises
        if r and prio <= r[-1]:
            raise InvariantViolation(f"priority raise to {prio} after {r[-1]} without processing")
        r.append(prio)

    def _isr_cost(self, path):
        c = self._path_cost[path]
        if self._jitter:
            c = int(round(c * (1.0 + self.rng.uniform(0.0, self._jitter))))
            self._latency[path][c] += 1
        return c

    def isr_handle_arrival(self, frame, now: int) -> IsrPath:
        """Run the receive ISR for one frame at ``now`` outside the event loop.

        Takes a ring buffer for the frame (``RingEmpty`` if none is free, the
        packet then counts as a NIC drop), demultiplexes it, and charges the
        ISR time.  The caller is responsible for ordering calls in time.
        """
        info = self._classify_frame(frame, max(0, len(frame) - 42))
        info.fm.sent += 1
        try:
            buf = self.ring.take_buffer()
        except RingEmpty:
            info.fm.dropped_nic += 1
            raise
        info.fm.received += 1
        self.clock = max(self.clock, now)
        if self.baseline:
            path = _BASE
            self._complete_baseline(buf, info)
        else:
            path = self._demux(buf, info, now, now)
        cost = self._isr_cost(path)
        self._path_counts[path] += 1
        self.metrics.isr_time += cost
        self.metrics.handled_isr += 1
        if self.trace:
            self.metrics.trace.append((now, _PATHS[path], str(info.flow), self._net_prio))
        return _PATHS[path]

    def _complete_baseline(self, buf, info):
        self.ring.return_buffer(buf)
        self._deliver(info.flow, info.fm)

    def _deliver(self, flow, fm):
        rx = self._receivers.get(flow)
        if rx is not None and rx.cost > 0:
            rx.pending += 1
        else:
            fm.delivered += 1
            if self.trace:
                self.metrics.deliveries.append((self.clock, str(flow)))

    # -- network task -----------------------------------------------------------

    def network_task_step(self, now: int):
        """Process one packet to completion at ``now`` (outside the event loop)."""
        if self.network is None:
            raise FlowRxError("the baseline system has no network task")
        pkt = self.queues.dequeue_highest(now)
        if pkt is None:
            return Progress.BLOCKED, None
        self.clock = max(self.clock, now)
        self._net_current = pkt
        self._raises.clear()
        self.network.cpu += self.cost.proto_processing
        self._finish_network(pkt)
        return Progress.PROCESSED, pkt.flow

    def _finish_network(self, pkt):
        self.ring.return_buffer(pkt.buffer_id)
        self._net_current = None
        self._deliver(pkt.flow, self._flow_metrics[pkt.flow])
        self._lower_net_prio()

    # -- global limit ---------------------------------------------------------------

    @property
    def mode(self) -> Mode:
        return Mode.POLLING if self.polling else Mode.IRQ

    def _enter_polling(self, now):
        self.polling = True
        self._polling_since = now
        self.metrics.polling_entries += 1
        self._next_boundary = self.global_server.next_boundary(now)

    def global_limit_tick(self, now: int) -> Mode:
        """Period-boundary step of the global limiter while polling."""
        gs = self.global_server
        if gs is None or not self.polling:
            return self.mode
        n = min(len(self._received), gs.capacity)
        gs.try_consume(now, n)
        if n:
            self.poller.job.append([self._received.popleft() for _ in range(n)])
        if n < gs.capacity:
            self.polling = False
            self.metrics.polling_time += now - self._polling_since
            self._next_boundary = _FOREVER
        else:
            self._next_boundary = now + gs.period
        return self.mode

    # -- arrivals ---------------------------------------------------------------------

    def _ingest(self, t, inclusive=True):
        """Move arrivals up to ``t`` into the ring; no free descriptor = NIC drop."""
        times = self._times
        idx = self._idx
        n = self._n_arrivals
        limit = t if inclusive else t - 1
        if limit >= self.until:
            limit = self.until - 1
        if idx >= n or times[idx] > limit:
            return
        free = self.ring._free
        take = self.ring.take_buffer
        recv = self._received
        streams = self._streams
        srecv = self._stream_received
        while idx < n and times[idx] <= limit:
            if free:
                s = streams[idx]
                recv.append((take(), s, times[idx]))
                srecv[s] += 1
                idx += 1
            else:
                idx = bisect_right(times, limit, idx)
                break
        self._idx = idx

    # -- main loop ------------------------------------------------------------------------

    def _isr_chain(self):
        """Back-to-back ISR invocations while received buffers are pending."""
        if not (self.baseline or self._jitter or self.trace or self.audit):
            self._isr_chain_fast()
            return
        c = self.clock
        until = self.until
        recv = self._received
        gs = self.global_server
        counts = self._path_counts
        infos = self._stream_info
        base = self.baseline
        cost_of = self._path_cost
        jitter = self._jitter
        audit = self.audit
        trace = self.trace
        m = self.metrics
        times = self._times
        n_arr = self._n_arrivals
        isr_time = 0
        handled = 0
        while recv and c < until:
            if gs is not None and not gs.try_consume(c):
                self._enter_polling(c)
                break
            buf, s, arr = recv.popleft()
            info = infos[s]
            handled += 1
            path = _BASE if base else self._demux(buf, info, arr, c)
            cost = self._isr_cost(path) if jitter else cost_of[path]
            counts[path] += 1
            if trace:
                m.trace.append((c, _PATHS[path], str(info.flow), self._net_prio))
            end = c + cost
            if end > until:
                isr_time += until - c
                c = until
                break
            isr_time += cost
            if base:
                self._ingest(end, inclusive=False)
                self.clock = end
                self._complete_baseline(buf, info)
            c = end
            self.clock = c
            if self._idx < n_arr and times[self._idx] <= c:
                self._ingest(c)
            if audit:
                self._audit()
        self.clock = c
        m.isr_time += isr_time
        m.handled_isr += handled

    def _isr_chain_fast(self):
        # Same semantics as _demux + _ingest, inlined for the common case (no
        # baseline, jitter, trace or audit).  Keep the two in step.
        env = self._fast_env
        if env is None:
            env = self._fast_env = self._make_fast_env()
        (until, last_arrival, recv, popleft, push_recv, gs, infos, cost_of, sc_cost, times,
         streams, srecv, n_arr, free, take_free, give_free, out_add, out_remove, thr, q, sc,
         levels, counts, sc_by_stream) = env
        c = self.clock
        idx = self._idx
        isr_time = 0
        handled0 = sum(counts)
        while recv and c < until:
            if gs is not None and not gs.try_consume(c):
                self._enter_polling(c)
                break
            buf, s, arr = popleft()
            info = infos[s]
            prio = info.prio
            mask = q._mask
            recycle = len(free) <= thr
            if recycle and sc and mask and prio <= (mask & -mask).bit_length() - 1:
                out_remove(buf)
                give_free(buf)
                sc_by_stream[s] += 1
                cost = sc_cost
                path = _SC
            else:
                qf = info.qflow
                srv = qf.server
                if srv is not None and not srv.try_consume(c):
                    qf.declined_rate += 1
                    out_remove(buf)
                    give_free(buf)
                    info.fm.dropped_rate_limit += 1
                    path = _MIT
                else:
                    qf.accepted += 1
                    recycled = rotated = False
                    if recycle and mask:
                        # FlowQueueSet.revoke_lowest, inlined
                        level = (mask & -mask).bit_length() - 1
                        lring = levels[level]
                        vf = lring[0]
                        vq = vf.queue
                        if vf is qf and len(vq) > 1:
                            # revoking the head and appending the arrival is a
                            # rotation; levels, mask and network priority stay put
                            victim = vq[0]
                            vq.rotate(-1)
                            vf.revoked += 1
                            vb = victim.buffer_id
                            out_remove(vb)
                            give_free(vb)
                            victim.buffer_id = buf
                            victim.arrival = arr
                            victim.payload_len = info.payload_len
                            victim.summary = info.summary
                            rotated = True
                        else:
                            victim = vq.popleft()
                            vf.revoked += 1
                            if not vq:
                                lring.popleft()
                                if not lring:
                                    q._mask = mask & ~(1 << level)
                            q._total -= 1
                            vb = victim.buffer_id
                            out_remove(vb)
                            give_free(vb)
                            recycled = True
                    if rotated:
                        path = _REG
                    else:
                        qq = qf.queue
                        if not qq:
                            levels[qf.priority].append(qf)
                            q._mask |= 1 << qf.priority
                        qq.append(Packet(buf, info.flow, arr, info.payload_len, info.summary))
                        q._total += 1
                        if prio > self._net_prio:
                            self._net_prio = prio
                            path = _RECRAISE if recycled else _RAISE
                        else:
                            if recycled:
                                m2 = q._mask
                                if not m2 or m2.bit_length() - 1 < self._net_prio:
                                    self._lower_net_prio()
                            path = _REG
                cost = cost_of[path]
            counts[path] += 1
            end = c + cost
            if end > until:
                isr_time += until - c
                c = until
                break
            isr_time += cost
            c = end
            if idx < n_arr and times[idx] <= c:
                # free only grows inside the ISR, so the first len(free) due
                # arrivals get buffers and the rest are NIC drops
                j = bisect_right(times, c if c <= last_arrival else last_arrival, idx)
                k = len(free)
                if k:
                    if k > j - idx:
                        k = j - idx
                    while k:
                        s2 = streams[idx]
                        b = take_free()
                        out_add(b)
                        push_recv((b, s2, times[idx]))
                        srecv[s2] += 1
                        idx += 1
                        k -= 1
                idx = j
        self._idx = idx
        self.clock = c
        self.metrics.isr_time += isr_time
        self.metrics.handled_isr += sum(counts) - handled0

    def _make_fast_env(self):
        ring = self.ring
        recv = self._received
        free = ring._free
        out = ring.buffers_out
        return (self.until, self.until - 1, recv, recv.popleft, recv.append, self.global_server,
                self._stream_info, self._path_cost, self._path_cost[_SC], self._times,
                self._streams, self._stream_received, self._n_arrivals, free, free.pop,
                free.append, out.add, out.remove, ring.threshold_count, self.queues,
                self.shortcircuit, self.queues._levels, self._path_counts,
                self._sc_by_stream)

    def _flush_fast_counters(self):
        # the fast path counts revocations only on the queue records
        for key, fm in self._flow_metrics.items():
            fm.dropped_revoked = self.queues.flow_state(key).revoked
        for s, k in enumerate(self._sc_by_stream):
            if k:
                info = self._stream_info[s]
                info.qflow.shortcircuited += k
                info.fm.dropped_shortcircuit += k
                self._sc_by_stream[s] = 0

    def _pick(self):
        best = None
        bp = -1
        for t in self.tasks:
            k = t.kind
            if k == NETWORK:
                if self._net_current is None and not len(self.queues):
                    continue
                p = self._net_prio
            elif k == POLLING:
                if not t.active and not t.job:
                    continue
                p = t.priority
            elif k == RECEIVER:
                if not t.active and not t.pending:
                    continue
                p = t.priority
            else:
                p = t.priority
            if p > bp:
                best, bp = t, p
        return best

    def _start(self, task):
        k = task.kind
        task.active = True
        if k == NETWORK:
            pkt = self.queues.dequeue_highest(self.clock)
            self._net_current = pkt
            task.remaining = self.cost.proto_processing
        elif k == POLLING:
            batch = task.job.popleft()
            n = len(batch)
            cost = self.cost
            if self.baseline:
                task.remaining = cost.poll_fixed_overhead + n * cost.baseline_polled
                task.pending = batch
            else:
                infos = self._stream_info
                pc = self._poll_counts
                now = self.clock
                for buf, s, arr in batch:
                    pc[self._demux(buf, infos[s], arr, now)] += 1
                task.remaining = cost.poll_fixed_overhead + n * cost.poll_batch_per_packet
                task.pending = ()
            self.metrics.handled_poll += n
        elif k == RECEIVER:
            task.pending -= 1
            task.remaining = task.cost
        else:
            task.remaining = _FOREVER

    def _finish(self, task):
        task.active = False
        k = task.kind
        if k == NETWORK:
            self._finish_network(self._net_current)
        elif k == POLLING:
            for buf, s, _arr in task.pending:
                self._complete_baseline(buf, self._stream_info[s])
            task.pending = ()
        elif k == RECEIVER:
            fm = self._flow_metrics[task.flow]
            fm.delivered += 1
            if self.trace:
                self.metrics.deliveries.append((self.clock, str(task.flow)))

    def run(self) -> MetricsStore:
        until = self.until
        times = self._times
        n = self._n_arrivals
        idle = 0
        while self.clock < until:
            if self._received and not self.polling:
                self._isr_chain()
                continue
            clock = self.clock
            t_arr = times[self._idx] if self._idx < n else _FOREVER
            horizon = min(t_arr, self._next_boundary, until)
            task = self._pick()
            if task is None:
                idle += horizon - clock
                self.clock = horizon
            else:
                if not task.active:
                    self._start(task)
                    if task.kind == NETWORK:
                        self._raises.clear()
                end = clock + task.remaining
                if end <= horizon:
                    task.cpu += end - clock
                    task.remaining = 0
                    self.clock = end
                    self._finish(task)
                else:
                    task.cpu += horizon - clock
                    task.remaining -= horizon - clock
                    self.clock = horizon
            clock = self.clock
            if clock == t_arr and clock < until:
                self._ingest(clock)
            if self.polling and clock == self._next_boundary and clock < until:
                self.global_limit_tick(clock)
            if self.audit:
                self._audit()
        self.metrics.idle_time += idle
        return self._finalize()

    def _audit(self):
        m = self.metrics
        m.audit_checks += 1
        if self.network is not None:
            expect = self._formula_priority()
            if self._net_prio != expect:
                raise InvariantViolation(
                    f"t={self.clock}: network task priority {self._net_prio} != formula {expect}")
        self.ring.check()
        self.queues.check()
        held = len(self._received) + len(self.queues) + (self._net_current is not None)
        if self.poller is not None:
            held += sum(len(b) for b in self.poller.job) + len(self.poller.pending or ())
        if held != len(self.ring.buffers_out):
            raise InvariantViolation(
                f"t={self.clock}: {len(self.ring.buffers_out)} buffers out, {held} accounted for")

    def _finalize(self) -> MetricsStore:
        self._flush_fast_counters()
        m = self.metrics
        m.elapsed = self.clock
        for t in self.tasks:
            m.task_time[t.name] = t.cpu
            m.task_kind[t.name] = t.kind
        if self.polling:
            m.polling_time += self.clock - self._polling_since
        for s, info in enumerate(self._stream_info):
            info.fm.sent += self._stream_sent[s]
            info.fm.received += self._stream_received[s]
        for key, fm in self._flow_metrics.items():
            fm.dropped_nic = fm.sent - fm.received
            m.flows[str(key)] = fm
        for path in _PATHS:
            c = self._path_counts[path]
            if c:
                m.path_counts[path.label] = c
                if self._latency is not None:
                    m.path_latency[path.label] = dict(sorted(self._latency[path].items()))
                else:
                    m.path_latency[path.label] = {self._path_cost[path]: c}
            if self._poll_counts[path]:
                m.poll_path_counts[path.label] = self._poll_counts[path]
        m.check_conservation()
        return m


def run(config: SimConfig, until: Optional[int] = None) -> MetricsStore:
    if until is not None:
        config = _with(config, until=until)
    return Simulator(config).run()


def run_baseline(config: SimConfig, until: Optional[int] = None) -> MetricsStore:
    config = _with(config, system=BASELINE, **({} if until is None else {"until": until}))
    return Simulator(config).run()


def _with(config, **changes):
    from dataclasses import replace
    return replace(config, **changes)
