"""Deliberately naive reference implementations used as test oracles."""

import math
import random

from flowrx.flow_queues import EnqueueOutcome, FlowQueueSet
from flowrx.model import FlowKey, Packet


class NaiveFlowQueues:
    """One flat list of (ticket, priority, flow, item); every query is a scan.

    Round-robin among equal-priority flows is modelled with a per-level
    rotation list kept in the same order the real structure promises: a flow
    joins the back when it becomes nonempty and moves to the back after each
    dequeue.
    """

    def __init__(self):
        self.items = []
        self.prio = {}
        self.cap = {}
        self.budget = {}
        self.period_start = {}
        self.rotation = {}
        self.ticket = 0
        self.accepted = []  # (flow, time) of admitted packets

    def register(self, flow, prio, cap=None, period=None):
        assert flow not in self.prio
        self.prio[flow] = prio
        self.cap[flow] = (cap, period)
        self.budget[flow] = cap
        self.period_start[flow] = 0

    def _has(self, flow):
        return any(f == flow for _, _, f, _ in self.items)

    def _admit(self, flow, now):
        cap, period = self.cap[flow]
        if cap is None:
            return True
        start = (now // period) * period
        if start != self.period_start[flow]:
            self.period_start[flow] = start
            self.budget[flow] = cap
        if self.budget[flow] >= 1:
            self.budget[flow] -= 1
            return True
        return False

    def enqueue(self, flow, item, now):
        if not self._admit(flow, now):
            return "declined"
        p = self.prio[flow]
        if not self._has(flow):
            self.rotation.setdefault(p, []).append(flow)
        self.items.append((self.ticket, p, flow, item))
        self.ticket += 1
        self.accepted.append((flow, now))
        return "accepted"

    def _pop_flow_head(self, flow):
        i = min((k for k, e in enumerate(self.items) if e[2] == flow), key=lambda k: self.items[k][0])
        return self.items.pop(i)

    def dequeue_highest(self):
        if not self.items:
            return None
        p = max(e[1] for e in self.items)
        flow = self.rotation[p].pop(0)
        e = self._pop_flow_head(flow)
        if self._has(flow):
            self.rotation[p].append(flow)
        return e[3]

    def revoke_lowest(self):
        if not self.items:
            return None
        p = min(e[1] for e in self.items)
        flow = self.rotation[p][0]
        e = self._pop_flow_head(flow)
        if not self._has(flow):
            self.rotation[p].pop(0)
        return e[3]

    def highest(self):
        return max((e[1] for e in self.items), default=None)

    def lowest(self):
        return min((e[1] for e in self.items), default=None)

    def __len__(self):
        return len(self.items)


def naive_demand_bound(delta, e, p):
    return e * (math.ceil(delta / p) + 1)


def max_in_window(times, delta):
    """Largest number of timestamps inside any half-open window of length delta."""
    best, j = 0, 0
    for i in range(len(times)):
        while j <= i and times[i] - times[j] >= delta:
            j += 1
        best = max(best, i - j + 1)
    return best


def run_flow_queue_oracle(ops, seed):
    """Drive FlowQueueSet and NaiveFlowQueues with the same random ops, asserting agreement."""
    rng = random.Random(seed)
    real, ref = FlowQueueSet(), NaiveFlowQueues()
    flows = []
    for i in range(12):
        f = FlowKey.udp(i)
        prio = rng.randrange(16)
        cap = rng.choice([None, None, 1, 2, 5])
        per = rng.choice([1000, 5000, 20000]) if cap else None
        real.register_flow(f, prio, cap, per)
        ref.register(f, prio, cap, per)
        flows.append(f)
    now = 0
    for n in range(ops):
        now += rng.randrange(0, 300)
        r = rng.random()
        if r < 0.5:
            f = rng.choice(flows)
            got = real.enqueue(Packet(n, f, now), now)
            exp = ref.enqueue(f, n, now)
            assert (got is EnqueueOutcome.ACCEPTED) == (exp == "accepted")
        elif r < 0.75:
            got = real.dequeue_highest(now)
            assert (None if got is None else got.buffer_id) == ref.dequeue_highest()
        else:
            got = real.revoke_lowest(now)
            assert (None if got is None else got.buffer_id) == ref.revoke_lowest()
        assert real.highest_enqueued_priority() == ref.highest()
        assert real.lowest_enqueued_priority() == ref.lowest()
        assert len(real) == len(ref)
    real.check()
    return ref
