"""Differentiated flow queues.

One FIFO per flow, grouped by flow priority.  An integer bitmap records which
priority levels hold packets, so the highest and lowest occupied levels are
found with two bit operations, the same trick a fixed-priority scheduler uses
for its ready lists.  Flows sharing a level are served round-robin: a flow
joins the back of its level's rotation when it becomes nonempty and moves to
the back after each dequeue.  Revocation takes the oldest packet of the flow
at the front of the lowest level's rotation.
"""

from __future__ import annotations

import enum
from collections import deque
from typing import Optional

from .errors import DuplicateFlow, InvalidSpec, UnknownFlow
from .model import MAX_PRIO, FlowKey, Packet
from .rate_limiter import DeferrableServer


class EnqueueOutcome(enum.Enum):
    ACCEPTED = "accepted"
    DECLINED_RATE_LIMIT = "declined_rate_limit"


class _Flow:
    __slots__ = ("key", "priority", "queue", "server", "accepted", "declined_rate",
                 "revoked", "shortcircuited")

    def __init__(self, key, priority, server):
        self.key = key
        self.priority = priority
        self.queue = deque()
        self.server = server
        self.accepted = 0
        self.declined_rate = 0
        self.revoked = 0
        self.shortcircuited = 0

    def counters(self):
        return {"accepted": self.accepted, "declined_rate": self.declined_rate,
                "revoked": self.revoked, "shortcircuited": self.shortcircuited}


class FlowQueueSet:
    def __init__(self, max_prio: int = MAX_PRIO):
        self.max_prio = max_prio
        self._flows: dict[FlowKey, _Flow] = {}
        self._levels = [deque() for _ in range(max_prio + 1)]
        self._mask = 0
        self._total = 0

    def __len__(self):
        return self._total

    def __contains__(self, flow):
        return flow in self._flows

    def register_flow(self, flow: FlowKey, priority: int, capacity: Optional[int] = None,
                      period: Optional[int] = None) -> None:
        if flow in self._flows:
            raise DuplicateFlow(f"flow {flow} already registered")
        if not 0 <= priority <= self.max_prio:
            raise InvalidSpec(f"priority {priority} outside 0..{self.max_prio}")
        server = None if capacity is None else DeferrableServer(capacity, period)
        self._flows[flow] = _Flow(flow, priority, server)

    def flows(self):
        return list(self._flows)

    def priority_of(self, flow: FlowKey) -> int:
        try:
            return self._flows[flow].priority
        except KeyError:
            raise UnknownFlow(flow) from None

    def length(self, flow: FlowKey) -> int:
        return len(self._flows[flow].queue)

    def counters(self, flow: FlowKey) -> dict:
        return self._flows[flow].counters()

    def server(self, flow: FlowKey) -> Optional[DeferrableServer]:
        return self._flows[flow].server

    def flow_state(self, flow: FlowKey) -> _Flow:
        """The mutable per-flow record (queue, server, counters) for hot loops."""
        return self._flows[flow]

    def note_shortcircuit(self, flow: FlowKey) -> None:
        self._flows[flow].shortcircuited += 1

    # -- admission and insertion ---------------------------------------------

    def admit(self, flow: FlowKey, now: int) -> bool:
        """Charge one unit of the flow's budget; False means drop."""
        try:
            f = self._flows[flow]
        except KeyError:
            raise UnknownFlow(flow) from None
        if f.server is None or f.server.try_consume(now):
            f.accepted += 1
            return True
        f.declined_rate += 1
        return False

    def push(self, packet: Packet) -> None:
        """Append an already admitted packet."""
        f = self._flows[packet.flow]
        if not f.queue:
            self._levels[f.priority].append(f)
            self._mask |= 1 << f.priority
        f.queue.append(packet)
        self._total += 1

    def enqueue(self, packet: Packet, now: int) -> EnqueueOutcome:
        if not self.admit(packet.flow, now):
            return EnqueueOutcome.DECLINED_RATE_LIMIT
        self.push(packet)
        return EnqueueOutcome.ACCEPTED

    # -- removal ---------------------------------------------------------------

    def dequeue_highest(self, now: Optional[int] = None) -> Optional[Packet]:
        mask = self._mask
        if not mask:
            return None
        level = mask.bit_length() - 1
        ring = self._levels[level]
        f = ring.popleft()
        pkt = f.queue.popleft()
        if f.queue:
            ring.append(f)
        elif not ring:
            self._mask = mask & ~(1 << level)
        self._total -= 1
        return pkt

    def revoke_lowest(self, now: Optional[int] = None) -> Optional[Packet]:
        mask = self._mask
        if not mask:
            return None
        level = (mask & -mask).bit_length() - 1
        ring = self._levels[level]
        f = ring[0]
        pkt = f.queue.popleft()
        f.revoked += 1
        if not f.queue:
            ring.popleft()
            if not ring:
                self._mask = mask & ~(1 << level)
        self._total -= 1
        return pkt

    # -- queries -------------------------------------------------------------------

    def highest_enqueued_priority(self) -> Optional[int]:
        mask = self._mask
        return mask.bit_length() - 1 if mask else None

    def lowest_enqueued_priority(self) -> Optional[int]:
        mask = self._mask
        return (mask & -mask).bit_length() - 1 if mask else None

    def check(self) -> None:
        total = sum(len(f.queue) for f in self._flows.values())
        assert total == self._total, (total, self._total)
        for level, ring in enumerate(self._levels):
            assert bool(ring) == bool(self._mask >> level & 1)
            for f in ring:
                assert f.queue and f.priority == level
