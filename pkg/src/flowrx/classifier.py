"""Early demultiplexing of decoded frames onto flows.

The socket table is a plain list scanned linearly, the way small embedded
stacks keep their bound socket control blocks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .errors import AlreadyBound, InvalidSpec, TableFull, UnknownHandle
from .model import (ETHERTYPE_ARP, ETHERTYPE_IPV4, IPPROTO_ICMP, IPPROTO_TCP,
                    IPPROTO_UDP, MAX_PRIO, TCP, UDP, FlowKey, HeaderSummary)

DEFAULT_MAX_ENTRIES = 32

_PROTO_NUMBERS = {UDP: IPPROTO_UDP, TCP: IPPROTO_TCP}


@dataclass(frozen=True)
class SocketEntry:
    handle: int
    protocol: str
    local_port: int
    flow_priority: int
    capacity: Optional[int]  # packets per period; None = unbounded
    period: Optional[int]    # ns

    @property
    def flow(self) -> FlowKey:
        return FlowKey(self.protocol, self.local_port)


class SocketTable:
    def __init__(self, max_entries=DEFAULT_MAX_ENTRIES, max_prio=MAX_PRIO):
        self.max_entries = max_entries
        self.max_prio = max_prio
        self.entries: list[SocketEntry] = []
        self.lookups = 0  # entries inspected by classify(), for cost audits
        self._next_handle = 1

    def __len__(self):
        return len(self.entries)

    def bind(self, protocol, local_port, flow_priority, capacity=None, period=None) -> int:
        if protocol not in _PROTO_NUMBERS:
            raise InvalidSpec(f"can only bind udp or tcp, not {protocol!r}")
        if not isinstance(local_port, int) or not 0 <= local_port <= 0xFFFF:
            raise InvalidSpec(f"bad port {local_port!r}")
        if not 0 <= flow_priority <= self.max_prio:
            raise InvalidSpec(f"priority {flow_priority} outside 0..{self.max_prio}")
        if capacity is not None:
            if capacity < 1 or period is None or period <= 0:
                raise InvalidSpec("a bounded flow needs capacity >= 1 and period > 0")
        for e in self.entries:
            if e.protocol == protocol and e.local_port == local_port:
                raise AlreadyBound(f"{protocol}:{local_port} is already bound")
        if len(self.entries) >= self.max_entries:
            raise TableFull(f"socket table holds at most {self.max_entries} entries")
        handle = self._next_handle
        self._next_handle += 1
        self.entries.append(SocketEntry(handle, protocol, local_port, flow_priority,
                                        capacity, period))
        return handle

    def unbind(self, handle: int) -> SocketEntry:
        for i, e in enumerate(self.entries):
            if e.handle == handle:
                return self.entries.pop(i)
        raise UnknownHandle(handle)

    def entry(self, handle: int) -> SocketEntry:
        for e in self.entries:
            if e.handle == handle:
                return e
        raise UnknownHandle(handle)

    def find(self, protocol: str, port: int) -> Optional[SocketEntry]:
        ipproto = _PROTO_NUMBERS[protocol]
        return self._scan(ipproto, port)

    def _scan(self, ipproto, port):
        for e in self.entries:
            self.lookups += 1
            if e.local_port == port and _PROTO_NUMBERS[e.protocol] == ipproto:
                return e
        return None


def classify(summary: HeaderSummary, table: SocketTable) -> FlowKey:
    if summary.ethertype == ETHERTYPE_ARP:
        return FlowKey.ARP_ICMP
    if summary.ethertype != ETHERTYPE_IPV4:
        return FlowKey.BACKGROUND
    if summary.fragment:
        # no reassembly before demux
        return FlowKey.BACKGROUND
    if summary.ip_proto == IPPROTO_ICMP:
        return FlowKey.ARP_ICMP
    if summary.ip_proto in (IPPROTO_UDP, IPPROTO_TCP) and summary.dst_port is not None:
        entry = table._scan(summary.ip_proto, summary.dst_port)
        if entry is not None:
            return entry.flow
    return FlowKey.BACKGROUND
