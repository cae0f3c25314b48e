"""Core domain types and Ethernet/IPv4 frame codecs.

Time is integer nanoseconds throughout.  Priorities are plain ints in
``0..max_prio``; larger is more important and the same level space is used
for tasks and flows.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, fields
from typing import NamedTuple, Optional

from .errors import InvalidSpec, MalformedHeader, TimestampOverflow, TruncatedFrame

MAX_PRIO = 15
BACKGROUND_PRIO = 0
DEFAULT_ARP_ICMP_PRIO = 1

NS = 1
US = 1_000
MS = 1_000_000
S = 1_000_000_000
TIME_LIMIT = 2**64 - 1

MTU = 1500
HEADER_PEEK = 64

ETH_HLEN = 14
ETHERTYPE_IPV4 = 0x0800
ETHERTYPE_ARP = 0x0806
ETHERTYPE_IPV6 = 0x86DD
IPPROTO_ICMP = 1
IPPROTO_TCP = 6
IPPROTO_UDP = 17

_MAC_LOCAL = bytes.fromhex("020000000001")
_MAC_REMOTE = bytes.fromhex("020000000002")
_MAC_BCAST = b"\xff" * 6
_IP_LOCAL = bytes([192, 168, 1, 10])
_IP_REMOTE = bytes([192, 168, 1, 20])


def check_timestamp(t: int) -> int:
    if t < 0 or t > TIME_LIMIT:
        raise TimestampOverflow(f"timestamp {t} outside [0, 2**64)")
    return t


# -- flows -------------------------------------------------------------------

ARP_ICMP = "arp_icmp"
UDP = "udp"
TCP = "tcp"
BACKGROUND = "background"


class FlowKey(NamedTuple):
    """Flow identity.  ``port`` is the local port for udp/tcp, else 0."""

    kind: str
    port: int = 0

    @classmethod
    def udp(cls, port: int) -> "FlowKey":
        return cls(UDP, _check_port(port))

    @classmethod
    def tcp(cls, port: int) -> "FlowKey":
        return cls(TCP, _check_port(port))

    def __str__(self):
        if self.kind in (UDP, TCP):
            return f"{self.kind}:{self.port}"
        return self.kind


FlowKey.ARP_ICMP = FlowKey(ARP_ICMP)
FlowKey.BACKGROUND = FlowKey(BACKGROUND)


def _check_port(port) -> int:
    if not isinstance(port, int) or not 0 <= port <= 0xFFFF:
        raise InvalidSpec(f"port must be a 16-bit integer, got {port!r}")
    return port


class HeaderSummary(NamedTuple):
    ethertype: int
    ip_proto: Optional[int] = None
    fragment: bool = False
    dst_port: Optional[int] = None
    src_port: Optional[int] = None

    @property
    def is_arp(self):
        return self.ethertype == ETHERTYPE_ARP

    @property
    def is_ipv4(self):
        return self.ethertype == ETHERTYPE_IPV4


class Packet:
    """A received frame after classification.  Holds exactly one pool buffer."""

    __slots__ = ("buffer_id", "_flow", "arrival", "payload_len", "summary")

    def __init__(self, buffer_id, flow, arrival, payload_len=0, summary=None):
        self.buffer_id = buffer_id
        self._flow = flow
        self.arrival = arrival
        self.payload_len = payload_len
        self.summary = summary

    @property
    def flow(self) -> FlowKey:
        return self._flow

    def __repr__(self):
        return f"Packet(buf={self.buffer_id}, flow={self._flow}, t={self.arrival})"


# -- cost model --------------------------------------------------------------


@dataclass(frozen=True)
class CostModel:
    """Per-path execution costs in nanoseconds.

    The ISR and baseline figures come from the reference measurements; the
    prio-raise, recycle-raise and polling costs are calibration knobs.
    ``proto_processing`` is the network-task share of a high-priority packet
    (second driver half plus protocol work), chosen so that an HP packet
    entering an idle system (prio-raise ISR + processing) costs 12.3 us.
    """

    isr_regular: int = 1750
    isr_shortcircuit: int = 1620
    isr_prio_raise: int = 2200
    isr_recycle_raise: int = 2800
    isr_mitigating: int = 1620
    isr_eager_cache_extra: int = 2650
    proto_processing: int = 10100
    baseline_full: int = 12100
    poll_batch_per_packet: int = 400
    poll_fixed_overhead: int = 1000

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, int) or isinstance(v, bool):
                raise InvalidSpec(f"cost.{f.name} must be integer nanoseconds, got {v!r}")
            if v <= 0:
                raise InvalidSpec(f"cost.{f.name} must be positive, got {v}")
        if not (self.isr_shortcircuit <= self.isr_regular <= self.isr_prio_raise
                <= self.isr_recycle_raise):
            raise InvalidSpec(
                "cost ordering isr_shortcircuit <= isr_regular <= isr_prio_raise "
                "<= isr_recycle_raise violated")

    @property
    def baseline_polled(self) -> int:
        # polled baseline packet: full processing minus the per-IRQ driver share
        return self.baseline_full - self.isr_regular + self.poll_batch_per_packet


# -- frames ------------------------------------------------------------------

PROTOCOLS = ("arp", "icmp", "udp", "tcp")


@dataclass(frozen=True)
class FrameSpec:
    protocol: str
    local_port: Optional[int] = None
    remote_port: Optional[int] = None
    payload_len: int = 0
    fragment_flag: bool = False
    mtu: int = MTU


def _inet_checksum(data: bytes) -> int:
    if len(data) % 2:
        data += b"\x00"
    total = sum(struct.unpack(f"!{len(data) // 2}H", data))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def _l4_checksum(proto: int, segment: bytes) -> int:
    pseudo = _IP_REMOTE + _IP_LOCAL + struct.pack("!BBH", 0, proto, len(segment))
    return _inet_checksum(pseudo + segment)


def _ipv4(proto: int, l4: bytes, fragment: bool) -> bytes:
    total = 20 + len(l4)
    # non-first fragment: offset 185 * 8 = 1480 bytes
    flags_frag = 185 if fragment else 0x4000
    hdr = struct.pack("!BBHHHBBH4s4s", 0x45, 0, total, 0x1234, flags_frag, 64,
                      proto, 0, _IP_REMOTE, _IP_LOCAL)
    csum = _inet_checksum(hdr)
    return hdr[:10] + struct.pack("!H", csum) + hdr[12:] + l4


def build_frame(spec: FrameSpec) -> bytes:
    """Build a well-formed Ethernet II frame addressed to this host."""
    proto = spec.protocol
    if proto not in PROTOCOLS:
        raise InvalidSpec(f"unknown protocol {proto!r}")
    if spec.payload_len < 0:
        raise InvalidSpec("payload_len must be >= 0")
    if proto in ("arp", "icmp"):
        if spec.local_port is not None or spec.remote_port is not None:
            raise InvalidSpec(f"{proto} frames carry no ports")
    else:
        if spec.local_port is None:
            raise InvalidSpec(f"{proto} frame needs a local_port")
        _check_port(spec.local_port)
        _check_port(spec.remote_port if spec.remote_port is not None else 0)
    if proto == "arp":
        if spec.payload_len or spec.fragment_flag:
            raise InvalidSpec("arp frames take no payload or fragment flag")
        arp = struct.pack("!HHBBH6s4s6s4s", 1, ETHERTYPE_IPV4, 6, 4, 1,
                          _MAC_REMOTE, _IP_REMOTE, b"\x00" * 6, _IP_LOCAL)
        return _MAC_BCAST + _MAC_REMOTE + struct.pack("!H", ETHERTYPE_ARP) + arp

    l4_hlen = {"icmp": 8, "udp": 8, "tcp": 20}[proto]
    if 20 + l4_hlen + spec.payload_len > spec.mtu:
        raise InvalidSpec(f"payload_len {spec.payload_len} exceeds MTU {spec.mtu}")
    payload = bytes(spec.payload_len)
    remote = spec.remote_port if spec.remote_port is not None else 40000
    if proto == "icmp":
        body = struct.pack("!BBHHH", 8, 0, 0, 0x0001, 0x0001) + payload
        body = body[:2] + struct.pack("!H", _inet_checksum(body)) + body[4:]
        ipproto = IPPROTO_ICMP
    elif proto == "udp":
        body = struct.pack("!HHHH", remote, spec.local_port, 8 + len(payload), 0) + payload
        csum = _l4_checksum(IPPROTO_UDP, body) or 0xFFFF
        body = body[:6] + struct.pack("!H", csum) + body[8:]
        ipproto = IPPROTO_UDP
    else:
        body = struct.pack("!HHIIBBHHH", remote, spec.local_port, 1, 0, 5 << 4,
                           0x10, 8192, 0, 0) + payload
        body = body[:16] + struct.pack("!H", _l4_checksum(IPPROTO_TCP, body)) + body[18:]
        ipproto = IPPROTO_TCP
    eth = _MAC_LOCAL + _MAC_REMOTE + struct.pack("!H", ETHERTYPE_IPV4)
    return eth + _ipv4(ipproto, body, spec.fragment_flag)


def decode_headers(frame) -> HeaderSummary:
    """Decode the classification-relevant header fields of ``frame``.

    Only the first ``HEADER_PEEK`` bytes are read; ``len(frame)`` is used to
    check declared lengths.
    """
    n = len(frame)
    if n < ETH_HLEN:
        raise TruncatedFrame(f"{n} bytes is shorter than an Ethernet header")
    head = bytes(frame[:HEADER_PEEK])
    (ethertype,) = struct.unpack_from("!H", head, 12)
    if ethertype == ETHERTYPE_ARP:
        if n < ETH_HLEN + 28:
            raise TruncatedFrame("ARP payload truncated")
        return HeaderSummary(ethertype)
    if ethertype == ETHERTYPE_IPV6:
        raise MalformedHeader("IPv6 is not supported")
    if ethertype != ETHERTYPE_IPV4:
        return HeaderSummary(ethertype)

    if n < ETH_HLEN + 20:
        raise TruncatedFrame("IPv4 header truncated")
    vihl, _tos, total_len, _ident, flags_frag, _ttl, proto = struct.unpack_from(
        "!BBHHHBB", head, ETH_HLEN)
    version, ihl = vihl >> 4, (vihl & 0x0F) * 4
    if version != 4:
        raise MalformedHeader(f"IP version {version} in an IPv4 frame")
    if ihl < 20:
        raise MalformedHeader(f"IPv4 header length {ihl} < 20")
    if total_len < ihl:
        raise MalformedHeader(f"IPv4 total length {total_len} < header length {ihl}")
    if ETH_HLEN + total_len > n:
        raise TruncatedFrame(f"IPv4 total length {total_len} exceeds frame")
    offset = flags_frag & 0x1FFF
    more = bool(flags_frag & 0x2000)
    fragment = more or offset != 0
    if offset or proto not in (IPPROTO_UDP, IPPROTO_TCP):
        return HeaderSummary(ethertype, proto, fragment)
    l4 = ETH_HLEN + ihl
    if l4 + 4 > HEADER_PEEK:
        raise MalformedHeader("transport ports lie beyond the header peek window")
    if total_len - ihl < 4:
        raise TruncatedFrame("transport header truncated")
    sport, dport = struct.unpack_from("!HH", head, l4)
    return HeaderSummary(ethertype, proto, fragment, dport, sport)
