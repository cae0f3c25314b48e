import random

import pytest
from hypothesis import given, strategies as st

from flowrx.classifier import SocketTable, classify
from flowrx.errors import AlreadyBound, InvalidSpec, TableFull, UnknownHandle
from flowrx.model import MS, FlowKey, FrameSpec, HeaderSummary, build_frame, decode_headers


def summary(proto, port=None, **kw):
    return decode_headers(build_frame(FrameSpec(proto, port, **kw)))


def test_bind_examples():
    t = SocketTable()
    h = t.bind("udp", 7, 10, 1, 1 * MS)
    assert len(t) == 1 and t.entry(h).flow == FlowKey.udp(7)
    with pytest.raises(AlreadyBound):
        t.bind("udp", 7, 3)
    t.bind("tcp", 7, 3)  # different protocol, same port is fine


def test_table_full():
    t = SocketTable(max_entries=32)
    for p in range(32):
        t.bind("udp", p, 1)
    with pytest.raises(TableFull):
        t.bind("udp", 99, 1)


@pytest.mark.parametrize("args", [("icmp", 1, 1), ("udp", 70000, 1), ("udp", 1, 16),
                                  ("udp", 1, 1, 0, MS), ("udp", 1, 1, 1, None)])
def test_bind_validation(args):
    with pytest.raises(InvalidSpec):
        SocketTable().bind(*args)


def test_unbind():
    t = SocketTable()
    h = t.bind("udp", 7, 10)
    assert classify(summary("udp", 7), t) == FlowKey.udp(7)
    t.unbind(h)
    assert classify(summary("udp", 7), t) == FlowKey.BACKGROUND
    with pytest.raises(UnknownHandle):
        t.unbind(h)


def test_classify_examples():
    t = SocketTable()
    t.bind("udp", 7, 10)
    assert classify(summary("udp", 7), t) == FlowKey.udp(7)
    assert classify(summary("icmp"), t) == FlowKey.ARP_ICMP
    assert classify(summary("arp"), t) == FlowKey.ARP_ICMP
    assert classify(summary("udp", 7, fragment_flag=True), t) == FlowKey.BACKGROUND
    assert classify(summary("udp", 8), t) == FlowKey.BACKGROUND
    assert classify(summary("tcp", 7), t) == FlowKey.BACKGROUND
    assert classify(HeaderSummary(0x88B5), t) == FlowKey.BACKGROUND


def test_classify_cost_is_linear_in_table_length():
    t = SocketTable()
    for p in range(20):
        t.bind("udp", 1000 + p, 1)
    s = summary("udp", 1019)
    before = t.lookups
    classify(s, t)
    assert t.lookups - before == 20
    before = t.lookups
    classify(summary("udp", 5), t)
    assert t.lookups - before == 20
    before = t.lookups
    classify(summary("icmp"), t)
    assert t.lookups == before


def test_exhaustive_ports_against_dict_oracle():
    rng = random.Random(5)
    t = SocketTable()
    oracle = {}
    for _ in range(32):
        proto, port = rng.choice(["udp", "tcp"]), rng.randrange(65536)
        if (proto, port) in oracle:
            continue
        t.bind(proto, port, rng.randrange(16))
        oracle[(proto, port)] = FlowKey(proto, port)
    for proto, ipproto in (("udp", 17), ("tcp", 6)):
        for port in range(65536):
            got = classify(HeaderSummary(0x0800, ipproto, False, port, 1), t)
            assert got == oracle.get((proto, port), FlowKey.BACKGROUND)


@given(st.sampled_from(["udp", "tcp", "icmp", "arp"]), st.integers(0, 0xFFFF), st.booleans())
def test_classify_is_pure(proto, port, frag):
    t = SocketTable()
    t.bind("udp", port, 4)
    spec = FrameSpec(proto, None if proto in ("icmp", "arp") else port,
                     fragment_flag=frag and proto != "arp")
    s = decode_headers(build_frame(spec))
    entries = list(t.entries)
    assert classify(s, t) == classify(s, t)
    assert t.entries == entries
