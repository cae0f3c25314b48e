import random

import pytest
from hypothesis import given, strategies as st

from flowrx.buffer_pool import BdRing
from flowrx.errors import DoubleReturn, InvalidSpec, RingEmpty, UnknownBuffer


def test_take_and_return():
    r = BdRing(64)
    b = r.take_buffer()
    assert r.free_in_ring == 63
    r.return_buffer(b)
    assert r.free_in_ring == 64
    with pytest.raises(DoubleReturn):
        r.return_buffer(b)
    with pytest.raises(UnknownBuffer):
        r.return_buffer(999)


def test_ring_empty():
    r = BdRing(8)
    ids = {r.take_buffer() for _ in range(8)}
    assert ids == set(range(8))
    with pytest.raises(RingEmpty):
        r.take_buffer()


def test_needs_recycle_boundary():
    r = BdRing(64, 0.5)
    for _ in range(31):
        r.take_buffer()
    assert r.free_in_ring == 33 and not r.needs_recycle()
    r.take_buffer()
    assert r.free_in_ring == 32 and r.needs_recycle()


def test_zero_threshold():
    r = BdRing(4, 0.0)
    for _ in range(3):
        r.take_buffer()
        assert not r.needs_recycle()
    r.take_buffer()
    assert r.needs_recycle()


def test_validation():
    with pytest.raises(InvalidSpec):
        BdRing(0)
    with pytest.raises(InvalidSpec):
        BdRing(4, 1.5)


@given(st.integers(1, 128), st.lists(st.booleans(), max_size=400), st.integers(0, 2**32))
def test_closed_pool_conservation(n, ops, seed):
    rng = random.Random(seed)
    r = BdRing(n)
    held = []
    for take in ops:
        if take:
            if len(held) == n:
                with pytest.raises(RingEmpty):
                    r.take_buffer()
            else:
                held.append(r.take_buffer())
        elif held:
            r.return_buffer(held.pop(rng.randrange(len(held))))
        assert r.free_in_ring + len(r.buffers_out) == n
        assert r.free_in_ring == n - len(held)
        assert r.buffers_out == set(held)
