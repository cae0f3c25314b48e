import random

import pytest
from hypothesis import given, strategies as st

from flowrx.errors import InvalidSpec, NonMonotonicTime
from flowrx.model import MS
from flowrx.rate_limiter import DeferrableServer, demand_bound
from oracles import max_in_window, naive_demand_bound


def test_budget_examples():
    s = DeferrableServer(3, 2 * MS)
    assert [s.try_consume(0) for _ in range(4)] == [True, True, True, False]
    assert s.try_consume(2 * MS)
    with pytest.raises(NonMonotonicTime):
        s.try_consume(2 * MS - 1)


def test_demand_bound_examples():
    assert demand_bound(2 * MS, 3, 2 * MS) == 6
    assert demand_bound(0, 3, 2 * MS) == 3
    assert demand_bound(10 * MS, 1, 1 * MS) == 11
    assert DeferrableServer(3, 2 * MS).demand_bound(2 * MS) == 6


def test_saturation():
    s = DeferrableServer(2, MS)
    assert not s.saturated_until_next_period(0)
    s.try_consume(0, 2)
    assert s.saturated_until_next_period(10)
    assert not s.saturated_until_next_period(MS)


def test_multi_unit_consume_and_validation():
    s = DeferrableServer(5, MS)
    assert s.try_consume(0, 4)
    assert not s.try_consume(1, 2)
    assert s.remaining == 1
    with pytest.raises(InvalidSpec):
        DeferrableServer(0, MS)
    with pytest.raises(InvalidSpec):
        DeferrableServer(1, 0)


def test_next_boundary():
    s = DeferrableServer(1, MS)
    assert s.next_boundary(0) == MS
    assert s.next_boundary(MS - 1) == MS
    assert s.next_boundary(MS) == 2 * MS


@given(st.integers(1, 8), st.integers(1, 10_000),
       st.lists(st.integers(0, 50_000), min_size=1, max_size=200), st.integers(0, 60_000))
def test_consumes_never_exceed_demand_bound(e, p, gaps, delta):
    s = DeferrableServer(e, p)
    t, granted = 0, []
    for g in gaps:
        t += g
        if s.try_consume(t):
            granted.append(t)
        assert 0 <= s.remaining <= e
    assert max_in_window(granted, delta) <= naive_demand_bound(delta, e, p)


def test_tightness_two_budgets_inside_one_period():
    e, p = 4, 10 * MS
    s = DeferrableServer(e, p)
    ts = [p - 1] * e + [p] * e
    assert all(s.try_consume(t) for t in ts)
    assert max_in_window(ts, 2) == 2 * e  # window of 2ns << p


def test_remaining_resets_exactly_at_boundaries():
    rng = random.Random(1)
    s = DeferrableServer(3, 1000)
    t = 0
    for _ in range(2000):
        t += rng.randrange(0, 700)
        before_start = s.period_start
        s.try_consume(t)
        assert s.period_start == t - t % 1000
        if s.period_start != before_start:
            assert s.remaining == 2
