"""Deferrable-server budget accounting.

Budgets are counted in whole packets.  Periods are anchored at t=0, so the
budget is restored to full capacity at every multiple of the period.
"""

from __future__ import annotations

from .errors import InvalidSpec, NonMonotonicTime


def demand_bound(delta: int, capacity: int, period: int) -> int:
    """Worst-case units granted inside any window of length ``delta``."""
    if delta < 0:
        raise ValueError("delta must be >= 0")
    return capacity * (-(-delta // period) + 1)


class DeferrableServer:
    __slots__ = ("capacity", "period", "remaining", "period_start", "_last")

    def __init__(self, capacity: int, period: int):
        if capacity < 1:
            raise InvalidSpec(f"server capacity must be >= 1, got {capacity}")
        if period <= 0:
            raise InvalidSpec(f"server period must be > 0, got {period}")
        self.capacity = capacity
        self.period = period
        self.remaining = capacity
        self.period_start = 0
        self._last = 0

    def __repr__(self):
        return (f"DeferrableServer(e={self.capacity}, p={self.period}, "
                f"remaining={self.remaining}, start={self.period_start})")

    def _advance(self, now):
        if now < self._last:
            raise NonMonotonicTime(f"time went backwards: {now} < {self._last}")
        self._last = now
        if now - self.period_start >= self.period:
            self.period_start = now - now % self.period
            self.remaining = self.capacity

    def try_consume(self, now: int, units: int = 1) -> bool:
        self._advance(now)
        if self.remaining >= units:
            self.remaining -= units
            return True
        return False

    def saturated_until_next_period(self, now: int) -> bool:
        self._advance(now)
        return self.remaining == 0

    def next_boundary(self, now: int) -> int:
        return (now // self.period + 1) * self.period

    def demand_bound(self, delta: int) -> int:
        return demand_bound(delta, self.capacity, self.period)
