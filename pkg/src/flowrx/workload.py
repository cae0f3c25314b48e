"""Deterministic traffic generators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np

from .errors import InvalidRate, InvalidSpec
from .model import S, FrameSpec


@dataclass(frozen=True)
class ConstantRate:
    rate: float  # packets per second


@dataclass(frozen=True)
class Burst:
    count: int
    spacing: int  # ns between consecutive packets
    start: int = 0


@dataclass(frozen=True)
class Poisson:
    rate: float
    seed: int = 0


Pattern = Union[ConstantRate, Burst, Poisson]


@dataclass(frozen=True)
class WorkloadEntry:
    target: FrameSpec
    pattern: Pattern
    start: int = 0
    duration: Optional[int] = None
    name: str = ""


@dataclass(frozen=True)
class WorkloadSpec:
    entries: Sequence[WorkloadEntry] = field(default_factory=tuple)


def _window(entry: WorkloadEntry, horizon: int):
    end = horizon if entry.duration is None else min(horizon, entry.start + entry.duration)
    return entry.start, max(entry.start, end)


def generate_entry(entry: WorkloadEntry, horizon: int) -> np.ndarray:
    """Arrival times (int64 ns) of one entry, sorted."""
    if horizon <= 0:
        raise InvalidSpec("horizon must be positive")
    pat = entry.pattern
    start, end = _window(entry, horizon)
    if isinstance(pat, ConstantRate):
        if not pat.rate > 0:
            raise InvalidRate(f"rate must be positive, got {pat.rate}")
        span = end - start
        rate = pat.rate
        if float(rate).is_integer():
            rate = int(rate)
            n = rate * span // S
            return start + np.arange(n, dtype=np.int64) * S // rate
        n = math.floor(Fraction(rate) * span / S)
        return start + np.floor(np.arange(n, dtype=np.float64) * (S / rate)).astype(np.int64)
    if isinstance(pat, Burst):
        if pat.count < 0:
            raise InvalidSpec("burst count must be >= 0")
        if pat.spacing <= 0:
            raise InvalidRate(f"burst spacing must be positive, got {pat.spacing}")
        t = start + pat.start + np.arange(pat.count, dtype=np.int64) * pat.spacing
        return t[t < end]
    if isinstance(pat, Poisson):
        if not pat.rate > 0:
            raise InvalidRate(f"rate must be positive, got {pat.rate}")
        rng = np.random.default_rng(pat.seed)
        mean_gap = S / pat.rate
        chunks = []
        t = float(start)
        while t < end:
            n = max(16, int((end - t) / mean_gap * 1.1) + 16)
            gaps = rng.exponential(mean_gap, size=n)
            times = t + np.cumsum(gaps)
            chunks.append(times)
            t = times[-1]
        times = np.floor(np.concatenate(chunks)).astype(np.int64) if chunks else np.empty(0, np.int64)
        return times[times < end]
    raise InvalidSpec(f"unknown pattern {pat!r}")


def generate(spec: WorkloadSpec, horizon: int):
    """Merge all entries into one arrival list.

    Returns ``(times, streams)``: int64 arrival times and the index of the
    originating entry.  Equal timestamps keep entry order, so per-entry order
    is preserved.
    """
    parts = [generate_entry(e, horizon) for e in spec.entries]
    if not parts:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    times = np.concatenate(parts)
    streams = np.concatenate([np.full(len(p), i, dtype=np.int64) for i, p in enumerate(parts)])
    order = np.argsort(times, kind="stable")
    return times[order], streams[order]
