"""BD ring model: a closed pool of packet buffers shared with the flow queues."""

from __future__ import annotations

import math

from .errors import DoubleReturn, InvalidSpec, RingEmpty, UnknownBuffer

DEFAULT_RING_SIZE = 64
DEFAULT_RECYCLE_THRESHOLD = 0.5


class BdRing:
    """Buffers are either free in the ring or out (queued / in processing).

    ``free_in_ring + len(buffers_out) == capacity`` holds after every call.
    """

    def __init__(self, capacity=DEFAULT_RING_SIZE, recycle_threshold=DEFAULT_RECYCLE_THRESHOLD):
        if capacity < 1:
            raise InvalidSpec(f"ring capacity must be >= 1, got {capacity}")
        if not 0 <= recycle_threshold <= 1:
            raise InvalidSpec(f"recycle threshold must be in [0, 1], got {recycle_threshold}")
        self.capacity = capacity
        self.recycle_threshold = recycle_threshold
        self.threshold_count = math.floor(capacity * recycle_threshold)
        self._free = list(range(capacity - 1, -1, -1))
        self.buffers_out: set[int] = set()

    @property
    def free_in_ring(self) -> int:
        return len(self._free)

    def take_buffer(self) -> int:
        if not self._free:
            raise RingEmpty("no free descriptor in the BD ring")
        buf = self._free.pop()
        self.buffers_out.add(buf)
        return buf

    def return_buffer(self, buffer_id: int) -> None:
        try:
            self.buffers_out.remove(buffer_id)
        except KeyError:
            if isinstance(buffer_id, int) and 0 <= buffer_id < self.capacity:
                raise DoubleReturn(f"buffer {buffer_id} is already in the ring") from None
            raise UnknownBuffer(buffer_id) from None
        self._free.append(buffer_id)

    def needs_recycle(self) -> bool:
        return len(self._free) <= self.threshold_count

    def check(self) -> None:
        assert len(self._free) + len(self.buffers_out) == self.capacity
