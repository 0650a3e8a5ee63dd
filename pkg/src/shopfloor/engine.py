"""Event queue, simulated clock and random streams.

Times are simulated minutes. Events at equal times are processed in the
order they were scheduled.
"""

from __future__ import annotations

import heapq
import math
from typing import Callable, NamedTuple

import numpy as np

RNG_NAME = "numpy.PCG64"
_BUFFER = 4096


class Event(NamedTuple):
    fire_time: float
    sequence: int
    kind: int
    target: int
    data: int = 0


class SchedulingError(ValueError):
    """An event was scheduled in the past."""


class EventQueue:
    """Pending events ordered by (fire_time, sequence)."""

    def __init__(self) -> None:
        self._heap: list[Event] = []
        self._seq = 0
        self.now = 0.0

    def __len__(self) -> int:
        return len(self._heap)

    def schedule(self, fire_time: float, kind: int, target: int = -1, data: int = 0) -> Event:
        if fire_time < self.now:
            raise SchedulingError(
                f"event kind {kind} scheduled at {fire_time!r} < clock {self.now!r}"
            )
        ev = Event(fire_time, self._seq, kind, target, data)
        self._seq += 1
        heapq.heappush(self._heap, ev)
        return ev

    def peek(self) -> Event | None:
        return self._heap[0] if self._heap else None

    def pop(self) -> Event:
        ev = heapq.heappop(self._heap)
        self.now = ev.fire_time
        return ev

    def run_until(self, t_end: float, handle: Callable[[Event], None]) -> None:
        """Process every event with fire_time <= t_end, then park the clock at t_end."""
        if t_end < self.now:
            raise SchedulingError(f"t_end {t_end!r} is before clock {self.now!r}")
        heap = self._heap
        pop = heapq.heappop
        while heap and heap[0][0] <= t_end:
            ev = pop(heap)
            self.now = ev[0]
            handle(ev)
        self.now = t_end


def derive_seed(base_seed: int, *key: int) -> int:
    """64-bit seed for the stream identified by ``key`` under ``base_seed``."""
    ss = np.random.SeedSequence(int(base_seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


class RngStream:
    """Buffered uniform stream over PCG64; one per replication.

    Identical seeds give identical variate sequences. Seeds from
    :func:`derive_seed` with different keys are independent streams.
    """

    def __init__(self, seed: int) -> None:
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))
        self._buf: list[float] = []
        self._i = 0

    def uniform(self) -> float:
        i = self._i
        if i >= len(self._buf):
            self._buf = self._gen.random(_BUFFER).tolist()
            i = 0
        self._i = i + 1
        return self._buf[i]

    def triangular(self, lo: float, mode: float, hi: float) -> float:
        return triangular_inverse_cdf(self.uniform(), lo, mode, hi)

    def exponential(self, rate_per_hour: float) -> float:
        return -math.log(1.0 - self.uniform()) * 60.0 / rate_per_hour

    def bernoulli(self, p: float) -> bool:
        return self.uniform() < p


def triangular_inverse_cdf(u: float, lo: float, mode: float, hi: float) -> float:
    span = hi - lo
    if span <= 0.0:
        return lo
    if u * span < mode - lo:
        return lo + math.sqrt(u * span * (mode - lo))
    return hi - math.sqrt((1.0 - u) * span * (hi - mode))


def triangular_cdf(x: float, lo: float, mode: float, hi: float) -> float:
    if x <= lo:
        return 0.0
    if x >= hi:
        return 1.0
    if x <= mode:
        return (x - lo) ** 2 / ((hi - lo) * (mode - lo))
    return 1.0 - (hi - x) ** 2 / ((hi - lo) * (hi - mode))


def _check_triple(lo: float, mode: float, hi: float) -> None:
    if not (lo <= mode <= hi):
        raise ValueError(f"triangular parameters need min <= mode <= max, got ({lo}, {mode}, {hi})")


def sample_triangular(rng: RngStream, lo: float, mode: float, hi: float) -> float:
    _check_triple(lo, mode, hi)
    return rng.triangular(lo, mode, hi)


def sample_exponential(rng: RngStream, rate: float) -> float:
    """Interarrival time in minutes for ``rate`` events per hour."""
    if not rate > 0:
        raise ValueError(f"rate must be positive, got {rate}")
    return rng.exponential(rate)


def bernoulli(rng: RngStream, p: float) -> bool:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability outside [0, 1]: {p}")
    return rng.bernoulli(p)
