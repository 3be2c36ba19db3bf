"""Incoming event-rate estimation and adaptive rate extremes.

The rate at each event is a sliding-window count on event time. The tracked
extremes decay toward the current rate by a forgetting factor applied once
per event, and jump to the current rate whenever it escapes them.
"""

from __future__ import annotations

import math
from collections import deque

from .events import US_PER_S, OrderingError


class RateTracker:
    """Sliding-window event counter.

    ``observe(t)`` returns the number of events with timestamp in
    ``(t - window_us, t]`` (the new one included) divided by the window
    length in seconds.
    """

    def __init__(self, window_us: int = 1000) -> None:
        if window_us <= 0:
            raise ValueError("window_us must be positive")
        self.window_us = int(window_us)
        self._scale = US_PER_S / self.window_us
        self._ring: deque[int] = deque()
        self._count = 0
        self.rate = 0.0

    def observe(self, t: int) -> float:
        ring = self._ring
        if ring and t < ring[-1]:
            raise OrderingError(self._count, ring[-1], t)
        self._count += 1
        ring.append(t)
        horizon = t - self.window_us
        while ring[0] <= horizon:
            ring.popleft()
        self.rate = len(ring) * self._scale
        return self.rate

    def __len__(self) -> int:
        return len(self._ring)


class RateBounds:
    """Adaptive ``r_min``/``r_max`` with forgetting factor ``alpha`` in (0, 1].

    Without ``initial`` the first update seeds both bounds with the observed
    rate; ``initial=(r_min, r_max)`` starts from a known operating range
    instead. If decay makes the bounds cross they are both set to their
    geometric mean.
    """

    def __init__(self, alpha: float = 0.9999, initial: tuple[float, float] | None = None) -> None:
        if not 0.0 < alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
        self.alpha = alpha
        self.r_min = math.nan
        self.r_max = math.nan
        self.seeded = False
        if initial is not None:
            lo, hi = initial
            if not 0 < lo <= hi:
                raise ValueError("initial rate range needs 0 < r_min <= r_max")
            self.r_min, self.r_max = float(lo), float(hi)
            self.seeded = True

    def seed(self, r: float) -> None:
        self.r_min = self.r_max = r
        self.seeded = True

    def update(self, r: float) -> tuple[float, float]:
        if not self.seeded:
            self.seed(r)
            return r, r
        alpha = self.alpha
        r_max = alpha * self.r_max if r <= self.r_max else r
        r_min = self.r_min / alpha if r >= self.r_min else r
        if r_min > r_max:
            r_min = r_max = math.sqrt(r_min * r_max)
        self.r_min, self.r_max = r_min, r_max
        return r_min, r_max


def update_bounds(bounds: RateBounds, r: float) -> tuple[float, float]:
    return bounds.update(r)
