"""Service time sources.

Devices, subscriptions, and the scheduler all read time through an injected
zero-argument callable so tests can drive it by hand.
"""

from __future__ import annotations

import threading
import time


class ManualClock:
    """Test clock advanced explicitly."""

    def __init__(self, start: float = 0.0):
        self._now = start

    def advance(self, dt: float) -> None:
        if dt < 0:
            raise ValueError("clock cannot run backwards")
        self._now += dt

    def __call__(self) -> float:
        return self._now


class SimClock:
    """Monotonic service clock, advanced by the service's pacing loop.

    ``advance`` is called with already-scaled simulation seconds; readers
    may call it from any thread.
    """

    def __init__(self):
        self._now = 0.0
        self._lock = threading.Lock()

    def advance(self, dt: float) -> float:
        with self._lock:
            self._now += dt
            return self._now

    def __call__(self) -> float:
        with self._lock:
            return self._now


class WallClock:
    """Real monotonic time, zeroed at construction."""

    def __init__(self):
        self._t0 = time.monotonic()

    def __call__(self) -> float:
        return time.monotonic() - self._t0
