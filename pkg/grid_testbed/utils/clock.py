import threading
import time


class WallClock:
    """Real time, used by the daemons."""

    def now(self):
        return time.time()


class LogicalClock:
    """
    Manually advanced clock for deterministic tests: drives cache ttls,
    job lifetimes and scheduler ticks.
    """

    def __init__(self, start=1_000_000.0):
        self._now = float(start)
        self._lock = threading.Lock()

    def now(self):
        with self._lock:
            return self._now

    def advance(self, seconds):
        if seconds < 0:
            raise ValueError('clock cannot go backwards')
        with self._lock:
            self._now += seconds
            return self._now

    def set(self, timestamp):
        with self._lock:
            if timestamp < self._now:
                raise ValueError('clock cannot go backwards')
            self._now = float(timestamp)
