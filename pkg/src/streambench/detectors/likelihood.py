from __future__ import annotations

import math
from collections import deque

import numpy as np

from ..corpus import TimeRecord
from .base import AnomalyDetector

MIN_STD = 1e-9


def gaussian_tail(z: float) -> float:
    """Upper-tail probability Q(z) of the standard normal."""
    return 0.5 * math.erfc(z / math.sqrt(2.0))


class AnomalyLikelihood(AnomalyDetector):
    """Wrap a detector and report how unusual its recent scores are.

    Keeps the mean and standard deviation of the inner detector's last
    ``long_window`` scores, averages the last ``short_window`` scores, and
    emits ``1 - Q((short_mean - mean) / std)``.  Emits 0.5 while the spread is
    degenerate.
    """

    def __init__(self, inner: AnomalyDetector, long_window: int = 500, short_window: int = 10):
        if not 1 <= short_window <= long_window:
            raise ValueError("need 1 <= short_window <= long_window")
        self.inner = inner
        self.long_window = long_window
        self.short_window = short_window
        self._long = deque(maxlen=long_window)
        self._short = deque(maxlen=short_window)

    @property
    def name(self):
        return f"anomaly_likelihood({self.inner.name})"

    def initialize(self, n_records, probation, min_value=None, max_value=None):
        super().initialize(n_records, probation)
        self.inner.initialize(n_records, probation, min_value, max_value)
        self._long.clear()
        self._short.clear()

    def step(self, record: TimeRecord) -> float:
        raw = float(self.inner.step(record))
        self._long.append(raw)
        self._short.append(raw)
        hist = np.fromiter(self._long, dtype=float, count=len(self._long))
        std = hist.std()
        if std < MIN_STD:
            return 0.5
        z = (math.fsum(self._short) / len(self._short) - hist.mean()) / std
        return 1.0 - gaussian_tail(z)

    def close(self):
        self.inner.close()

    def state(self):
        return {"long": list(self._long), "short": list(self._short), "inner": self.inner.state()}
