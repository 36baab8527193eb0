from __future__ import annotations

import math

import numpy as np

from ..corpus import TimeRecord
from .base import AnomalyDetector


class WindowedGaussianDetector(AnomalyDetector):
    """Two-sided Gaussian tail score against the last ``window`` values.

    The score is ``1 - 2 Q(|z|)`` where ``z`` standardises the current value
    by the mean and (population) standard deviation of the preceding values.
    The window grows from one value until it holds ``window`` of them.
    """

    name = "windowed_gaussian"

    def __init__(self, window: int = 250):
        if window < 1:
            raise ValueError("window must be positive")
        self.window = window
        self._buf = np.empty(window)
        self._count = 0
        self._head = 0

    def initialize(self, n_records, probation, min_value=None, max_value=None):
        super().initialize(n_records, probation)
        self._count = 0
        self._head = 0

    def step(self, record: TimeRecord) -> float:
        x = record.value
        score = 0.0
        if self._count:
            hist = self._buf[:self._count]
            lo, hi = hist.min(), hist.max()
            # a constant window can still give a tiny nonzero std through rounding
            if lo == hi:
                score = 0.0 if x == lo else 1.0
            else:
                mean = hist.mean()
                std = hist.std()
                score = math.erf(abs(x - mean) / std / math.sqrt(2.0)) if std > 0 else 1.0
        self._buf[self._head] = x
        self._head = (self._head + 1) % self.window
        self._count = min(self._count + 1, self.window)
        return min(1.0, max(0.0, score))

    def state(self):
        order = np.roll(self._buf[:self._count], -self._head) if self._count == self.window \
            else self._buf[:self._count]
        return {"window": self.window, "values": order.tolist()}
