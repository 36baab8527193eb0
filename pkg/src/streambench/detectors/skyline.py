"""Mixture-of-experts detector with majority-free voting.

Each expert looks at the current value against a rolling window of previous
values and votes anomalous or not; the score is the fraction of votes.  The
threshold optimizer later decides how many votes count as a detection.
"""

from __future__ import annotations

from collections import deque
from typing import Callable

import numpy as np

from ..corpus import TimeRecord
from .base import AnomalyDetector

SIGMAS = 3.0
HISTOGRAM_BINS = 20
MIN_BIN_MASS = 0.01


def _tol(scale: float) -> float:
    # absorbs rounding when the window is (numerically) constant
    return 1e-12 * max(1.0, abs(scale))


def moving_average_expert(history: np.ndarray, x: float) -> bool:
    mean = history.mean()
    return abs(x - mean) > SIGMAS * history.std() + _tol(mean)


def least_squares_expert(history: np.ndarray, x: float) -> bool:
    t = np.arange(history.size, dtype=float)
    slope, intercept = np.polyfit(t, history, 1)
    residuals = history - (slope * t + intercept)
    predicted = slope * history.size + intercept
    return abs(x - predicted) > SIGMAS * residuals.std() + _tol(predicted)


def histogram_expert(history: np.ndarray, x: float) -> bool:
    lo, hi = history.min(), history.max()
    if x < lo or x > hi:
        return True
    if hi == lo:
        return False
    counts, _ = np.histogram(history, bins=HISTOGRAM_BINS, range=(lo, hi))
    b = min(int((x - lo) / (hi - lo) * HISTOGRAM_BINS), HISTOGRAM_BINS - 1)
    return counts[b] < MIN_BIN_MASS * history.size


EXPERTS: dict[str, Callable[[np.ndarray, float], bool]] = {
    "moving_average": moving_average_expert,
    "least_squares": least_squares_expert,
    "histogram": histogram_expert,
}


class SkylineEnsemble(AnomalyDetector):
    name = "skyline"

    def __init__(self, window: int = 100, experts: list[str] | None = None, min_records: int = 3):
        self.window = window
        self.expert_names = list(experts) if experts is not None else list(EXPERTS)
        unknown = [e for e in self.expert_names if e not in EXPERTS]
        if unknown or not self.expert_names:
            raise ValueError(f"unknown experts {unknown}; available: {sorted(EXPERTS)}")
        self.min_records = min_records
        self._history = deque(maxlen=window)

    def initialize(self, n_records, probation, min_value=None, max_value=None):
        super().initialize(n_records, probation)
        self._history.clear()

    def votes(self, x: float) -> list[bool]:
        hist = np.fromiter(self._history, dtype=float, count=len(self._history))
        return [bool(EXPERTS[e](hist, x)) for e in self.expert_names]

    def step(self, record: TimeRecord) -> float:
        x = record.value
        score = 0.0
        # the current record counts towards "records seen"
        if len(self._history) + 1 >= self.min_records:
            v = self.votes(x)
            score = sum(v) / len(v)
        self._history.append(x)
        return score

    def state(self):
        return {"window": self.window, "experts": self.expert_names, "history": list(self._history)}
