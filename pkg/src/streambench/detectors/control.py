"""Control detectors: constant, seeded random and the window oracle."""

from __future__ import annotations

import random
from typing import Sequence

from ..corpus import AnomalyWindow, TimeRecord
from .base import AnomalyDetector


class NullDetector(AnomalyDetector):
    name = "null"

    def step(self, record: TimeRecord) -> float:
        return 0.5


class RandomDetector(AnomalyDetector):
    """Uniform scores in ``[0, 1)`` from Python's Mersenne Twister.

    ``random.Random(seed)`` produces the same sequence on every platform, so
    the score for record ``k`` depends only on ``(seed, k)``.
    """

    name = "random"

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._rng = random.Random(seed)

    def initialize(self, n_records, probation, min_value=None, max_value=None):
        super().initialize(n_records, probation)
        self._rng = random.Random(self.seed)

    def step(self, record: TimeRecord) -> float:
        return self._rng.random()


class OracleDetector(AnomalyDetector):
    """Scores 1.0 on the first record of every window and 0.0 elsewhere.

    Reads ground truth, so it is only meant for calibrating the score scale.
    """

    name = "oracle"

    def __init__(self, windows: Sequence[AnomalyWindow] = ()):
        self.starts = {w.begin_index for w in windows}
        self._i = 0

    def initialize(self, n_records, probation, min_value=None, max_value=None):
        super().initialize(n_records, probation)
        self._i = 0

    def step(self, record: TimeRecord) -> float:
        score = 1.0 if self._i in self.starts else 0.0
        self._i += 1
        return score

    def state(self):
        return {"position": self._i}
