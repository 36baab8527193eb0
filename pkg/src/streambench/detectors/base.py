"""Streaming detector contract."""

from __future__ import annotations

import math

import numpy as np

from ..corpus import DataStream, TimeRecord


class DetectorError(RuntimeError):
    """A detector failed or produced an invalid score."""


class AnomalyDetector:
    """Base class for causal, one-record-at-a-time detectors.

    Subclasses implement :meth:`step`.  They must only use records already
    seen and emit exactly one score in ``[0, 1]`` per record, including during
    probation (the scorer discards those).
    """

    name = "detector"

    def initialize(self, n_records: int, probation: int,
                   min_value: float | None = None, max_value: float | None = None) -> None:
        self.n_records = n_records
        self.probation = probation

    def step(self, record: TimeRecord) -> float:
        raise NotImplementedError

    def state(self) -> dict:
        """JSON-serializable snapshot of the rolling state, for audits."""
        return {}

    def close(self) -> None:
        pass

    def run(self, stream: DataStream) -> np.ndarray:
        self.initialize(len(stream), stream.probation_end_index)
        out = np.empty(len(stream))
        try:
            for i, record in enumerate(zip(stream.timestamps, stream.values.tolist())):
                score = float(self.step(TimeRecord(*record)))
                if not (0.0 <= score <= 1.0) or math.isnan(score):
                    raise DetectorError(f"{self.name}: score out of range at record {i}: {score!r}")
                out[i] = score
        finally:
            self.close()
        return out
