"""Seeded synthetic streams with injected anomalies.

The base signal is ``AMPLITUDE * sin(2*pi*t / PERIOD) + N(0, NOISE_STD)``.
Anomaly magnitudes are expressed in units of the base signal's standard
deviation, ``sqrt(AMPLITUDE**2 / 2 + NOISE_STD**2)``.
"""

from __future__ import annotations

import math
from datetime import datetime, timedelta
from typing import Sequence

import numpy as np

from .corpus import CorpusError, DataStream, corpus_from_streams, probation_length

KINDS = ("spike", "level_shift", "frequency_change", "noise_only")

AMPLITUDE = 1.0
PERIOD = 50
NOISE_STD = 0.1
SPIKE_SIGMAS = 10.0
LEVEL_SHIFT_SIGMAS = 6.0
START = datetime(2015, 1, 1)
INTERVAL = timedelta(minutes=5)

BASE_STD = math.sqrt(AMPLITUDE ** 2 / 2 + NOISE_STD ** 2)


def generate_synthetic(kind: str, n_records: int, anomaly_positions: Sequence[int] = (),
                       seed: int = 0, name: str | None = None):
    """Return ``(stream, labels)``; labels are the timestamps at the anomaly
    positions (empty for ``noise_only``)."""
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}; expected one of {KINDS}")
    if n_records < 100:
        raise ValueError("n_records must be at least 100")
    positions = sorted(set(int(p) for p in anomaly_positions))
    if kind == "noise_only":
        positions = []
    probation = probation_length(n_records)
    for p in positions:
        if p < probation:
            raise CorpusError(f"anomaly position {p} lies inside the probationary period (< {probation})")
        if p >= n_records:
            raise CorpusError(f"anomaly position {p} is past the end of the stream")

    rng = np.random.default_rng(seed)
    t = np.arange(n_records)
    noise = rng.normal(0.0, NOISE_STD, n_records)

    omega = np.full(n_records, 2 * math.pi / PERIOD)
    if kind == "frequency_change":
        for p in positions:
            omega[p:] *= 2.0
    # phase accumulates so the signal stays continuous across a frequency change
    phase = np.concatenate(([0.0], np.cumsum(omega[:-1])))
    values = AMPLITUDE * np.sin(phase) + noise

    if kind == "spike":
        signs = rng.choice([-1.0, 1.0], size=len(positions))
        for p, sign in zip(positions, signs):
            values[p] += sign * SPIKE_SIGMAS * BASE_STD
    elif kind == "level_shift":
        for p in positions:
            values[p:] += LEVEL_SHIFT_SIGMAS * BASE_STD

    timestamps = [START + i * INTERVAL for i in t.tolist()]
    stream = DataStream(name=name or f"{kind}.csv", timestamps=timestamps, values=values,
                        probation_end_index=probation)
    return stream, [timestamps[p] for p in positions]


def synthetic_corpus(seed: int = 0, n_files: int = 10, length_range=(2000, 5000),
                     max_anomalies: int = 3, kinds: Sequence[str] = ("spike", "level_shift", "frequency_change"),
                     window_fraction: float = 0.10):
    """Random in-memory corpus: each file gets 0..max_anomalies anomalies of
    one kind; files drawing zero anomalies are pure noise."""
    rng = np.random.default_rng(seed)
    streams, labels = {}, {}
    for i in range(n_files):
        n = int(rng.integers(length_range[0], length_range[1] + 1))
        k = int(rng.integers(0, max_anomalies + 1))
        kind = str(kinds[i % len(kinds)]) if k else "noise_only"
        start = probation_length(n) + 1
        # keep anomalies apart so windows rarely merge
        slots = np.linspace(start, n - 2, k + 2)[1:-1] if k else []
        positions = [int(p) for p in slots]
        stream, stamps = generate_synthetic(kind, n, positions, seed=seed * 1000 + i,
                                            name=f"{kind}/file_{i:02d}.csv")
        streams[stream.name] = stream
        labels[stream.name] = stamps
    return corpus_from_streams(streams, labels, window_fraction)
