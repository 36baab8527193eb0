"""Combine several labelers' anomaly marks into one ground-truth label set.

Marks from all labelers are swept in record order and grouped into clusters:
a mark joins the open cluster when it lies within ``tolerance_records`` of the
cluster's running centroid and its labeler is not already represented there.
A cluster becomes a ground-truth label (its median record) when the fraction
of labelers voting for it reaches ``agreement_fraction``.
"""

from __future__ import annotations

import statistics
from datetime import datetime
from typing import Mapping, Sequence

from .corpus import CorpusError, DataStream, format_timestamp, parse_timestamp

DEFAULT_AGREEMENT = 0.5
DEFAULT_TOLERANCE_FRACTION = 0.05


def combine_labels(stream: DataStream, labelers: Sequence[Sequence[datetime]],
                   agreement_fraction: float = DEFAULT_AGREEMENT,
                   tolerance_records: int | None = None) -> list[datetime]:
    if not labelers:
        raise ValueError("at least one labeler is required")
    if not 0 < agreement_fraction <= 1:
        raise ValueError("agreement_fraction must lie in (0, 1]")
    if tolerance_records is None:
        tolerance_records = int(DEFAULT_TOLERANCE_FRACTION * len(stream))
    if tolerance_records < 0:
        raise ValueError("tolerance_records must be nonnegative")

    marks = []
    for who, stamps in enumerate(labelers):
        idx = [stream.index_of(ts) for ts in stamps]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise CorpusError(f"{stream.name}: labeler {who} timestamps are not sorted and unique")
        marks.extend((i, who) for i in idx)
    marks.sort()

    clusters: list[tuple[list[int], set[int]]] = []
    for idx, who in marks:
        if clusters:
            members, voters = clusters[-1]
            centroid = sum(members) / len(members)
            if abs(idx - centroid) <= tolerance_records and who not in voters:
                members.append(idx)
                voters.add(who)
                continue
        clusters.append(([idx], {who}))

    n_labelers = len(labelers)
    chosen = set()
    for members, voters in clusters:
        if len(voters) / n_labelers >= agreement_fraction:
            chosen.add(statistics.median_low(members))
    return [stream.timestamps[i] for i in sorted(chosen)]


def combine_raw_labels(streams: Mapping[str, DataStream],
                       raw: Mapping[str, Mapping[str, Sequence[str]]],
                       agreement_fraction: float = DEFAULT_AGREEMENT,
                       tolerance_fraction: float = DEFAULT_TOLERANCE_FRACTION) -> dict[str, list[str]]:
    """Combine the raw multi-labeler JSON (labeler -> path -> timestamps).

    Every labeler is assumed to have inspected every file, so a file a labeler
    left out counts as "no anomalies" from that labeler.
    """
    if not raw:
        raise ValueError("at least one labeler is required")
    for who, files in raw.items():
        unknown = set(files) - set(streams)
        if unknown:
            raise CorpusError(f"labeler {who!r} references unknown files: {sorted(unknown)}")
    combined = {}
    for name in sorted(streams):
        stream = streams[name]
        per_labeler = [
            sorted(parse_timestamp(s) for s in raw[who].get(name, ()))
            for who in sorted(raw)
        ]
        labels = combine_labels(stream, per_labeler, agreement_fraction,
                                int(tolerance_fraction * len(stream)))
        combined[name] = [format_timestamp(ts) for ts in labels]
    return combined
