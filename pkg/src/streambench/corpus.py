"""Corpus data model, on-disk format and anomaly-window construction.

A corpus is a directory tree of CSV files (``timestamp,value``) plus two JSON
side files: combined labels (path -> anomaly timestamps) and combined windows
(path -> ``[begin, end]`` pairs).  All window arithmetic is done on record
indices; timestamps are only ordered keys.
"""

from __future__ import annotations

import bisect
import csv
import json
import math
import os
from dataclasses import dataclass, field
from datetime import datetime
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

TIMESTAMP_FORMAT = "%Y-%m-%d %H:%M:%S"
HEADER = ["timestamp", "value"]

PROBATION_FRACTION = 0.15
WINDOW_FRACTION = 0.10


class CorpusError(ValueError):
    """Raised for malformed corpus files or invalid labels."""


class TimeRecord(NamedTuple):
    timestamp: datetime
    value: float


def _exact(fraction: float) -> Fraction:
    # decimal literal semantics, so floor(0.15 * n) never rounds down by an ulp
    return Fraction(repr(float(fraction)))


def parse_timestamp(text: str) -> datetime:
    """Parse ``YYYY-MM-DD HH:MM:SS``; a trailing fractional part is tolerated
    because published label files carry ``.000000`` suffixes."""
    text = text.strip()
    if len(text) > 19 and text[19] == ".":
        text = text[:19]
    if len(text) != 19:
        raise ValueError(f"bad timestamp {text!r}")
    return datetime.strptime(text, TIMESTAMP_FORMAT)


def format_timestamp(ts: datetime) -> str:
    return ts.strftime(TIMESTAMP_FORMAT)


def probation_length(n_records: int, cap: int | None = None) -> int:
    """Number of leading records during which detections are not scored."""
    if n_records < 2:
        raise ValueError("a stream needs at least 2 records")
    length = math.floor(_exact(PROBATION_FRACTION) * n_records)
    if cap is not None:
        if cap <= 0:
            raise ValueError("probation cap must be positive")
        length = min(length, cap)
    return min(length, n_records - 1)


@dataclass
class DataStream:
    """One corpus file: ordered timestamps and values."""

    name: str
    timestamps: list[datetime]
    values: np.ndarray
    probation_end_index: int = -1
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if len(self.timestamps) != len(self.values):
            raise CorpusError(f"{self.name}: timestamp/value length mismatch")
        if len(self.timestamps) < 2:
            raise CorpusError(f"{self.name}: a stream needs at least 2 records")
        if self.probation_end_index < 0:
            self.probation_end_index = probation_length(len(self.timestamps))
        if not 0 <= self.probation_end_index < len(self.timestamps):
            raise CorpusError(f"{self.name}: probation end out of range")
        self.validate()

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def records(self) -> list[TimeRecord]:
        return [TimeRecord(t, float(v)) for t, v in zip(self.timestamps, self.values)]

    def validate(self) -> None:
        bad = np.flatnonzero(~np.isfinite(self.values))
        if bad.size:
            raise CorpusError(f"{self.name}: non-finite value at record {bad[0]}")
        for i in range(1, len(self.timestamps)):
            if self.timestamps[i] <= self.timestamps[i - 1]:
                # +2: one for the header, one for 1-based line numbers
                raise CorpusError(f"non-monotonic timestamp at line {i + 2}")

    def index_of(self, ts: datetime) -> int:
        if self._index is None:
            self._index = {t: i for i, t in enumerate(self.timestamps)}
        try:
            return self._index[ts]
        except KeyError:
            raise CorpusError(f"{self.name}: timestamp {ts} not in stream") from None

    def search(self, ts: datetime, side: str = "left") -> int:
        """Insertion index of ``ts`` (bisect semantics)."""
        fn = bisect.bisect_left if side == "left" else bisect.bisect_right
        return fn(self.timestamps, ts)


def parse_stream(path: str | os.PathLike, name: str | None = None,
                 probation_cap: int | None = None) -> DataStream:
    path = Path(path)
    timestamps = []
    values = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != HEADER:
            raise CorpusError(f"{path}: line 1: header must be 'timestamp,value'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise CorpusError(f"{path}: line {lineno}: expected 2 columns, got {len(row)}")
            try:
                ts = parse_timestamp(row[0])
            except ValueError:
                raise CorpusError(f"{path}: line {lineno}: unparseable timestamp {row[0]!r}") from None
            try:
                value = float(row[1])
            except ValueError:
                raise CorpusError(f"{path}: line {lineno}: unparseable value {row[1]!r}") from None
            if not math.isfinite(value):
                raise CorpusError(f"{path}: line {lineno}: non-finite value")
            if timestamps and ts <= timestamps[-1]:
                raise CorpusError(f"{path}: non-monotonic timestamp at line {lineno}")
            timestamps.append(ts)
            values.append(value)
    if len(timestamps) < 2:
        raise CorpusError(f"{path}: a stream needs at least 2 records")
    return DataStream(
        name=name if name is not None else path.name,
        timestamps=timestamps,
        values=np.array(values),
        probation_end_index=probation_length(len(timestamps), probation_cap),
    )


def write_stream(stream: DataStream, path: str | os.PathLike) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("timestamp,value\n")
        for ts, v in zip(stream.timestamps, stream.values):
            fh.write(f"{format_timestamp(ts)},{float(v)!r}\n")


@dataclass(frozen=True)
class AnomalyWindow:
    """Closed interval of records around a ground-truth label.

    ``begin``/``end`` are timestamps; ``begin_index``/``end_index`` are the
    matching record indices, which is what scoring works with.
    """

    begin: datetime
    end: datetime
    source_label: datetime | None
    begin_index: int
    end_index: int

    @property
    def width(self) -> int:
        return self.end_index - self.begin_index + 1

    def contains(self, index: int) -> bool:
        return self.begin_index <= index <= self.end_index


def window_width(n_records: int, n_labels: int, fraction: float = WINDOW_FRACTION) -> int:
    # never narrower than one record
    return max(1, math.floor(_exact(fraction) * n_records / n_labels))


def make_windows(stream: DataStream, labels: Sequence[datetime],
                 fraction: float = WINDOW_FRACTION) -> list[AnomalyWindow]:
    """Centre a window of ``floor(fraction * n / k)`` records on each label.

    Windows are clamped to ``[probation_end_index, n - 1]`` and overlapping
    windows are merged, keeping the earliest source label.
    """
    if not labels:
        return []
    n = len(stream)
    width = window_width(n, len(labels), fraction)
    before = width // 2
    after = width - 1 - before

    spans = []
    for label in sorted(labels):
        idx = stream.index_of(label)
        if idx < stream.probation_end_index:
            raise CorpusError(
                f"{stream.name}: label {format_timestamp(label)} lies inside the probationary period")
        lo = max(stream.probation_end_index, idx - before)
        hi = min(n - 1, idx + after)
        spans.append([lo, hi, label])

    merged = [spans[0]]
    for lo, hi, label in spans[1:]:
        last = merged[-1]
        if lo <= last[1]:
            last[1] = max(last[1], hi)
        else:
            merged.append([lo, hi, label])

    return [
        AnomalyWindow(stream.timestamps[lo], stream.timestamps[hi], label, lo, hi)
        for lo, hi, label in merged
    ]


def windows_from_pairs(stream: DataStream, pairs: Iterable[Sequence[str]]) -> list[AnomalyWindow]:
    """Map ``[begin, end]`` timestamp strings onto record indices.

    Window bounds need not coincide with records: the window covers every
    record whose timestamp lies in the closed interval.  The left edge is
    clamped to the end of probation; windows left empty are dropped.
    """
    out = []
    for pair in pairs:
        if len(pair) != 2:
            raise CorpusError(f"{stream.name}: window entries must be [begin, end] pairs")
        begin, end = parse_timestamp(pair[0]), parse_timestamp(pair[1])
        if end < begin:
            raise CorpusError(f"{stream.name}: window ends before it begins")
        lo = max(stream.search(begin, "left"), stream.probation_end_index)
        hi = stream.search(end, "right") - 1
        if hi < lo:
            continue
        out.append(AnomalyWindow(stream.timestamps[lo], stream.timestamps[hi], None, lo, hi))
    out.sort(key=lambda w: w.begin_index)
    for a, b in zip(out, out[1:]):
        if b.begin_index <= a.end_index:
            raise CorpusError(f"{stream.name}: overlapping windows")
    return out


def windows_to_pairs(windows: Iterable[AnomalyWindow]) -> list[list[str]]:
    return [[format_timestamp(w.begin), format_timestamp(w.end)] for w in windows]


def read_json(path: str | os.PathLike) -> dict:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise CorpusError(f"{path}: expected a JSON object")
    return data


def write_json(data, path: str | os.PathLike) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass
class Corpus:
    """A set of streams keyed by corpus-relative path, with their windows."""

    root: Path | None
    streams: dict[str, DataStream]
    windows: dict[str, list[AnomalyWindow]]
    labels: dict[str, list[datetime]] = field(default_factory=dict)

    @property
    def names(self) -> list[str]:
        return sorted(self.streams)

    def __len__(self) -> int:
        return len(self.streams)

    def window_count(self) -> int:
        return sum(len(w) for w in self.windows.values())


def discover_files(data_dir: str | os.PathLike) -> list[str]:
    root = Path(data_dir)
    return sorted(p.relative_to(root).as_posix() for p in root.rglob("*.csv"))


def load_corpus(data_dir: str | os.PathLike, windows_path=None, labels_path=None,
                probation_cap: int | None = None,
                window_fraction: float = WINDOW_FRACTION) -> Corpus:
    """Load every CSV under ``data_dir``.

    Windows come from ``windows_path`` when given, otherwise they are built
    from ``labels_path`` with :func:`make_windows`.  Files absent from the
    window/label file get no windows.
    """
    root = Path(data_dir)
    names = discover_files(root)
    if not names:
        raise CorpusError(f"{root}: no CSV files found")
    streams = {n: parse_stream(root / n, name=n, probation_cap=probation_cap) for n in names}

    labels: dict[str, list[datetime]] = {}
    if labels_path is not None:
        raw = read_json(labels_path)
        for name, stamps in raw.items():
            if name not in streams:
                raise CorpusError(f"labels reference unknown file {name!r}")
            labels[name] = sorted(parse_timestamp(s) for s in stamps)
            for ts in labels[name]:
                idx = streams[name].index_of(ts)
                if idx < streams[name].probation_end_index:
                    raise CorpusError(
                        f"{name}: label {format_timestamp(ts)} lies inside the probationary period")

    windows: dict[str, list[AnomalyWindow]] = {}
    if windows_path is not None:
        raw = read_json(windows_path)
        for name, pairs in raw.items():
            if name not in streams:
                raise CorpusError(f"windows reference unknown file {name!r}")
            windows[name] = windows_from_pairs(streams[name], pairs)
    else:
        for name, stamps in labels.items():
            windows[name] = make_windows(streams[name], stamps, window_fraction)
    for name in names:
        windows.setdefault(name, [])
    return Corpus(root=root, streams=streams, windows=windows, labels=labels)


def corpus_from_streams(streams: Mapping[str, DataStream],
                        labels: Mapping[str, Sequence[datetime]],
                        window_fraction: float = WINDOW_FRACTION) -> Corpus:
    """Build an in-memory corpus, computing windows from labels."""
    windows = {
        name: make_windows(stream, list(labels.get(name, ())), window_fraction)
        for name, stream in streams.items()
    }
    return Corpus(root=None, streams=dict(streams), windows=windows,
                  labels={k: list(v) for k, v in labels.items()})
