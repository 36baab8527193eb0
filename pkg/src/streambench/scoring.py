"""Window-aware scoring of detections.

Each detection is located relative to the anomaly windows of its stream and
weighted by a scaled sigmoid of its relative position: early detections inside
a window earn close to the full true-positive weight, detections trailing a
window are penalised less the closer they are, and missed windows cost the
false-negative weight.  Corpus totals are rescaled so that a detector that
never fires scores 0 and a perfect detector scores 100.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import asdict, dataclass, field
from datetime import datetime
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .corpus import AnomalyWindow

STEEPNESS = 5.0
# beyond this relative position the sigmoid is pinned to exactly -1.0
SATURATION = 3.0

TP, FP, IGNORED = "TP", "FP", "ignored"


class ScoringError(ValueError):
    pass


@dataclass(frozen=True)
class ApplicationProfile:
    """Weight magnitudes; negativity comes from the sigmoid and the FN term.

    ``tn`` is carried for file-format compatibility and never used.
    """

    name: str
    tp: float
    fp: float
    fn: float
    tn: float = 1.0

    def __post_init__(self):
        for attr in ("tp", "fp", "fn", "tn"):
            w = getattr(self, attr)
            if not math.isfinite(w) or w < 0:
                raise ScoringError(f"profile {self.name!r}: {attr} weight must be a nonnegative number")

    def scaled(self, factor: float) -> "ApplicationProfile":
        return ApplicationProfile(self.name, self.tp * factor, self.fp * factor,
                                  self.fn * factor, self.tn * factor)

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


def check_bounded(profile: ApplicationProfile) -> None:
    """Reject profiles whose TP/TN weights exceed 1."""
    if profile.tp > 1 or profile.tn > 1:
        raise ScoringError(f"profile {profile.name!r}: tp and tn weights must not exceed 1")


STANDARD = ApplicationProfile("standard", tp=1.0, fp=0.11, fn=1.0, tn=1.0)
REWARD_LOW_FP = ApplicationProfile("reward_low_fp", tp=1.0, fp=0.22, fn=1.0, tn=1.0)
REWARD_LOW_FN = ApplicationProfile("reward_low_fn", tp=1.0, fp=0.11, fn=2.0, tn=1.0)

DEFAULT_PROFILES = {p.name: p for p in (STANDARD, REWARD_LOW_FP, REWARD_LOW_FN)}


def profiles_from_dict(data: Mapping[str, Mapping[str, float]]) -> dict[str, ApplicationProfile]:
    profiles = {}
    for name, weights in data.items():
        missing = {"tp", "fp", "fn"} - set(weights)
        if missing:
            raise ScoringError(f"profile {name!r} is missing weights {sorted(missing)}")
        profile = ApplicationProfile(name, float(weights["tp"]), float(weights["fp"]),
                                     float(weights["fn"]), float(weights.get("tn", 1.0)))
        check_bounded(profile)
        profiles[name] = profile
    return profiles


def profiles_to_dict(profiles: Mapping[str, ApplicationProfile]) -> dict:
    return {name: p.to_dict() for name, p in profiles.items()}


def scaled_sigmoid(y: float) -> float:
    """``2 / (1 + exp(5 y)) - 1``; exactly -1.0 once ``y > 3``."""
    if y > SATURATION:
        return -1.0
    return 2.0 / (1.0 + math.exp(STEEPNESS * y)) - 1.0


def scaled_sigmoid_array(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    with np.errstate(over="ignore"):
        out = 2.0 / (1.0 + np.exp(STEEPNESS * np.minimum(y, SATURATION))) - 1.0
    out[y > SATURATION] = -1.0
    return out


def relative_position(index: int, window: AnomalyWindow) -> float:
    """Offset of ``index`` from the window's right edge, in window widths."""
    return (index - window.end_index) / window.width


class Detection(NamedTuple):
    record_index: int
    timestamp: datetime | None = None
    raw_score: float = 1.0


class Contribution(NamedTuple):
    record_index: int
    classification: str
    sigmoid: float
    weighted: float


def _indices(detections: Iterable) -> list[int]:
    return [d.record_index if isinstance(d, Detection) else int(d) for d in detections]


def classify_detections(detections: Sequence, windows: Sequence[AnomalyWindow],
                        probation_end_index: int) -> list[tuple[int, str, float]]:
    """Label each scored detection as TP, FP or ignored, with its sigmoid value.

    Detections inside the probationary period are dropped.  Only the earliest
    detection in a window is a TP; later ones in the same window are
    ``ignored`` with sigmoid 0.  An FP is measured against the closest window
    ending before it, or gets -1.0 when no window precedes it.
    """
    idx = _indices(detections)
    if any(b <= a for a, b in zip(idx, idx[1:])):
        raise ScoringError("detections must be sorted by record index without duplicates")
    for a, b in zip(windows, windows[1:]):
        if b.begin_index <= a.end_index:
            raise ScoringError("windows must be sorted and disjoint")

    begins = [w.begin_index for w in windows]
    credited = set()
    out = []
    for i in idx:
        if i < probation_end_index:
            continue
        k = bisect.bisect_right(begins, i) - 1
        if k >= 0 and windows[k].contains(i):
            if k in credited:
                out.append((i, IGNORED, 0.0))
            else:
                credited.add(k)
                out.append((i, TP, scaled_sigmoid(relative_position(i, windows[k]))))
        elif k >= 0:
            out.append((i, FP, scaled_sigmoid(relative_position(i, windows[k]))))
        else:
            out.append((i, FP, -1.0))
    return out


def weigh(classification: str, sigmoid: float, profile: ApplicationProfile) -> float:
    if classification == TP:
        return profile.tp * sigmoid
    if classification == FP:
        return profile.fp * sigmoid
    return 0.0


def weighted_total(contributions: Iterable[tuple[str, float]], fn_count: int,
                   profile: ApplicationProfile) -> float:
    """Sum of profile-weighted sigmoid values minus the missed-window penalty."""
    return math.fsum(weigh(c, s, profile) for c, s in contributions) - profile.fn * fn_count


@dataclass
class FileScore:
    name: str
    raw_score: float
    tp_count: int
    fp_count: int
    fn_count: int
    tn_count: int
    contributions: list[Contribution] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["contributions"] = [list(c) for c in self.contributions]
        return d


def score_file(detections: Sequence, windows: Sequence[AnomalyWindow], probation_end_index: int,
               profile: ApplicationProfile, n_records: int | None = None,
               name: str = "") -> FileScore:
    classified = classify_detections(detections, windows, probation_end_index)
    contributions = [Contribution(i, c, s, weigh(c, s, profile)) for i, c, s in classified]
    tp = sum(1 for c in contributions if c.classification == TP)
    fp = sum(1 for c in contributions if c.classification == FP)
    fn = len(windows) - tp
    raw = math.fsum(c.weighted for c in contributions) - profile.fn * fn
    tn = 0
    if n_records is not None:
        in_windows = sum(w.width for w in windows)
        tn = (n_records - probation_end_index) - in_windows - fp
    return FileScore(name, raw, tp, fp, fn, tn, contributions)


def score_corpus(file_scores: Mapping[str, FileScore | float],
                 expected: Iterable[str] | None = None) -> float:
    """Sum per-file raw scores in file-name order."""
    if not file_scores:
        raise ScoringError("cannot score an empty corpus")
    if expected is not None:
        missing = sorted(set(expected) - set(file_scores))
        if missing:
            raise ScoringError(f"missing results for {missing}")
    values = []
    for name in sorted(file_scores):
        s = file_scores[name]
        values.append(s.raw_score if isinstance(s, FileScore) else float(s))
    return math.fsum(values)


def _all_windows(windows: Mapping[str, Sequence[AnomalyWindow]] | Sequence[AnomalyWindow]):
    if isinstance(windows, Mapping):
        for name in sorted(windows):
            yield from windows[name]
    else:
        yield from windows


def perfect_raw(windows, profile: ApplicationProfile) -> float:
    """Raw score of a detector firing exactly once, on each window's first record."""
    return math.fsum(profile.tp * scaled_sigmoid(relative_position(w.begin_index, w))
                     for w in _all_windows(windows))


def null_raw(windows, profile: ApplicationProfile) -> float:
    return -profile.fn * sum(1 for _ in _all_windows(windows))


def normalize(corpus_raw: float, perfect: float, null: float) -> float:
    if not perfect > null:
        raise ScoringError("degenerate corpus: perfect score does not exceed null score")
    return 100.0 * (corpus_raw - null) / (perfect - null)


@dataclass
class ScoreReport:
    profile: str
    threshold: float | None
    files: list[FileScore]
    corpus_raw: float
    perfect_raw: float
    null_raw: float
    normalized: float

    @property
    def counts(self) -> dict[str, int]:
        return {
            "tp": sum(f.tp_count for f in self.files),
            "fp": sum(f.fp_count for f in self.files),
            "fn": sum(f.fn_count for f in self.files),
            "tn": sum(f.tn_count for f in self.files),
        }

    def to_dict(self) -> dict:
        return {
            "profile": self.profile,
            "threshold": self.threshold,
            "corpus_raw": self.corpus_raw,
            "perfect_raw": self.perfect_raw,
            "null_raw": self.null_raw,
            "normalized": self.normalized,
            "counts": self.counts,
            "files": {f.name: f.to_dict() for f in self.files},
        }


def score_detections(corpus, detections: Mapping[str, Sequence], profile: ApplicationProfile,
                     threshold: float | None = None, names: Sequence[str] | None = None) -> ScoreReport:
    """Score per-file detections over ``names`` (default: every corpus file)."""
    names = sorted(names if names is not None else corpus.names)
    files = {}
    for name in names:
        if name not in detections:
            raise ScoringError(f"missing results for {name!r}")
        stream = corpus.streams[name]
        files[name] = score_file(detections[name], corpus.windows[name], stream.probation_end_index,
                                 profile, n_records=len(stream), name=name)
    raw = score_corpus(files, expected=names)
    windows = {n: corpus.windows[n] for n in names}
    perfect, null = perfect_raw(windows, profile), null_raw(windows, profile)
    return ScoreReport(profile.name, threshold, [files[n] for n in names], raw, perfect, null,
                       normalize(raw, perfect, null))
