"""Corpus-wide detection threshold selection.

Thresholding a score stream only changes behaviour at the distinct score
values, so the exhaustive sweep visits each distinct value once (in descending
order), updating the corpus raw score incrementally as detections are added.
The threshold ``1.1`` is the "detect nothing" sentinel, which reproduces the
null detector, so the optimised normalized score is never negative.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .scoring import (ApplicationProfile, Detection, ScoreReport, ScoringError, null_raw,
                      scaled_sigmoid_array, score_detections)

NULL_THRESHOLD = 1.1
# incremental totals within this of the best are re-scored exactly
_TIE_TOLERANCE = 1e-9
_MAX_RECHECK = 32


@dataclass
class ThresholdResult:
    threshold: float
    corpus_raw_at_threshold: float
    normalized_at_threshold: float
    candidates_evaluated: int
    report: ScoreReport | None = None

    def to_dict(self) -> dict:
        return {"threshold": self.threshold, "score": self.normalized_at_threshold,
                "raw": self.corpus_raw_at_threshold, "candidates": self.candidates_evaluated}


def _check_scores(scores: np.ndarray, name: str = "") -> np.ndarray:
    scores = np.asarray(scores, dtype=float)
    if scores.size and (not np.all(np.isfinite(scores)) or scores.min() < 0.0 or scores.max() > 1.0):
        raise ScoringError(f"{name}: anomaly score out of range [0, 1]".lstrip(": "))
    return scores


def detected_indices(scores, threshold: float, probation_end_index: int) -> np.ndarray:
    scores = _check_scores(scores)
    idx = np.flatnonzero(scores >= threshold)
    return idx[idx >= probation_end_index]


def apply_threshold(scores, threshold: float, probation_end_index: int,
                    timestamps: Sequence | None = None) -> list[Detection]:
    """Detections at every post-probation record scoring ``>= threshold``."""
    scores = _check_scores(scores)
    return [
        Detection(int(i), timestamps[i] if timestamps is not None else None, float(scores[i]))
        for i in detected_indices(scores, threshold, probation_end_index)
    ]


def score_at_threshold(corpus, raw_scores: Mapping[str, np.ndarray], threshold: float,
                       profile: ApplicationProfile, names: Sequence[str] | None = None) -> ScoreReport:
    names = sorted(names if names is not None else corpus.names)
    detections = {
        n: detected_indices(raw_scores[n], threshold, corpus.streams[n].probation_end_index).tolist()
        for n in names
    }
    return score_detections(corpus, detections, profile, threshold=threshold, names=names)


def _point_table(corpus, raw_scores, names):
    """Flatten every post-probation record into parallel arrays:
    score, global window id (-1 outside windows), sigmoid value, record index."""
    scores, wins, sigs, recs = [], [], [], []
    wbase = 0
    for name in names:
        stream = corpus.streams[name]
        s = _check_scores(raw_scores[name], name)
        if len(s) != len(stream):
            raise ScoringError(f"{name}: expected {len(stream)} scores, got {len(s)}")
        idx = np.arange(stream.probation_end_index, len(stream))
        windows = corpus.windows[name]
        wid = np.full(idx.size, -1, dtype=np.int64)
        # sigmoid for points before the first window is -1.0
        y = np.full(idx.size, np.inf)
        if windows:
            begins = np.array([w.begin_index for w in windows])
            ends = np.array([w.end_index for w in windows])
            widths = ends - begins + 1
            k = np.searchsorted(begins, idx, side="right") - 1
            has = k >= 0
            kk = np.where(has, k, 0)
            inside = has & (idx <= ends[kk])
            wid[inside] = wbase + k[inside]
            y[has] = (idx[has] - ends[kk[has]]) / widths[kk[has]]
            wbase += len(windows)
        sig = scaled_sigmoid_array(y)
        scores.append(s[stream.probation_end_index:])
        wins.append(wid)
        sigs.append(sig)
        recs.append(idx)
    cat = (lambda parts, dt: np.concatenate(parts) if parts else np.empty(0, dtype=dt))
    return cat(scores, float), cat(wins, np.int64), cat(sigs, float), cat(recs, np.int64), wbase


def sweep_scores(corpus, raw_scores: Mapping[str, np.ndarray], profile: ApplicationProfile,
                 names: Sequence[str] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Corpus raw score at every candidate threshold.

    Returns ``(thresholds, totals)`` with thresholds in descending order,
    starting with the ``1.1`` sentinel.
    """
    names = sorted(names if names is not None else corpus.names)
    if not names:
        raise ScoringError("cannot optimise over an empty corpus")
    score, wid, sig, rec, _ = _point_table(corpus, raw_scores, names)
    base = null_raw({n: corpus.windows[n] for n in names}, profile)

    order = np.lexsort((rec, -score))
    score, wid, sig, rec = score[order], wid[order], sig[order], rec[order]

    delta = np.where(wid < 0, profile.fp * sig, 0.0)
    earliest = {}
    for j in np.flatnonzero(wid >= 0).tolist():
        g = int(wid[j])
        prev = earliest.get(g)
        if prev is None:
            earliest[g] = j
            delta[j] = profile.tp * sig[j] + profile.fn
        elif rec[j] < rec[prev]:
            earliest[g] = j
            delta[j] = profile.tp * (sig[j] - sig[prev])
    totals = base + np.cumsum(delta)

    if score.size == 0:
        return np.array([NULL_THRESHOLD]), np.array([base])
    # evaluate after the last point of each group of equal scores
    last = np.flatnonzero(np.r_[score[1:] != score[:-1], True])
    thresholds = np.r_[NULL_THRESHOLD, score[last]]
    return thresholds, np.r_[base, totals[last]]


def optimize_threshold(corpus, raw_scores: Mapping[str, np.ndarray], profile: ApplicationProfile,
                       names: Sequence[str] | None = None, method: str = "sweep") -> ThresholdResult:
    """Pick the single threshold maximising the corpus score.

    Ties go to the largest threshold (fewest detections).  ``method`` is
    ``"sweep"`` (exact, default) or ``"hill_climb"`` (local search over the
    sorted candidate set, for very large corpora).
    """
    names = sorted(names if names is not None else corpus.names)
    if not names:
        raise ScoringError("cannot optimise over an empty corpus")
    if method == "hill_climb":
        return _hill_climb(corpus, raw_scores, profile, names)
    if method != "sweep":
        raise ValueError(f"unknown optimisation method {method!r}")

    thresholds, totals = sweep_scores(corpus, raw_scores, profile, names)
    best = totals.max()
    near = np.flatnonzero(totals >= best - _TIE_TOLERANCE * max(1.0, abs(best)))
    # thresholds descend, so the first entries are the largest thresholds
    near = near[:_MAX_RECHECK]
    winner = None
    for j in near.tolist():
        report = score_at_threshold(corpus, raw_scores, float(thresholds[j]), profile, names)
        if winner is None or report.corpus_raw > winner.corpus_raw:
            winner = report
    return ThresholdResult(winner.threshold, winner.corpus_raw, winner.normalized,
                           len(thresholds), winner)


def _hill_climb(corpus, raw_scores, profile, names) -> ThresholdResult:
    values = np.unique(np.concatenate([_check_scores(raw_scores[n], n) for n in names]))
    candidates = np.r_[values, NULL_THRESHOLD]
    cache: dict[int, ScoreReport] = {}

    def evaluate(k: int) -> ScoreReport:
        if k not in cache:
            cache[k] = score_at_threshold(corpus, raw_scores, float(candidates[k]), profile, names)
        return cache[k]

    pos = len(candidates) - 1
    step = max(1, len(candidates) // 4)
    while True:
        moved = False
        for k in (pos - step, pos + step):
            if 0 <= k < len(candidates) and evaluate(k).corpus_raw > evaluate(pos).corpus_raw:
                pos, moved = k, True
                break
        if not moved:
            if step == 1:
                break
            step = max(1, step // 2)
    best = evaluate(pos)
    return ThresholdResult(best.threshold, best.corpus_raw, best.normalized, len(cache), best)
