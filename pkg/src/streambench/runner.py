"""Pipeline stages: generate, detect, optimize, score, normalize, plotdata.

Results follow the published benchmark layout: one directory per detector
holding one ``<detector>_<file>.csv`` per corpus file, mirroring the corpus
sub-directories.  Every stage persists its output so that scoreboards can be
recomputed from raw scores, windows and profiles alone.
"""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import __version__
from .corpus import (Corpus, CorpusError, format_timestamp, make_windows, parse_timestamp,
                     read_json, windows_to_pairs, write_json, write_stream, WINDOW_FRACTION)
from .detectors import DetectorError, build_detector, detector_slug
from .optimizer import ThresholdResult, optimize_threshold, score_at_threshold
from .scoring import (ApplicationProfile, DEFAULT_PROFILES, FP, TP, ScoreReport, classify_detections,
                      normalize, profiles_from_dict, profiles_to_dict, weigh)
from .synthetic import KINDS, generate_synthetic

log = logging.getLogger(__name__)

RESULT_HEADER = ["timestamp", "value", "anomaly_score"]
PLOT_HEADER = ["timestamp", "value", "anomaly_score", "detection_flag", "classification",
               "window_flag", "contribution"]


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# -- generate ---------------------------------------------------------------

@dataclass
class GenerationEntry:
    path: str
    kind: str
    n_records: int
    positions: list[int]
    line: int


def parse_generation_spec(text: str) -> list[GenerationEntry]:
    """Parse lines of ``<path> <kind> <n_records> [pos,pos,...]``.

    Blank lines and ``#`` comments are skipped.  Errors name the line.
    """
    entries = []
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (3, 4):
            raise ValueError(f"line {lineno}: expected '<path> <kind> <n_records> [positions]'")
        path, kind, n = parts[:3]
        if kind not in KINDS:
            raise ValueError(f"line {lineno}: unknown kind {kind!r}; expected one of {', '.join(KINDS)}")
        if not path.endswith(".csv") or path.startswith("/") or ".." in Path(path).parts:
            raise ValueError(f"line {lineno}: path must be a relative .csv path")
        if path in seen:
            raise ValueError(f"line {lineno}: duplicate path {path!r}")
        seen.add(path)
        try:
            n_records = int(n)
            positions = [int(p) for p in parts[3].split(",")] if len(parts) == 4 and parts[3] != "-" else []
        except ValueError:
            raise ValueError(f"line {lineno}: n_records and positions must be integers") from None
        entries.append(GenerationEntry(path, kind, n_records, positions, lineno))
    if not entries:
        raise ValueError("generation spec lists no files")
    return entries


def generate_corpus(entries: Sequence[GenerationEntry], out_dir: str | Path, seed: int = 0,
                    window_fraction: float = WINDOW_FRACTION) -> Corpus:
    """Write ``data/``, ``labels/combined_labels.json`` and
    ``labels/combined_windows.json`` under ``out_dir``."""
    out = Path(out_dir)
    streams, labels, windows = {}, {}, {}
    for i, e in enumerate(entries):
        try:
            stream, stamps = generate_synthetic(e.kind, e.n_records, e.positions, seed=seed + i, name=e.path)
        except (ValueError, CorpusError) as exc:
            raise ValueError(f"line {e.line}: {exc}") from None
        streams[e.path] = stream
        labels[e.path] = stamps
        windows[e.path] = make_windows(stream, stamps, window_fraction)
    for name, stream in streams.items():
        write_stream(stream, out / "data" / name)
    write_json({n: [format_timestamp(t) for t in labels[n]] for n in sorted(labels)},
               out / "labels" / "combined_labels.json")
    write_json({n: windows_to_pairs(windows[n]) for n in sorted(windows)},
               out / "labels" / "combined_windows.json")
    return Corpus(root=out / "data", streams=streams, windows=windows, labels=labels)


# -- detect -----------------------------------------------------------------

def result_path(results_dir: str | Path, detector: str, name: str) -> Path:
    slug = detector_slug(detector)
    rel = Path(name)
    return Path(results_dir) / slug / rel.parent / f"{slug}_{rel.name}"


def write_results(path: Path, stream, scores: np.ndarray, windows=None) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    header = RESULT_HEADER + (["label"] if windows is not None else [])
    in_window = np.zeros(len(stream), dtype=int)
    for w in windows or ():
        in_window[w.begin_index:w.end_index + 1] = 1
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for i, (ts, v, s) in enumerate(zip(stream.timestamps, stream.values.tolist(), scores.tolist())):
        row = f"{format_timestamp(ts)},{v!r},{s!r}"
        if windows is not None:
            row += f",{in_window[i]}"
        buf.write(row + "\n")
    path.write_text(buf.getvalue(), encoding="utf-8")


def read_results(path: Path, stream) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:3] != RESULT_HEADER:
            raise CorpusError(f"{path}: header must start with {','.join(RESULT_HEADER)}")
        scores = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                ts = parse_timestamp(row[0])
                score = float(row[2])
            except (ValueError, IndexError):
                raise CorpusError(f"{path}: line {lineno}: malformed row") from None
            k = len(scores)
            if k >= len(stream) or ts != stream.timestamps[k]:
                raise CorpusError(f"{path}: line {lineno}: timestamp does not match the corpus file")
            scores.append(score)
    if len(scores) != len(stream):
        raise CorpusError(f"{path}: expected {len(stream)} rows, got {len(scores)}")
    return np.array(scores)


def _detect_one(job):
    detector, config, seed, allow_oracle, stream, windows = job
    try:
        det = build_detector(detector, config, seed=seed, windows=windows, allow_oracle=allow_oracle)
        return det.run(stream), None
    except (DetectorError, OSError, ValueError) as exc:
        return None, str(exc)


@dataclass
class DetectOutcome:
    scores: dict[str, np.ndarray]
    status: dict[str, str] = field(default_factory=dict)

    @property
    def failed(self) -> list[str]:
        return [n for n, s in self.status.items() if s != "ok"]


def run_detector(corpus: Corpus, detector: str, config: Mapping | None = None, seed: int = 0,
                 allow_oracle: bool = False, workers: int = 1,
                 results_dir: str | Path | None = None, extended: bool = False) -> DetectOutcome:
    """Run one detector over every corpus file, skipping files that fail."""
    build_detector(detector, config, seed=seed, allow_oracle=allow_oracle)  # fail fast on bad names
    names = corpus.names
    jobs = [(detector, dict(config or {}), seed, allow_oracle, corpus.streams[n], corpus.windows[n])
            for n in names]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_detect_one, jobs))
    else:
        outputs = [_detect_one(j) for j in jobs]

    outcome = DetectOutcome(scores={})
    for name, (scores, error) in zip(names, outputs):
        if error is not None:
            log.warning("%s failed on %s: %s", detector, name, error)
            outcome.status[name] = f"failed: {error}"
            continue
        outcome.status[name] = "ok"
        outcome.scores[name] = scores
        if results_dir is not None:
            write_results(result_path(results_dir, detector, name), corpus.streams[name], scores,
                          corpus.windows[name] if extended else None)
    return outcome


def load_detector_results(corpus: Corpus, results_dir: str | Path, detector: str) -> DetectOutcome:
    outcome = DetectOutcome(scores={})
    for name in corpus.names:
        path = result_path(results_dir, detector, name)
        if not path.exists():
            outcome.status[name] = "failed: missing results"
            continue
        outcome.scores[name] = read_results(path, corpus.streams[name])
        outcome.status[name] = "ok"
    return outcome


# -- optimize / score / normalize -------------------------------------------

def optimize_detector(corpus: Corpus, scores: Mapping[str, np.ndarray],
                      profiles: Mapping[str, ApplicationProfile], method: str = "sweep"
                      ) -> dict[str, ThresholdResult]:
    names = sorted(scores)
    return {p: optimize_threshold(corpus, scores, prof, names=names, method=method)
            for p, prof in profiles.items()}


def score_detector(corpus: Corpus, scores: Mapping[str, np.ndarray],
                   profiles: Mapping[str, ApplicationProfile],
                   thresholds: Mapping[str, float]) -> dict[str, ScoreReport]:
    names = sorted(scores)
    return {p: score_at_threshold(corpus, scores, thresholds[p], prof, names)
            for p, prof in profiles.items()}


def report_document(detector: str, reports: Mapping[str, ScoreReport], partial: bool) -> dict:
    # JSON keys are written sorted, so keep the caller's profile order explicitly
    return {"detector": detector, "partial": partial, "profile_order": list(reports),
            "profiles": {p: r.to_dict() for p, r in reports.items()}}


@dataclass
class ScoreboardRow:
    detector: str
    profile: str
    normalized: float
    tp: int
    fp: int
    fn: int
    tn: int
    threshold: float | None
    partial: bool


def normalize_document(doc: Mapping) -> list[ScoreboardRow]:
    """Recompute normalized scores from the raw totals in a score document."""
    rows = []
    for profile in doc.get("profile_order") or list(doc["profiles"]):
        rep = doc["profiles"][profile]
        value = normalize(rep["corpus_raw"], rep["perfect_raw"], rep["null_raw"])
        c = rep["counts"]
        rows.append(ScoreboardRow(doc["detector"], profile, value, c["tp"], c["fp"], c["fn"], c["tn"],
                                  rep.get("threshold"), bool(doc.get("partial"))))
    return rows


def format_scoreboard(rows: Sequence[ScoreboardRow], profiles: Sequence[str]) -> str:
    """Human-readable table, one decimal place; partial rows are starred."""
    detectors = list(dict.fromkeys(r.detector for r in rows))
    by = {(r.detector, r.profile): r for r in rows}
    width = max([len("Detector")] + [len(d) + 2 for d in detectors])
    cols = [max(len(p), 8) for p in profiles]
    lines = ["Detector".ljust(width) + "".join(f"  {p:>{w}}" for p, w in zip(profiles, cols))]
    any_partial = False
    for d in detectors:
        partial = any(by[(d, p)].partial for p in profiles if (d, p) in by)
        any_partial |= partial
        label = d + (" *" if partial else "")
        cells = []
        for p, w in zip(profiles, cols):
            r = by.get((d, p))
            cells.append(f"  {r.normalized:>{w}.1f}" if r else f"  {'-':>{w}}")
        lines.append(label.ljust(width) + "".join(cells))
    if any_partial:
        lines.append("* partial: some files failed and were left out of this row")
    return "\n".join(lines) + "\n"


def write_scoreboard(rows: Sequence[ScoreboardRow], profiles: Sequence[str], out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["detector", "profile", "normalized_score", "tp", "fp", "fn", "tn"])
    for r in rows:
        writer.writerow([r.detector, r.profile, repr(r.normalized), r.tp, r.fp, r.fn, r.tn])
    (out / "scoreboard.csv").write_text(buf.getvalue(), encoding="utf-8")
    (out / "scoreboard.txt").write_text(format_scoreboard(rows, profiles), encoding="utf-8")
    board: dict = {}
    for r in rows:
        entry = board.setdefault(r.detector, {"partial": r.partial, "scores": {}})
        entry["scores"][r.profile] = r.normalized
    write_json(board, out / "scoreboard.json")


def thresholds_document(results: Mapping[str, Mapping[str, ThresholdResult]]) -> dict:
    return {det: {p: {"threshold": t.threshold, "score": t.normalized_at_threshold}
                  for p, t in per.items()}
            for det, per in results.items()}


# -- plotdata ---------------------------------------------------------------

def plot_rows(corpus: Corpus, name: str, scores: np.ndarray, threshold: float,
              profile: ApplicationProfile) -> list[list[str]]:
    """Per-record rows for external plotting.

    ``classification`` is TP/FP/ignored for detections, TN for undetected
    records outside windows, and empty in probation or inside windows.
    """
    stream = corpus.streams[name]
    windows = corpus.windows[name]
    probation = stream.probation_end_index
    detected = np.flatnonzero(np.asarray(scores) >= threshold)
    detected = detected[detected >= probation].tolist()
    classified = {i: (c, s) for i, c, s in classify_detections(detected, windows, probation)}
    in_window = np.zeros(len(stream), dtype=bool)
    for w in windows:
        in_window[w.begin_index:w.end_index + 1] = True

    rows = []
    for i, (ts, v, s) in enumerate(zip(stream.timestamps, stream.values.tolist(), scores.tolist())):
        flag = int(i in classified)
        if i < probation:
            cls, wflag, contrib = "", "", ""
        else:
            wflag = str(int(in_window[i]))
            if i in classified:
                cls, sig = classified[i]
                contrib = repr(weigh(cls, sig, profile)) if cls in (TP, FP) else ""
            else:
                cls = "" if in_window[i] else "TN"
                contrib = ""
        rows.append([format_timestamp(ts), repr(v), repr(s), str(flag), cls, wflag, contrib])
    return rows


def write_plotdata(corpus: Corpus, scores: Mapping[str, np.ndarray], threshold: float,
                   profile: ApplicationProfile, out_dir: str | Path) -> list[Path]:
    written = []
    for name in sorted(scores):
        path = Path(out_dir) / name
        path.parent.mkdir(parents=True, exist_ok=True)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(PLOT_HEADER)
        writer.writerows(plot_rows(corpus, name, scores[name], threshold, profile))
        path.write_text(buf.getvalue(), encoding="utf-8")
        written.append(path)
    return written


# -- full run ---------------------------------------------------------------

@dataclass
class RunResult:
    rows: list[ScoreboardRow]
    thresholds: dict
    manifest: dict
    failed: bool


def run_benchmark(corpus: Corpus, detectors: Sequence[str], profiles: Mapping[str, ApplicationProfile],
                  results_dir: str | Path, configs: Mapping[str, Mapping] | None = None, seed: int = 0,
                  workers: int = 1, allow_oracle: bool = False, from_results: bool = False,
                  fixed_threshold: float | None = None, method: str = "sweep",
                  extended: bool = False) -> RunResult:
    """Detect (or load results), optimize, score and normalize every detector.

    Writes ``thresholds.json``, ``scores/<detector>.json``, the scoreboard
    files and ``manifest.json`` into ``results_dir``.
    """
    configs = configs or {}
    results_dir = Path(results_dir)
    manifest = {
        "tool_version": __version__,
        "corpus_root": str(corpus.root) if corpus.root else None,
        "detectors": {d: {"config": dict(configs.get(d, {})), "seed": seed} for d in detectors},
        "profiles": profiles_to_dict(profiles),
        "seed": seed,
        "threshold": fixed_threshold,
        "files": {},
        "stages": {"start": _now()},
    }
    rows: list[ScoreboardRow] = []
    all_thresholds = {}
    any_failed = False
    for det in detectors:
        if from_results:
            outcome = load_detector_results(corpus, results_dir, det)
        else:
            outcome = run_detector(corpus, det, configs.get(det), seed=seed, allow_oracle=allow_oracle,
                                   workers=workers, results_dir=results_dir, extended=extended)
        manifest["files"][det] = dict(sorted(outcome.status.items()))
        partial = bool(outcome.failed)
        any_failed |= partial
        if not outcome.scores:
            log.error("%s produced no results; skipped", det)
            continue
        if fixed_threshold is not None:
            thresholds = {p: fixed_threshold for p in profiles}
            reports = score_detector(corpus, outcome.scores, profiles, thresholds)
            all_thresholds[det] = {p: {"threshold": fixed_threshold, "score": r.normalized}
                                   for p, r in reports.items()}
        else:
            opt = optimize_detector(corpus, outcome.scores, profiles, method)
            reports = {p: t.report for p, t in opt.items()}
            all_thresholds.update(thresholds_document({det: opt}))
        doc = report_document(det, reports, partial)
        write_json(doc, results_dir / "scores" / f"{detector_slug(det)}.json")
        rows.extend(normalize_document(doc))
    manifest["stages"]["end"] = _now()
    write_json(all_thresholds, results_dir / "thresholds.json")
    write_scoreboard(rows, list(profiles), results_dir)
    write_json(manifest, results_dir / "manifest.json")
    return RunResult(rows, all_thresholds, manifest, any_failed)


def load_profiles(path: str | Path | None) -> dict[str, ApplicationProfile]:
    if path is None:
        return dict(DEFAULT_PROFILES)
    return profiles_from_dict(read_json(path))
