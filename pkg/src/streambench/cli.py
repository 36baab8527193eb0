"""Command line interface.

Exit codes: 0 success, 1 usage error, 2 corpus validation failure,
3 partial detector failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .corpus import CorpusError, discover_files, load_corpus, parse_stream, read_json, write_json
from .detectors import DetectorError, detector_slug
from .labeling import DEFAULT_AGREEMENT, DEFAULT_TOLERANCE_FRACTION, combine_raw_labels
from .runner import (generate_corpus, load_detector_results, load_profiles, normalize_document,
                     optimize_detector, parse_generation_spec, report_document, run_benchmark,
                     run_detector, score_detector, thresholds_document, write_plotdata, write_scoreboard)
from .scoring import ScoringError

EXIT_OK, EXIT_USAGE, EXIT_CORPUS, EXIT_PARTIAL = 0, 1, 2, 3

log = logging.getLogger("streambench")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_corpus_args(p):
    p.add_argument("--data-dir", required=True, help="root directory of corpus CSV files")
    p.add_argument("--windows", help="combined windows JSON")
    p.add_argument("--labels", help="combined labels JSON (windows are derived when --windows is absent)")
    p.add_argument("--window-fraction", type=float, default=0.10,
                   help="total window length as a fraction of each file (default 0.10)")
    p.add_argument("--probation-cap", type=int, default=None, help="upper bound on probation length")


def _add_detector_args(p, repeat=True):
    p.add_argument("--detector", action="append" if repeat else "store", required=True,
                   help="detector name (repeatable)" if repeat else "detector name")
    p.add_argument("--results-dir", required=True)


def _add_profiles(p):
    p.add_argument("--profiles", help="profiles JSON: name -> {tp, fp, fn, tn}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="streambench", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a synthetic corpus")
    p.add_argument("spec", help="text file: '<path> <kind> <n_records> [pos,pos,...]' per line")
    p.add_argument("--out", required=True, help="output root (data/ and labels/ are created)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--window-fraction", type=float, default=0.10)

    p = sub.add_parser("combine", help="combine multi-labeler labels into ground truth")
    p.add_argument("raw", help="JSON: labeler -> path -> timestamps")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out", required=True, help="combined labels JSON to write")
    p.add_argument("--agreement", type=float, default=DEFAULT_AGREEMENT)
    p.add_argument("--tolerance-fraction", type=float, default=DEFAULT_TOLERANCE_FRACTION)

    p = sub.add_parser("detect", help="run detectors and write per-file raw scores")
    _add_corpus_args(p)
    _add_detector_args(p)
    p.add_argument("--config", help="JSON: detector name -> parameter overrides")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--allow-oracle", action="store_true")
    p.add_argument("--extended", action="store_true", help="add a window-membership 'label' column")

    p = sub.add_parser("optimize", help="choose a corpus-wide threshold per detector and profile")
    _add_corpus_args(p)
    _add_detector_args(p)
    _add_profiles(p)
    p.add_argument("--method", choices=("sweep", "hill_climb"), default="sweep")

    p = sub.add_parser("score", help="score raw results at the stored or given threshold")
    _add_corpus_args(p)
    _add_detector_args(p)
    _add_profiles(p)
    p.add_argument("--threshold", type=float, help="bypass the optimizer")

    p = sub.add_parser("normalize", help="turn score reports into the scoreboard")
    p.add_argument("--results-dir", required=True)

    p = sub.add_parser("run", help="detect, optimize, score and normalize in one go")
    _add_corpus_args(p)
    _add_detector_args(p)
    _add_profiles(p)
    p.add_argument("--config", help="JSON: detector name -> parameter overrides")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--allow-oracle", action="store_true")
    p.add_argument("--threshold", type=float, help="bypass the optimizer")
    p.add_argument("--from-results", action="store_true", help="reuse raw scores written by 'detect'")
    p.add_argument("--method", choices=("sweep", "hill_climb"), default="sweep")
    p.add_argument("--extended", action="store_true")

    p = sub.add_parser("plotdata", help="per-record CSVs for external plotting")
    _add_corpus_args(p)
    _add_detector_args(p, repeat=False)
    _add_profiles(p)
    p.add_argument("--profile", default="standard")
    p.add_argument("--threshold", type=float, help="default: value stored by 'optimize'")
    p.add_argument("--out", required=True)
    return parser


def _corpus(args):
    if args.windows is None and args.labels is None:
        raise UsageError("one of --windows or --labels is required")
    return load_corpus(args.data_dir, windows_path=args.windows, labels_path=args.labels,
                       probation_cap=args.probation_cap, window_fraction=args.window_fraction)


def _configs(args) -> dict:
    if not getattr(args, "config", None):
        return {}
    data = read_json(args.config)
    return {k: v for k, v in data.items() if isinstance(v, dict)}


def _profiles(args):
    profiles = load_profiles(args.profiles)
    if not profiles:
        raise UsageError("no profiles defined")
    return profiles


def _update_json(path: Path, update: dict) -> None:
    data = read_json(path) if path.exists() else {}
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(data.get(key), dict):
            data[key].update(value)
        else:
            data[key] = value
    write_json(data, path)


def cmd_generate(args) -> int:
    entries = parse_generation_spec(Path(args.spec).read_text(encoding="utf-8"))
    corpus = generate_corpus(entries, args.out, seed=args.seed, window_fraction=args.window_fraction)
    print(f"wrote {len(corpus)} files to {Path(args.out) / 'data'}")
    return EXIT_OK


def cmd_combine(args) -> int:
    root = Path(args.data_dir)
    streams = {n: parse_stream(root / n, name=n) for n in discover_files(root)}
    combined = combine_raw_labels(streams, read_json(args.raw), args.agreement, args.tolerance_fraction)
    write_json(combined, args.out)
    print(f"wrote {sum(map(len, combined.values()))} labels for {len(combined)} files to {args.out}")
    return EXIT_OK


def cmd_detect(args) -> int:
    corpus = _corpus(args)
    configs = _configs(args)
    results_dir = Path(args.results_dir)
    status = 0
    files = {}
    for det in args.detector:
        outcome = run_detector(corpus, det, configs.get(det), seed=args.seed, allow_oracle=args.allow_oracle,
                               workers=args.workers, results_dir=results_dir, extended=args.extended)
        files[det] = dict(sorted(outcome.status.items()))
        if outcome.failed:
            status = EXIT_PARTIAL
        print(f"{det}: {len(outcome.scores)}/{len(corpus)} files ok")
    _update_json(results_dir / "manifest.json", {
        "tool_version": __version__,
        "corpus_root": str(corpus.root),
        "detectors": {d: {"config": configs.get(d, {}), "seed": args.seed} for d in args.detector},
        "files": files,
    })
    return status


def _load_results(corpus, args, det):
    outcome = load_detector_results(corpus, args.results_dir, det)
    if not outcome.scores:
        raise UsageError(f"no results for {det!r} under {args.results_dir}")
    return outcome


def cmd_optimize(args) -> int:
    corpus = _corpus(args)
    profiles = _profiles(args)
    found = {}
    partial = False
    for det in args.detector:
        outcome = _load_results(corpus, args, det)
        partial |= bool(outcome.failed)
        found[det] = optimize_detector(corpus, outcome.scores, profiles, args.method)
        for p, t in found[det].items():
            print(f"{det} {p}: threshold={t.threshold!r} normalized={t.normalized_at_threshold:.3f}")
    _update_json(Path(args.results_dir) / "thresholds.json", thresholds_document(found))
    return EXIT_PARTIAL if partial else EXIT_OK


def cmd_score(args) -> int:
    corpus = _corpus(args)
    profiles = _profiles(args)
    stored_path = Path(args.results_dir) / "thresholds.json"
    stored = read_json(stored_path) if stored_path.exists() else {}
    partial = False
    for det in args.detector:
        outcome = _load_results(corpus, args, det)
        partial |= bool(outcome.failed)
        if args.threshold is not None:
            thresholds = {p: args.threshold for p in profiles}
        else:
            try:
                thresholds = {p: float(stored[det][p]["threshold"]) for p in profiles}
            except KeyError:
                raise UsageError(f"no stored threshold for {det!r}; run 'optimize' or pass --threshold") from None
        reports = score_detector(corpus, outcome.scores, profiles, thresholds)
        write_json(report_document(det, reports, bool(outcome.failed)),
                   Path(args.results_dir) / "scores" / f"{detector_slug(det)}.json")
        for p, r in reports.items():
            print(f"{det} {p}: raw={r.corpus_raw:.6f} normalized={r.normalized:.3f}")
    return EXIT_PARTIAL if partial else EXIT_OK


def cmd_normalize(args) -> int:
    score_dir = Path(args.results_dir) / "scores"
    docs = [read_json(p) for p in sorted(score_dir.glob("*.json"))]
    if not docs:
        raise UsageError(f"no score reports in {score_dir}")
    rows = [row for doc in docs for row in normalize_document(doc)]
    profiles = list(dict.fromkeys(r.profile for r in rows))
    write_scoreboard(rows, profiles, args.results_dir)
    print((Path(args.results_dir) / "scoreboard.txt").read_text(encoding="utf-8"), end="")
    return EXIT_PARTIAL if any(r.partial for r in rows) else EXIT_OK


def cmd_run(args) -> int:
    corpus = _corpus(args)
    result = run_benchmark(corpus, args.detector, _profiles(args), args.results_dir,
                           configs=_configs(args), seed=args.seed, workers=args.workers,
                           allow_oracle=args.allow_oracle, from_results=args.from_results,
                           fixed_threshold=args.threshold, method=args.method, extended=args.extended)
    print((Path(args.results_dir) / "scoreboard.txt").read_text(encoding="utf-8"), end="")
    return EXIT_PARTIAL if result.failed else EXIT_OK


def cmd_plotdata(args) -> int:
    corpus = _corpus(args)
    profiles = _profiles(args)
    if args.profile not in profiles:
        raise UsageError(f"unknown profile {args.profile!r}")
    det = args.detector
    outcome = _load_results(corpus, args, det)
    threshold = args.threshold
    if threshold is None:
        stored_path = Path(args.results_dir) / "thresholds.json"
        try:
            threshold = float(read_json(stored_path)[det][args.profile]["threshold"])
        except (OSError, KeyError):
            raise UsageError(f"no stored threshold for {det!r}/{args.profile}; pass --threshold") from None
    written = write_plotdata(corpus, outcome.scores, threshold, profiles[args.profile], args.out)
    print(f"wrote {len(written)} plot files to {args.out}")
    return EXIT_PARTIAL if outcome.failed else EXIT_OK


COMMANDS = {
    "generate": cmd_generate, "combine": cmd_combine, "detect": cmd_detect, "optimize": cmd_optimize,
    "score": cmd_score, "normalize": cmd_normalize, "run": cmd_run, "plotdata": cmd_plotdata,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except CorpusError as exc:
        print(f"corpus error: {exc}", file=sys.stderr)
        return EXIT_CORPUS
    except (UsageError, DetectorError, ScoringError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
