from datetime import datetime, timedelta

import numpy as np
import pytest

from streambench.corpus import DataStream, corpus_from_streams

T0 = datetime(2015, 1, 1)
STEP = timedelta(minutes=5)


def make_stream(n, name="s.csv", values=None, probation=None):
    values = np.zeros(n) if values is None else np.asarray(values, dtype=float)
    stamps = [T0 + i * STEP for i in range(n)]
    kwargs = {} if probation is None else {"probation_end_index": probation}
    return DataStream(name=name, timestamps=stamps, values=values, **kwargs)


def make_corpus(spec, window_fraction=0.10):
    """``spec``: name -> (n_records, [label indices])."""
    streams, labels = {}, {}
    for name, (n, idx) in spec.items():
        s = make_stream(n, name)
        streams[name] = s
        labels[name] = [s.timestamps[i] for i in idx]
    return corpus_from_streams(streams, labels, window_fraction)


@pytest.fixture
def stream_factory():
    return make_stream


@pytest.fixture
def corpus_factory():
    return make_corpus


_criteria = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    if "test_acceptance.py" in report.nodeid:
        _criteria[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, outcome in _criteria.items():
        name = nodeid.split("::", 1)[1]
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}")
