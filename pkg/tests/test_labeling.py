import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_stream
from streambench.corpus import CorpusError
from streambench.labeling import combine_labels, combine_raw_labels


@pytest.fixture
def stream():
    return make_stream(1000)


def at(stream, *idx):
    return [stream.timestamps[i] for i in idx]


def test_single_labeler_is_identity(stream):
    labels = at(stream, 200, 205, 600)
    assert combine_labels(stream, [labels], agreement_fraction=1.0) == labels


def test_three_labelers_agree_on_median(stream):
    labelers = [at(stream, 100), at(stream, 101), at(stream, 102)]
    assert combine_labels(stream, labelers, 0.5, tolerance_records=5) == at(stream, 101)


def test_lone_mark_below_agreement_is_dropped(stream):
    labelers = [at(stream, 100, 500), at(stream, 101), at(stream, 99)]
    assert combine_labels(stream, labelers, 0.5, tolerance_records=5) == at(stream, 100)


def test_marks_beyond_tolerance_form_separate_clusters(stream):
    labelers = [at(stream, 300), at(stream, 320)]
    assert combine_labels(stream, labelers, 0.5, tolerance_records=5) == at(stream, 300, 320)
    assert combine_labels(stream, labelers, 1.0, tolerance_records=5) == []
    assert combine_labels(stream, labelers, 1.0, tolerance_records=25) == at(stream, 300)


def test_errors(stream):
    with pytest.raises(ValueError):
        combine_labels(stream, [])
    with pytest.raises(ValueError):
        combine_labels(stream, [at(stream, 200)], agreement_fraction=0.0)
    with pytest.raises(CorpusError):
        combine_labels(stream, [at(stream, 300, 200)])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 999), unique=True, max_size=30), st.integers(0, 100))
def test_identity_property(idx, tol):
    s = make_stream(1000)
    labels = [s.timestamps[i] for i in sorted(idx)]
    assert combine_labels(s, [labels], 1.0, tol) == labels


def test_combine_raw_labels():
    s = make_stream(1000, name="a.csv")
    raw = {
        "ann": {"a.csv": ["2015-01-01 10:00:00"]},
        "bob": {"a.csv": ["2015-01-01 10:05:00"]},
        "cat": {},
    }
    assert combine_raw_labels({"a.csv": s}, raw) == {"a.csv": ["2015-01-01 10:00:00"]}
    with pytest.raises(CorpusError, match="unknown"):
        combine_raw_labels({"a.csv": s}, {"ann": {"b.csv": []}})
