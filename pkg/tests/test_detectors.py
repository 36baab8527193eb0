import json
import math
import sys

import numpy as np
import pytest

from conftest import make_stream
from streambench.corpus import make_windows
from streambench.detectors import (AnomalyDetector, AnomalyLikelihood, DetectorError, ExternalDetector,
                                   NullDetector, OracleDetector, RandomDetector, SkylineEnsemble,
                                   WindowedGaussianDetector, build_detector, detector_slug, needs_oracle)
from streambench.detectors.skyline import histogram_expert, least_squares_expert, moving_average_expert


class SequenceDetector(AnomalyDetector):
    name = "sequence"

    def __init__(self, values):
        self.values = list(values)
        self._i = 0

    def initialize(self, *args, **kwargs):
        self._i = 0

    def step(self, record):
        v = self.values[self._i]
        self._i += 1
        return v


def test_null_detector():
    s = make_stream(1000)
    out = NullDetector().run(s)
    assert out.shape == (1000,) and np.all(out == 0.5)


def test_random_detector_determinism_and_calibration():
    s = make_stream(10_000)
    a = RandomDetector(42).run(s)
    assert np.array_equal(a, RandomDetector(42).run(s))
    assert 0.48 <= a.mean() <= 0.52
    assert a.min() >= 0.0 and a.max() < 1.0
    b = RandomDetector(43).run(s)
    assert np.mean(a != b) >= 0.99


def test_random_detector_is_portable():
    # first draws of Python's MT19937 for seed 42
    s = make_stream(3)
    assert RandomDetector(42).run(s).tolist() == [0.6394267984578837, 0.025010755222666936,
                                                   0.27502931836911926]


def test_oracle_detector():
    s = make_stream(2000)
    windows = make_windows(s, [s.timestamps[600], s.timestamps[1500]])
    out = OracleDetector(windows).run(s)
    assert out.sum() == 2
    assert out[windows[0].begin_index] == 1.0 and out[windows[1].begin_index] == 1.0
    assert OracleDetector([]).run(s).sum() == 0


def test_windowed_gaussian_constant_stream():
    out = WindowedGaussianDetector().run(make_stream(300, values=np.full(300, 4.2)))
    assert out[0] == 0.0 and np.all(out[1:] == 0.0)


def test_windowed_gaussian_zero_variance_jump():
    out = WindowedGaussianDetector().run(make_stream(4, values=[1.0, 1.0, 1.0, 2.0]))
    assert out.tolist() == [0.0, 0.0, 0.0, 1.0]


def test_windowed_gaussian_spike():
    rng = np.random.default_rng(0)
    values = rng.normal(10.0, 2.0, 501)
    last = values[250:500]
    values[500] = last.mean() + 8 * last.std()
    out = WindowedGaussianDetector(window=250).run(make_stream(501, values=values))
    assert out[500] > 0.999
    # erf(8 / sqrt(2)), the two-sided complement at exactly 8 sigma
    assert out[500] == pytest.approx(0.9999999999999988, abs=1e-12)


def test_likelihood_degenerate_is_half():
    s = make_stream(200)
    assert np.all(AnomalyLikelihood(SequenceDetector([0.3] * 200)).run(s) == 0.5)
    assert np.all(AnomalyLikelihood(NullDetector()).run(s) == 0.5)


def test_likelihood_responds_to_sustained_shift():
    rng = np.random.default_rng(1)
    inner = np.r_[0.1 + 0.02 * rng.random(600), np.full(50, 0.9)]
    out = AnomalyLikelihood(SequenceDetector(inner), 500, 10).run(make_stream(650))
    assert out[600 + 9] > 0.99
    assert np.all(out[600:610] >= out[599])
    assert np.mean(out[100:600]) < 0.9


@pytest.mark.parametrize("scale, shift", [(0.5, 0.0), (0.25, 0.5), (0.9, 0.05)])
def test_likelihood_affine_invariance(scale, shift):
    rng = np.random.default_rng(2)
    inner = rng.random(400)
    s = make_stream(400)
    base = AnomalyLikelihood(SequenceDetector(inner), 100, 5).run(s)
    moved = AnomalyLikelihood(SequenceDetector(scale * inner + shift), 100, 5).run(s)
    np.testing.assert_allclose(moved, base, atol=1e-9)


def test_skyline_experts_on_constructed_window():
    hist = np.array([1.0, -1.0] * 50)
    assert moving_average_expert(hist, 10.0)
    assert least_squares_expert(hist, 10.0)
    assert histogram_expert(hist, 10.0)
    assert not moving_average_expert(hist, 1.0)
    assert not least_squares_expert(hist, 1.0)
    assert not histogram_expert(hist, 1.0)
    # in range but in an empty bin
    assert histogram_expert(hist, 0.0)


def test_skyline_constant_and_spike():
    assert np.all(SkylineEnsemble().run(make_stream(300, values=np.full(300, 7.0))) == 0.0)
    rng = np.random.default_rng(4)
    values = 5.0 + rng.normal(0, 0.1, 400)
    values[300] = 5.0 + 10 * 0.1 * 10
    out = SkylineEnsemble().run(make_stream(400, values=values))
    assert out[300] == 1.0
    assert set(np.unique(out)) <= {0.0, 1 / 3, 2 / 3, 1.0}


def test_skyline_linear_ramp():
    rng = np.random.default_rng(6)
    values = 0.01 * np.arange(3000) + rng.normal(0, 1.0, 3000)
    out = SkylineEnsemble().run(make_stream(3000, values=values))
    assert out.mean() < 0.1


def test_skyline_warmup_and_registry():
    out = SkylineEnsemble().run(make_stream(5, values=[1.0, 2.0, 30.0, 4.0, 5.0]))
    assert out[:2].tolist() == [0.0, 0.0]
    with pytest.raises(ValueError):
        SkylineEnsemble(experts=["crystal_ball"])
    only_mean = SkylineEnsemble(experts=["moving_average"])
    assert set(np.unique(only_mean.run(make_stream(50, values=np.arange(50.0))))) <= {0.0, 1.0}


@pytest.mark.parametrize("name", ["null", "random", "windowed_gaussian", "skyline",
                                  "anomaly_likelihood(skyline)", "anomaly_likelihood(windowed_gaussian)"])
def test_state_is_serializable(name):
    det = build_detector(name)
    rng = np.random.default_rng(0)
    s = make_stream(50, values=rng.normal(size=50))
    det.initialize(len(s), s.probation_end_index)
    for r in s.records:
        det.step(r)
    json.dumps(det.state())


@pytest.mark.parametrize("name", ["null", "random", "oracle", "windowed_gaussian", "skyline",
                                  "anomaly_likelihood(windowed_gaussian)", "anomaly_likelihood(skyline)"])
def test_prefix_runs_match(name):
    rng = np.random.default_rng(8)
    values = np.cumsum(rng.normal(size=800))
    full_stream = make_stream(800, values=values)
    windows = make_windows(full_stream, [full_stream.timestamps[500]])
    full = build_detector(name, windows=windows, allow_oracle=True, seed=3).run(full_stream)
    prefix = make_stream(333, values=values[:333])
    part = build_detector(name, windows=windows, allow_oracle=True, seed=3).run(prefix)
    assert np.array_equal(part, full[:333])


def test_registry():
    assert isinstance(build_detector("anomaly_likelihood(null)"), AnomalyLikelihood)
    det = build_detector("anomaly_likelihood(windowed_gaussian)",
                         {"long_window": 50, "short_window": 5, "inner": {"window": 20}})
    assert det.long_window == 50 and det.inner.window == 20
    with pytest.raises(DetectorError, match="allow-oracle"):
        build_detector("oracle")
    with pytest.raises(DetectorError, match="allow-oracle"):
        build_detector("anomaly_likelihood(oracle)")
    assert needs_oracle("anomaly_likelihood(oracle)") and not needs_oracle("skyline")
    with pytest.raises(DetectorError):
        build_detector("htm")
    assert detector_slug("anomaly_likelihood(windowed_gaussian)") == "anomaly_likelihood_windowed_gaussian"
    assert isinstance(build_detector("external:cat"), ExternalDetector)


def _script(tmp_path, name, body):
    path = tmp_path / name
    path.write_text("import sys\n" + body)
    return f"{sys.executable} {path}"


def test_external_echo_behaves_like_null(tmp_path):
    cmd = _script(tmp_path, "echo.py", "for line in sys.stdin:\n    print('0.5', flush=True)\n")
    s = make_stream(100, values=np.arange(100.0))
    assert np.array_equal(ExternalDetector(cmd).run(s), NullDetector().run(s))


def test_external_sees_records(tmp_path):
    cmd = _script(tmp_path, "val.py",
                  "for line in sys.stdin:\n    ts, v = line.strip().split(',')\n"
                  "    print(min(1.0, float(v) / 10), flush=True)\n")
    out = ExternalDetector(cmd).run(make_stream(5, values=[0.0, 1.0, 2.5, 30.0, 4.0]))
    assert out.tolist() == [0.0, 0.1, 0.25, 1.0, 0.4]


def test_external_out_of_range(tmp_path):
    cmd = _script(tmp_path, "big.py", "for line in sys.stdin:\n    print('1.5', flush=True)\n")
    with pytest.raises(DetectorError, match="score out of range"):
        ExternalDetector(cmd).run(make_stream(10))


def test_external_crash(tmp_path):
    cmd = _script(tmp_path, "crash.py",
                  "for i, line in enumerate(sys.stdin):\n    if i == 3:\n        sys.exit(1)\n"
                  "    print('0.1', flush=True)\n")
    with pytest.raises(DetectorError, match="child exited"):
        ExternalDetector(cmd).run(make_stream(10))


def test_external_malformed_and_timeout(tmp_path):
    bad = _script(tmp_path, "bad.py", "for line in sys.stdin:\n    print('hello', flush=True)\n")
    with pytest.raises(DetectorError, match="malformed"):
        ExternalDetector(bad).run(make_stream(10))
    slow = _script(tmp_path, "slow.py", "import time\nfor line in sys.stdin:\n    time.sleep(5)\n")
    with pytest.raises(DetectorError, match="timed out"):
        ExternalDetector(slow, timeout=0.3).run(make_stream(10))


def test_run_rejects_out_of_range_builtin():
    with pytest.raises(DetectorError, match="out of range"):
        SequenceDetector([0.2, math.nan]).run(make_stream(2))
