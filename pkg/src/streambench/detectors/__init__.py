"""Detector registry.

Names understood by :func:`build_detector`::

    null, random, oracle, windowed_gaussian, skyline,
    anomaly_likelihood(<inner name>), external:<command line>
"""

from __future__ import annotations

import re
from typing import Mapping, Sequence

from ..corpus import AnomalyWindow
from .base import AnomalyDetector, DetectorError
from .control import NullDetector, OracleDetector, RandomDetector
from .external import ExternalDetector
from .gaussian import WindowedGaussianDetector
from .likelihood import AnomalyLikelihood
from .skyline import EXPERTS, SkylineEnsemble

__all__ = [
    "AnomalyDetector", "DetectorError", "NullDetector", "RandomDetector", "OracleDetector",
    "WindowedGaussianDetector", "AnomalyLikelihood", "SkylineEnsemble", "ExternalDetector",
    "EXPERTS", "BUILTIN", "build_detector", "detector_slug", "needs_oracle",
]

BUILTIN = ("null", "random", "oracle", "windowed_gaussian", "skyline")

_LIKELIHOOD = re.compile(r"^anomaly_likelihood\((.+)\)$")


def needs_oracle(name: str) -> bool:
    m = _LIKELIHOOD.match(name)
    return name == "oracle" or bool(m and needs_oracle(m.group(1)))


def build_detector(name: str, config: Mapping | None = None, seed: int = 0,
                   windows: Sequence[AnomalyWindow] = (), allow_oracle: bool = False) -> AnomalyDetector:
    """Instantiate a fresh detector for one stream.

    ``config`` holds keyword overrides for the detector's constructor.  For
    ``anomaly_likelihood(...)`` an ``"inner"`` key carries the inner config.
    """
    config = dict(config or {})
    if name == "null":
        return NullDetector()
    if name == "random":
        return RandomDetector(seed=int(config.pop("seed", seed)))
    if name == "oracle":
        if not allow_oracle:
            raise DetectorError("the oracle detector reads ground truth; pass --allow-oracle to use it")
        return OracleDetector(windows)
    if name == "windowed_gaussian":
        return WindowedGaussianDetector(**config)
    if name == "skyline":
        return SkylineEnsemble(**config)
    m = _LIKELIHOOD.match(name)
    if m:
        inner = build_detector(m.group(1), config.pop("inner", None), seed, windows, allow_oracle)
        return AnomalyLikelihood(inner, **config)
    if name.startswith("external:"):
        command = name[len("external:"):].strip()
        if not command:
            raise DetectorError("external detector needs a command")
        return ExternalDetector(command, **config)
    raise DetectorError(f"unknown detector {name!r}")


def detector_slug(name: str) -> str:
    """Filesystem-safe directory name for a detector."""
    slug = re.sub(r"[^A-Za-z0-9]+", "_", name).strip("_")
    return slug or "detector"
