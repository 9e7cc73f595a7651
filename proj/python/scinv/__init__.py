"""Switched-capacitor five-level inverter simulator."""

import json

from . import _core
from ._core import (
    AnalysisError,
    ScenarioError,
    __version__,
    canonical_json,
    metric_names,
    preset_names,
    preset_source,
    scenario_digest,
    size_caps,
    thd,
    verify,
)


def run(scenario, dt_sim=None):
    """Run a preset name or scenario file.

    Returns ``(report, waveforms)`` where ``report`` is a dict and
    ``waveforms`` maps channel names to numpy arrays.
    """
    text, waves = _core.run(scenario, dt_sim)
    return json.loads(text), waves


__all__ = [
    "AnalysisError",
    "ScenarioError",
    "__version__",
    "canonical_json",
    "metric_names",
    "preset_names",
    "preset_source",
    "run",
    "scenario_digest",
    "size_caps",
    "thd",
    "verify",
]
