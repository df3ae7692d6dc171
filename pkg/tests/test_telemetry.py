"""
Tests for progress events and the collector.
"""

import json
import logging

import pytest

from slice_core.algorithms.mc_engine import OutageEstimate, max_rate_bisect
from slice_core.telemetry.collector import ProgressCollector
from slice_core.telemetry.events import EventType, ProgressEvent


def step_probe(threshold: float):
    def probe(value: float, n_trials: int) -> OutageEstimate:
        p = 0.0 if value <= threshold else 1.0
        return OutageEstimate(failures=int(p * n_trials), trials=n_trials, p_hat=p, ci_low=p, ci_high=p)
    return probe


def test_event_defaults():
    event = ProgressEvent(run_id="run-1", type=EventType.STAGE, label="region-urllc")
    assert event.success is True
    assert event.event_id
    assert event.timestamp.tzinfo is not None


def test_emit_logs_json(caplog):
    progress = ProgressCollector(verbose=False, keep_history=True)
    with caplog.at_level(logging.INFO, logger="slice_core.progress"):
        progress.emit(EventType.SWEEP_POINT, "noma", properties={"x": 0.0, "y": 1.5})
    payload = json.loads(caplog.records[-1].getMessage())
    assert payload["type"] == "sweep_point"
    assert payload["label"] == "noma"
    assert payload["properties"]["y"] == 1.5
    assert payload["run_id"] == progress.run_id
    assert progress.events_emitted == 1


def test_probe_events_need_verbose():
    quiet = ProgressCollector(verbose=False, keep_history=True)
    assert quiet.emit(EventType.PROBE, "search", probe=1.0) is None
    assert quiet.history == []

    loud = ProgressCollector(verbose=True, keep_history=True)
    max_rate_bisect(step_probe(2.0), 0.1, 0.5, 100, on_probe=loud.probe_hook("search"))
    probes = [event for event in loud.history if event.type == EventType.PROBE]
    assert [event.probe for event in probes[:2]] == [0.0, 15.0]
    assert probes[0].accepted is True
    assert probes[1].accepted is False
    assert probes[0].trials == 100


def test_track_stage_success():
    progress = ProgressCollector(verbose=True, keep_history=True)

    @progress.track_stage("unit")
    def work(x):
        return 2 * x

    assert work(21) == 42
    event = progress.history[-1]
    assert event.type == EventType.STAGE
    assert event.label == "unit"
    assert event.success is True
    assert event.duration_ms >= 0.0


def test_track_stage_failure():
    progress = ProgressCollector(verbose=False, keep_history=True)

    @progress.track_stage("unit")
    def broken():
        raise ValueError("boom")

    with pytest.raises(ValueError):
        broken()
    event = progress.history[-1]
    assert event.success is False
    assert event.error_category == "ValueError"
