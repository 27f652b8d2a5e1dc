from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nudgekit.coredata import (
    EventLog,
    Stats,
    TraceError,
    aggregate_records,
    app_sessions,
    derive_steps,
    ingest_events,
    read_event_file,
    write_event_file,
)
from nudgekit.timeutil import analysis_day, anchor_of, format_ts, parse_ts

T0 = parse_ts("2024-03-04T10:00:00Z")


def _line(t: int, kind: str, **payload) -> str:
    return json.dumps({"t": format_ts(t), "kind": kind, **payload})


def test_out_of_order_lines_are_sorted():
    lines = [_line(T0 + s, "location", lat=1.0, lon=2.0) for s in (5, 1, 3)]
    log = ingest_events(lines)
    assert [e.t for e in log.events] == [T0 + 1, T0 + 3, T0 + 5]


def test_empty_input_gives_empty_log():
    log = ingest_events([])
    assert log.events == [] and log.span is None and log.warnings == []


def test_malformed_lines_are_counted_not_fatal():
    lines = [_line(T0 + i, "light", lux=float(i)) for i in range(98)]
    lines.insert(10, "{not json")
    lines.insert(50, _line(T0, "screen", state="dim"))
    log = ingest_events(lines, max_malformed_fraction=0.05)
    assert len(log.events) == 98
    assert log.malformed == 2 and len(log.warnings) == 2


def test_too_many_malformed_lines_raise():
    lines = [_line(T0 + i, "light", lux=1.0) for i in range(10)] + ["garbage"] * 2
    with pytest.raises(TraceError):
        ingest_events(lines)


def test_large_time_regression_raises():
    lines = [_line(T0 + 7200, "light", lux=1.0), _line(T0, "light", lux=1.0)]
    with pytest.raises(TraceError):
        ingest_events(lines)


def test_event_file_roundtrip(tmp_path):
    lines = [_line(T0 + i * 60, "noise", level=30.0 + i) for i in range(5)]
    log = ingest_events(lines, "s1")
    path = tmp_path / "s1.jsonl.gz"
    write_event_file(log, path)
    again = read_event_file(path)
    assert again.subject_id == "s1"
    assert again.events == log.events


def test_movement_stats_population_std():
    lines = [_line(T0 + 10 * i, "movement", magnitude=m) for i, m in enumerate((1.0, 2.0, 3.0))]
    rec = aggregate_records(ingest_events(lines), span=(T0, T0 + 299))[0]
    s = rec.movement_stats
    assert (s.min, s.avg, s.max) == (1.0, 2.0, 3.0)
    assert s.std == pytest.approx(math.sqrt(2 / 3), abs=1e-4)


def test_app_time_is_split_across_slots():
    lines = [
        _line(T0 + 180, "app", app_id="chat", app_type="communication", event="start"),
        _line(T0 + 720, "app", app_id="chat", app_type="communication", event="stop"),
    ]
    recs = aggregate_records(ingest_events(lines), span=(T0, T0 + 899))
    secs = [r.app_seconds_by_type.get("communication", 0.0) for r in recs]
    assert secs == [120.0, 300.0, 120.0]


def test_slot_without_light_has_no_light_stats():
    lines = [_line(T0, "noise", level=40.0)]
    rec = aggregate_records(ingest_events(lines), span=(T0, T0 + 299))[0]
    assert rec.light_stats is None
    assert rec.noise_stats == Stats(40.0, 40.0, 40.0, 0.0)


def test_app_sessions_close_on_switch():
    lines = [
        _line(T0, "app", app_id="a", app_type="video", event="start"),
        _line(T0 + 60, "app", app_id="b", app_type="music", event="start"),
        _line(T0 + 90, "app", app_id="b", app_type="music", event="stop"),
    ]
    sessions = app_sessions(ingest_events(lines))
    assert [(s.app_id, s.start - T0, s.stop - T0) for s in sessions] == [("a", 0, 60), ("b", 60, 90)]


def test_flat_signal_has_no_steps():
    assert derive_steps([9.81] * 500) == 0


def test_sinusoid_step_count():
    fs = 50.0
    t = np.arange(0, 60, 1 / fs)
    mags = 9.81 + 3.0 * np.sin(2 * np.pi * 2.0 * t)
    assert abs(derive_steps(mags, t) - 120) <= 2


def test_single_spike_is_one_step():
    sig = [9.81] * 100
    sig[40] = 20.0
    assert derive_steps(sig) == 1


def test_refractory_suppresses_close_peaks():
    sig = [0.0] * 10
    sig[2] = sig[4] = 10.0
    times = [0.05 * i for i in range(10)]
    assert derive_steps(sig, times) == 1
    assert derive_steps(sig) == 2


def test_analysis_day_boundary():
    t = parse_ts("2024-03-04T17:55:00Z")
    # 17:55 closes the day that started at 18:00 yesterday
    assert analysis_day(t).isoformat() == "2024-03-04"
    assert analysis_day(t + 300).isoformat() == "2024-03-05"
    assert anchor_of(analysis_day(t + 300)) == t + 300


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=40))
def test_stats_bounds(values):
    s = Stats.of(values)
    assert s.min <= s.avg + 1e-9 and s.avg <= s.max + 1e-9 and s.std >= 0


def test_empty_eventlog_span():
    assert EventLog("x", []).span is None
