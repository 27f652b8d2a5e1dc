from __future__ import annotations

import math
from datetime import date

import numpy as np
import pytest

from nudgekit.coredata import AppSession, FeatureRecord
from nudgekit.correlate import (
    CorrelateConfig,
    DailyParams,
    best_profile,
    correlation_table,
    extract_daily_params,
    pearson_matrix,
)
from nudgekit.sleep import SleepEpisode
from nudgekit.timeutil import anchor_of, day_start

H = 3600
D0, D1 = date(2024, 3, 4), date(2024, 3, 5)


def _episode(day: date, bed_clock_h: float, wake_clock_h: float) -> SleepEpisode:
    bed = day_start(day) - int((24 - bed_clock_h) * H)
    wake = day_start(day) + int(wake_clock_h * H)
    return SleepEpisode(day, bed, wake, (wake - bed) / 60, 0, [(bed, wake)])


def _episodes():
    # d0: 23:00 -> 07:00 (wakes on 03-04); d1: bed 23:00 on 03-04
    return {D0: _episode(D0, 23, 7), D1: _episode(D1, 23, 7)}


def test_walk_cadence_counts_walking_minutes():
    t9 = day_start(D0) + 9 * H
    recs = [FeatureRecord(t9 + k * 300, steps=100) for k in range(6)]
    (p,) = extract_daily_params(recs, [], _episodes())
    assert p.day_id == D1
    assert p.walking_min == 30 and p.running_min == 0 and p.daily_steps == 600


def test_video_time_and_pre_bed_boundary():
    t20 = day_start(D0) + 20 * H
    video = AppSession("tube", "video", t20, t20 + H)
    (p,) = extract_daily_params([], [video], _episodes())
    assert p.video_min == 60 and p.app_minutes == {"tube": 60}
    assert "tube" in p.pre_bed_apps


def test_day_without_sleep_is_omitted():
    eps = _episodes()
    eps[D1] = None
    assert extract_daily_params([], [], eps) == []


def test_sleep_fields_follow_the_episode():
    (p,) = extract_daily_params([], [], _episodes())
    ep = _episodes()[D1]
    assert p.bed_time_min == ep.bed_minutes == 300
    assert p.sleep_duration_h == 8 and p.wakeup_count == 0


def _cols(x, y):
    return {"x": x, "y": y}


def test_perfect_correlations():
    assert correlation_table(_cols([1, 2, 3, 4], [2, 4, 6, 8]), min_n=2).get("x", "y") == pytest.approx(1.0)
    assert correlation_table(_cols([1, 2, 3, 4], [8, 6, 4, 2]), min_n=2).get("x", "y") == pytest.approx(-1.0)


def test_zero_variance_is_absent():
    m = correlation_table(_cols([1, 2, 3], [5, 5, 5]), min_n=2)
    assert math.isnan(m.get("x", "y")) and m.absent[0, 1]


def test_independent_columns_are_weakly_correlated():
    rng = np.random.default_rng(11)
    hits = 0
    for _ in range(100):
        m = correlation_table(_cols(rng.normal(size=200), rng.normal(size=200)))
        hits += abs(m.get("x", "y")) < 0.2
    assert hits >= 99


def test_pairwise_complete_rows_and_min_n():
    m = correlation_table(_cols([1, 2, np.nan, 4, 5, 6], [1, 2, 3, np.nan, 5, 6]), min_n=5)
    assert m.n[0, 1] == 4 and math.isnan(m.get("x", "y"))


def _rows(durations, wakeups, steps, beds=None):
    beds = beds or [300.0] * len(durations)
    return [
        DailyParams(date(2024, 1, 1 + i), daily_steps=s, sleep_duration_h=d, wakeup_count=w, bed_time_min=b)
        for i, (d, w, s, b) in enumerate(zip(durations, wakeups, steps, beds))
    ]


def test_best_profile_hand_example():
    rows = _rows([8, 7, 4, 5], [0, 1, 3, 2], [9000, 8000, 3000, 4000])
    best = best_profile(rows, min_rows=4)
    assert best.top_days == [date(2024, 1, 1)]
    assert best.best_daily_steps == 9000


def test_identical_days_give_common_values():
    rows = _rows([7] * 8, [1] * 8, [5000] * 8)
    best = best_profile(rows)
    assert best.best_daily_steps == 5000 and best.best_bed_time_min == 300


def test_anti_correlated_days_pick_low_steps():
    steps = [2000, 3000, 5000, 6000, 7000, 8000, 9000, 10000]
    durations = [9, 8.5, 7, 6.5, 6, 5.5, 5, 4.5]
    best = best_profile(_rows(durations, [0] * 8, steps))
    assert best.best_daily_steps == 2500


def test_best_profile_needs_enough_days():
    with pytest.raises(ValueError):
        best_profile(_rows([8, 7], [0, 0], [1, 2]))


def test_pearson_matrix_shape_and_json():
    rows = _rows([8, 7, 6, 5, 4, 6], [0, 1, 2, 3, 4, 1], [9, 8, 7, 6, 5, 7])
    rows[0].app_minutes = {"chat": 5.0}
    m = pearson_matrix(rows, CorrelateConfig().min_n)
    assert m.names[-1] == "app:chat"
    assert m.get("sleep_duration_h", "daily_steps") == pytest.approx(1.0)
    assert '"absent"' in m.heatmap_json()
