from __future__ import annotations

import copy
from datetime import date

import numpy as np
import pytest

from nudgekit.coredata import AppSession, Stats
from nudgekit.correlate import BestProfile
from nudgekit.mlkit import ClassifierSpec, cross_validate
from nudgekit.nudge import (
    BedtimeSession,
    ContextSnapshot,
    InterruptFeatureTracker,
    NudgeConfig,
    NudgeEngine,
    bedtime_step,
    interrupt_dataset,
    stop_session,
    train_interruptibility,
)
from nudgekit.sleep import SleepEpisode
from nudgekit.timeutil import anchor_of, day_start
from nudgekit.trajectory import TrajectoryPattern

MONDAY = date(2024, 3, 4)
M = 60
H = 3600


def _at(day: date, hh: int, mm: int = 0) -> int:
    return day_start(day) + hh * H + mm * M


def _ctx(now: int, in_use: bool, **kw) -> ContextSnapshot:
    return ContextSnapshot(now, screen_on=in_use, last_interaction=now if in_use else None, **kw)


def _pattern() -> TrajectoryPattern:
    return TrajectoryPattern(
        pattern_id=7, start_poi=0, end_poi=1, weekdays=frozenset(range(5)), start_clock_min=8 * 60 + 30,
        end_clock_min=8 * 60 + 45, avg_steps=1250.0, avg_speed=1.2, map_distance=1000.0,
        street_string="A|B", occurrences=10, start_lat=35.0, start_lon=139.0, end_lat=35.01, end_lon=139.0,
    )


class _Alts:
    def alternatives(self, start, end):
        return [("A|C|B", 1100.0), ("A|D|B", 1400.0)]


def _engine(**kw) -> NudgeEngine:
    best = BestProfile(10_000.0, 5 * 60.0, {})
    return NudgeEngine(patterns=[_pattern()], best=best, alternatives=_Alts(), **kw)


def _run(engine, day, start, end, in_use_from=None):
    delivered = []
    t = start
    while t <= end:
        use = in_use_from is not None and t >= in_use_from
        delivered += engine.tick(t, _ctx(t, use))
        t += 5 * M
    return delivered


def test_steps_advice_delivered_in_window():
    eng = _engine()
    out = _run(eng, MONDAY, _at(MONDAY, 7, 50), _at(MONDAY, 8, 5), in_use_from=_at(MONDAY, 8, 5))
    (adv,) = out
    assert adv.kind == "steps" and adv.delivered_at == _at(MONDAY, 8, 5)
    assert adv.payload["alt_distance"] == 1100.0
    assert adv.expiry == _at(MONDAY, 8, 30)


def test_steps_advice_expires_when_phone_unused():
    eng = _engine()
    out = _run(eng, MONDAY, _at(MONDAY, 7, 50), _at(MONDAY, 8, 35), in_use_from=_at(MONDAY, 8, 31))
    assert [a for a in out if a.kind == "steps"] == []
    (adv,) = [a for a in eng.log if a.kind == "steps"]
    assert adv.expired and adv.delivered_at is None


def _deliver_and_answer(eng, day, response):
    out = _run(eng, day, _at(day, 7, 50), _at(day, 8, 5), in_use_from=_at(day, 8, 5))
    steps = [a for a in out if a.kind == "steps"]
    for a in steps:
        eng.record_response(a.advice_id, response, _at(day, 8, 6))
    return steps


def test_four_rejections_suppress_the_pattern():
    eng = _engine()
    days = [date(2024, 3, 4 + i) for i in range(5)]
    for day in days[:4]:
        assert len(_deliver_and_answer(eng, day, "rejected")) == 1
    assert eng.patterns[7].consecutive_rejections == 4
    assert _deliver_and_answer(eng, days[4], "rejected") == []


def test_acceptance_resets_rejections_and_adopts_route():
    eng = _engine()
    for i, resp in enumerate(("rejected", "rejected", "accepted")):
        _deliver_and_answer(eng, date(2024, 3, 4 + i), resp)
    p = eng.patterns[7]
    assert p.consecutive_rejections == 0
    assert (p.street_string, p.map_distance, p.avg_steps) == ("A|C|B", 1100.0, pytest.approx(1375.0))


def test_response_to_undelivered_advice_is_an_error():
    eng = _engine()
    _run(eng, MONDAY, _at(MONDAY, 7, 50), _at(MONDAY, 8, 5))
    (adv,) = eng.log
    with pytest.raises(ValueError):
        eng.record_response(adv.advice_id, "accepted", _at(MONDAY, 8, 1))
    with pytest.raises(KeyError):
        eng.record_response("nope", "accepted", _at(MONDAY, 8, 1))


def test_clock_must_not_run_backwards():
    eng = _engine()
    eng.tick(_at(MONDAY, 9), _ctx(_at(MONDAY, 9), False))
    with pytest.raises(ValueError):
        eng.tick(_at(MONDAY, 8), _ctx(_at(MONDAY, 8), False))


def _episode(day: date) -> SleepEpisode:
    a = anchor_of(day)
    return SleepEpisode(day, a + 5 * H, a + 13 * H, 480.0, 0, [(a + 5 * H, a + 13 * H)])


def test_sleep_confirm_is_reissued_each_round_until_confirmed():
    ep = _episode(MONDAY)
    eng = NudgeEngine(sleep_source=lambda now: [ep])
    _run(eng, MONDAY, _at(MONDAY, 9), _at(MONDAY, 10, 0))
    reminders = [a for a in eng.log if a.kind == "sleep_confirm"]
    assert [a.created_at for a in reminders] == [_at(MONDAY, 9), _at(MONDAY, 9, 30), _at(MONDAY, 10)]
    assert [a.expired for a in reminders] == [True, True, False]

    (delivered,) = eng.tick(_at(MONDAY, 10, 5), _ctx(_at(MONDAY, 10, 5), True))
    assert delivered is reminders[-1]
    eng.record_response(delivered.advice_id, "accepted", _at(MONDAY, 10, 6))
    _run(eng, MONDAY, _at(MONDAY, 10, 10), _at(MONDAY, 11, 30), in_use_from=_at(MONDAY, 10, 10))
    assert len([a for a in eng.log if a.kind == "sleep_confirm"]) == 3
    assert eng.feedback_for(MONDAY.isoformat()).kind == "confirm"


def test_break_advice_respects_gap_and_scorer():
    mv = Stats(0.5, 0.5, 0.5, 0.0)
    eng = NudgeEngine(break_scorer=lambda ctx: 0.9)
    got = []
    for k in range(12):
        t = _at(MONDAY, 14) + k * 5 * M
        got += eng.tick(t, _ctx(t, True, movement_recent=mv, current_app="game"))
    assert [a.created_at - _at(MONDAY, 14) for a in got] == [0, 30 * M]
    low = NudgeEngine(break_scorer=lambda ctx: 0.2)
    assert low.tick(_at(MONDAY, 14), _ctx(_at(MONDAY, 14), True, movement_recent=mv)) == []


def test_bedtime_advice_once_per_day_and_session_start():
    eng = _engine()
    anchor = anchor_of(date(2024, 3, 5))
    t = anchor + 4 * H + 30 * M  # 60 min before the 23:00 target
    (adv,) = [a for a in eng.tick(t, _ctx(t, True)) if a.kind == "bedtime"]
    assert eng.tick(t + 5 * M, _ctx(t + 5 * M, True)) == []
    eng.record_response(adv.advice_id, "accepted", t + M)
    assert eng.active_session() is not None


def test_quiet_dark_steps_lower_volume_geometrically():
    s = BedtimeSession("s", 0, 0)
    ctx = ContextSnapshot(300, movement_recent=Stats(0, 0, 0, 0.01), light_avg=1.0)
    for _ in range(10):
        bedtime_step(s, ctx, False, movement_threshold=0.1, light_threshold=5.0)
    assert s.volume == pytest.approx(0.9**10, abs=1e-3)
    assert s.active


def test_sleep_signal_ends_session_on_service_side():
    s = BedtimeSession("s", 0, 0)
    for k in range(1, 4):
        bedtime_step(s, ContextSnapshot(300 * k), k == 3, movement_threshold=0.1, light_threshold=5.0)
    assert s.termination == "service" and s.ended_at == 900


def test_user_stop_leaves_volume():
    s = BedtimeSession("s", 0, 0, volume=0.7)
    stop_session(s, 600)
    assert s.termination == "user" and s.volume == 0.7


def test_snapshot_restore_replays_identically():
    def drive(eng, days):
        for day in days:
            _deliver_and_answer(eng, day, "rejected")
        return eng

    a = drive(_engine(), [date(2024, 3, 4), date(2024, 3, 5)])
    b = _engine()
    b.restore(copy.deepcopy(a.snapshot()))
    later = [date(2024, 3, 6), date(2024, 3, 7)]
    drive(a, later)
    drive(b, later)
    assert a.advice_log_jsonl() == b.advice_log_jsonl()
    assert a.snapshot() == b.snapshot()


def _history(n: int, label, seed: int = 0):
    rng = np.random.default_rng(seed)
    tr = InterruptFeatureTracker()
    out = []
    for i in range(n):
        hour = int(rng.integers(8, 24))
        start = _at(MONDAY, hour) + int(rng.integers(0, 50)) * M
        app = str(rng.choice(["chat", "game", "tube"]))
        f = tr.features(start + 300, app, start, Stats(0.1, 0.3, 0.6, 0.1))
        tr.observe(AppSession(app, "other", start, start + 300))
        out.append((f, label(hour, rng)))
    return out


def test_interruptibility_learns_clock_hour_rule():
    hist = _history(300, lambda h, rng: h >= 20)
    model = train_interruptibility(hist)
    assert not model.fallback
    ds = interrupt_dataset(hist, model.vocab)
    assert ds.X.shape[1] == 15
    assert cross_validate(ds, ClassifierSpec(kind="forest"), 10, 0).accuracy >= 0.9


def test_interruptibility_on_noise_matches_prior():
    hist = _history(400, lambda h, rng: bool(rng.random() < 0.25), seed=1)
    model = train_interruptibility(hist)
    ds = interrupt_dataset(hist, model.vocab)
    acc = cross_validate(ds, ClassifierSpec(kind="forest", min_leaf=30), 10, 0).accuracy
    assert abs(acc - (1 - ds.positive_fraction)) <= 0.06


def test_few_rows_fall_back_to_random_timing():
    model = train_interruptibility(_history(10, lambda h, rng: h >= 20))
    assert model.fallback and model.accept_probability(_history(1, lambda h, rng: True)[0][0]) == 1.0


def test_config_defaults():
    cfg = NudgeConfig()
    assert (cfg.tick_min, cfg.advice_lead_min, cfg.scan_interval_min, cfg.sleep_check_interval_min) == (5, 30, 15, 30)
