from __future__ import annotations

from datetime import date

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nudgekit.geo import offset_m
from nudgekit.trajectory import (
    Fix,
    Route,
    TrajectoryConfig,
    TrajectoryPattern,
    edit_distance,
    is_suppressed,
    levenshtein,
    mine_patterns,
    patterns_from_json,
    patterns_to_json,
    propose_alternative,
    read_gpx,
    route_string,
    same_trajectory,
    segment_routes,
)

MONDAY = date(2024, 3, 4)
HOME = (35.0, 139.0)
T0 = 1_709_535_600  # 2024-03-04 07:00 UTC


def _stay(center, n, t0, rng):
    return [Fix(t0 + 10 * i, *offset_m(*center, *rng.uniform(-2.5, 2.5, 2))) for i in range(n)]


def _walk(n, spacing, t0, north0=0.0):
    return [Fix(t0 + 4 * i, *offset_m(*HOME, north0 + spacing * i, 0.0)) for i in range(1, n + 1)]


def _commute(glitch: bool = False):
    rng = np.random.default_rng(3)
    walk = _walk(200, 5.0, T0 + 300)
    if glitch:
        k = 100
        walk[k] = Fix(walk[k].t, *offset_m(walk[k].lat, walk[k].lon, 0.0, 500.0))
    work = offset_m(*HOME, 1005.0, 0.0)
    return _stay(HOME, 30, T0, rng) + walk + _stay(work, 30, T0 + 1200, rng)


def test_commute_segments_into_one_route():
    routes, pois = segment_routes(_commute(), MONDAY)
    assert len(pois) == 2 and len(routes) == 1
    r = routes[0]
    assert (r.start_poi, r.end_poi) == (pois[0].poi_id, pois[1].poi_id)
    assert r.length_m == pytest.approx(995, abs=10)


def test_gps_glitch_splits_the_route():
    routes, _ = segment_routes(_commute(glitch=True), MONDAY)
    assert len(routes) == 2
    assert routes[0].start_poi is not None and routes[0].end_poi is None
    assert routes[1].start_poi is None and routes[1].end_poi is not None


def test_stationary_day_has_one_poi_and_no_routes():
    fixes = _stay(HOME, 60, T0, np.random.default_rng(0))
    routes, pois = segment_routes(fixes, MONDAY)
    assert len(pois) == 1 and routes == []


def test_weekend_is_ignored():
    assert segment_routes(_commute(), date(2024, 3, 9)) == ([], [])


class _Streets:
    def __init__(self, names):
        self.names = iter(names)

    def street_name(self, lat, lon):
        return next(self.names)


def _route(names) -> Route:
    pts = [Fix(i, 0.0, 0.0) for i in range(len(names))]
    return Route(pts, MONDAY)


@pytest.mark.parametrize(
    "names,expected",
    [(["A", "A", "A", "B", "B", "C"], "A|B|C"), (["A"], "A"), (["A", "B", "A"], "A|B|A"), (["A", None, "B"], "A|B")],
)
def test_route_string(names, expected):
    assert route_string(_route(names), _Streets(names)) == expected


def test_route_string_rejects_separator_and_empty():
    with pytest.raises(ValueError):
        route_string(_route(["A|B"]), _Streets(["A|B"]))
    with pytest.raises(LookupError):
        route_string(_route([None]), _Streets([None]))


def test_edit_distance_examples():
    assert edit_distance("A|B|C", "A|B|C") == 0
    assert edit_distance("", "A|B|C") == 3
    assert edit_distance("kitten", "sitting", level="char") == 3


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from("ABCD"), max_size=8), st.lists(st.sampled_from("ABCD"), max_size=8))
def test_levenshtein_is_symmetric_and_bounded(a, b):
    d = levenshtein(a, b)
    assert d == levenshtein(b, a)
    assert abs(len(a) - len(b)) <= d <= max(len(a), len(b))


def _string_route(s: str, day: date, start_t: int) -> Route:
    pts = [Fix(start_t, 35.0, 139.0), Fix(start_t + 600, 35.009, 139.0)]
    return Route(pts, day, 0, 1, steps=1200.0, street_string=s)


def _weekdays(n: int) -> list[date]:
    days, d = [], MONDAY
    while len(days) < n:
        if d.weekday() < 5:
            days.append(d)
        d = date.fromordinal(d.toordinal() + 1)
    return days


def test_same_commute_mines_one_pattern():
    days = _weekdays(10)
    routes = [_string_route("A|B|C|D|E|F", d, T0 + (d - MONDAY).days * 86400) for d in days]
    (p,) = mine_patterns(routes)
    assert p.occurrences == 10
    assert p.street_string == "A|B|C|D|E|F"
    assert p.start_clock_min == pytest.approx(7 * 60, abs=1e-6)
    assert p.weekdays == frozenset(range(5))


def test_one_street_detour_is_grouped():
    assert same_trajectory("A|B|C|D|E|F", "A|B|X|D|E|F")
    days = _weekdays(3)
    routes = [
        _string_route("A|B|C|D|E|F", days[0], T0),
        _string_route("A|B|X|D|E|F", days[1], T0 + 86400),
    ]
    (p,) = mine_patterns(routes)
    assert p.occurrences == 2


def test_disjoint_routes_give_no_pattern():
    routes = [_string_route("A|B|C", MONDAY, T0), _string_route("X|Y|Z", MONDAY, T0 + 3600)]
    assert mine_patterns(routes) == []


def _pattern(**kw) -> TrajectoryPattern:
    base = dict(
        pattern_id=0, start_poi=0, end_poi=1, weekdays=frozenset({0}), start_clock_min=510.0,
        end_clock_min=525.0, avg_steps=1250.0, avg_speed=1.2, map_distance=1000.0,
        street_string="A|B", occurrences=5, start_lat=35.0, start_lon=139.0, end_lat=35.01, end_lon=139.0,
    )
    base.update(kw)
    return TrajectoryPattern(**base)


class _Alts:
    def __init__(self, alts):
        self.alts = alts

    def alternatives(self, start, end):
        return self.alts


def test_smallest_increase_alternative():
    adv = propose_alternative(_pattern(), _Alts([("A|C", 1100.0), ("A|D", 1400.0)]), 10_000, 0)
    assert adv.alt_distance == 1100.0 and adv.est_steps == pytest.approx(1375.0)


def test_closest_to_gap_strategy():
    cfg = TrajectoryConfig(selection_strategy="closest_to_gap")
    adv = propose_alternative(_pattern(), _Alts([("A|C", 1100.0), ("A|D", 1400.0)]), 10_000, 0, config=cfg)
    assert adv.alt_distance == 1400.0


def test_suppressed_pattern_gets_no_alternative():
    p = _pattern(consecutive_rejections=4)
    assert is_suppressed(p)
    assert propose_alternative(p, _Alts([("A|C", 1100.0)]), 10_000, 0) is None


def test_shorter_alternatives_are_rejected():
    assert propose_alternative(_pattern(), _Alts([("A|C", 900.0), ("A|D", 999.0)]), 10_000, 0) is None


def test_failing_provider_yields_none():
    class Broken:
        def alternatives(self, start, end):
            raise RuntimeError("offline")

    assert propose_alternative(_pattern(), Broken(), 10_000, 0) is None


def test_patterns_json_roundtrip():
    ps = [_pattern(), _pattern(pattern_id=1, weekdays=frozenset({1, 3}))]
    assert patterns_from_json(patterns_to_json(ps)) == ps


def test_read_gpx(tmp_path):
    gpx = """<?xml version="1.0"?>
<gpx version="1.1" xmlns="http://www.topografix.com/GPX/1/1">
 <trk><trkseg>
  <trkpt lat="35.001" lon="139.0"><time>2024-03-04T07:00:10Z</time></trkpt>
  <trkpt lat="35.000" lon="139.0"><time>2024-03-04T07:00:00Z</time></trkpt>
  <trkpt lat="35.002" lon="139.0"></trkpt>
 </trkseg></trk>
</gpx>"""
    path = tmp_path / "walk.gpx"
    path.write_text(gpx)
    fixes = read_gpx(path)
    assert [(f.t - T0, f.lat) for f in fixes] == [(0, 35.0), (10, 35.001)]
