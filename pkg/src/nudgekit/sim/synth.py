"""Sensor-trace synthesis for scripted subjects.

A subject's life is described by nights (true sleep intervals per analysis
day) and day plans (walks, phone sessions, indoor step bouts, plus the
environmental quirks that make single sensors ambiguous). Plans are created
lazily so that accepted advice can rewrite what happens later the same day.
Rendering turns a calendar day into events at the phone's sampling rates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date, timedelta

import numpy as np

from ..coredata import Event, EventLog, Stats
from ..geo import offset_m
from ..nudge import ContextSnapshot
from ..rng import substream
from ..sleep import SleepConfig, SleepEpisode, merge_chunks
from ..timeutil import DAY_S, analysis_day, anchor_of, day_start, to_date
from .profiles import SubjectProfile
from .world import GridPath, World

SAMPLE_S = 150  # movement, light and noise
LOCATION_S = 300
WALK_FIX_S = 30
WEATHER_S = 1800
GRID_S = 600  # sleep boundaries sit on the 10-minute window grid

# Sensor regimes: light (lux), noise (dB), movement magnitude mean and spread.
LIGHT = {
    "sleep": 0.3, "dawn": 25.0, "night_awake": 60.0, "dark_pre_bed": 0.4, "face_down": 0.3,
    "home_day": 300.0, "home_evening": 150.0, "home_night": 60.0, "work": 400.0,
    "outdoor_day": 3000.0, "outdoor_dark": 40.0,
}
NOISE = {
    "sleep": 30.0, "noisy_night": 44.0, "night_awake": 38.0, "quiet": 33.0,
    "home_day": 42.0, "home_evening": 48.0, "work": 55.0, "outdoor": 66.0,
}
MOVEMENT = {
    "sleep": (0.01, 0.008), "turn": (0.4, 0.1), "still": (0.015, 0.01),
    "handling": (0.45, 0.2), "bout": (1.8, 0.5), "walking": (2.4, 0.6),
}


@dataclass
class Night:
    day_id: date
    bed: int
    wake: int
    disturbances: list[tuple[int, int]] = field(default_factory=list)
    dawn: tuple[int, int] | None = None
    noisy: bool = False
    turns: list[int] = field(default_factory=list)

    def intervals(self) -> list[tuple[int, int]]:
        """True sleeping intervals: bed to wake minus night-time awakenings."""
        out, cur = [], self.bed
        for s, e in sorted(self.disturbances):
            if s > cur:
                out.append((cur, s))
            cur = max(cur, e)
        if self.wake > cur:
            out.append((cur, self.wake))
        return out

    @property
    def duration_min(self) -> float:
        return sum(e - s for s, e in self.intervals()) / 60.0

    def shift_bed(self, new_bed: int) -> bool:
        if new_bed >= self.wake - 3600 or new_bed == self.bed:
            return False
        self.bed = new_bed
        self.disturbances = [(s, e) for s, e in self.disturbances if s >= new_bed + GRID_S]
        if self.dawn is not None and self.dawn[0] < new_bed:
            self.dawn = None
        self.turns = [t for t in self.turns if new_bed <= t < self.wake]
        return True


@dataclass
class Walk:
    kind: str  # out | back
    start: int
    stop: int
    path: GridPath


@dataclass
class PhoneSession:
    start: int
    stop: int
    app_id: str
    app_type: str


@dataclass
class Bout:
    start: int
    stop: int
    steps: float


@dataclass
class DayPlan:
    day: date
    wake: int
    bed: int
    walks: list[Walk] = field(default_factory=list)
    work: tuple[int, int] | None = None
    sessions: list[PhoneSession] = field(default_factory=list)
    bouts: list[Bout] = field(default_factory=list)
    dark_pre_bed: tuple[int, int] | None = None
    quiet: list[tuple[int, int]] = field(default_factory=list)
    face_down: list[tuple[int, int]] = field(default_factory=list)

    def clear(self, a: int, b: int, keep: PhoneSession | None = None) -> None:
        """Drop or trim sessions and bouts overlapping [a, b)."""
        sessions = []
        for s in self.sessions:
            if s is keep or s.stop <= a or s.start >= b:
                sessions.append(s)
            elif s.start < a:
                s.stop = a
                sessions.append(s)
            elif s.stop > b:
                s.start = b
                sessions.append(s)
        self.sessions = [s for s in sessions if s.stop > s.start]
        self.bouts = [x for x in self.bouts if x.stop <= a or x.start >= b]


@dataclass
class GroundTruth:
    subject_id: str
    analysis_days: list[date]
    sleep: dict[date, list[tuple[int, int]]]
    walks: list[Walk]
    sessions: list[PhoneSession]


def _snap(t: float, origin: int) -> int:
    return origin + int(round((t - origin) / GRID_S)) * GRID_S


def _overlap(a0: float, a1: float, b0: float, b1: float) -> float:
    return max(0.0, min(a1, b1) - max(a0, b0))


def _mask(times: np.ndarray, intervals) -> np.ndarray:
    m = np.zeros(times.shape, dtype=bool)
    for a, b in intervals:
        m |= (times >= a) & (times < b)
    return m


def _free_slots(lo: int, hi: int, busy: list[tuple[int, int]]) -> list[tuple[int, int]]:
    out, cur = [], lo
    for a, b in sorted(busy):
        if b <= cur:
            continue
        if a >= hi:
            break
        if a > cur:
            out.append((cur, a))
        cur = max(cur, b)
    if cur < hi:
        out.append((cur, hi))
    return out


class SubjectSim:
    """One subject's simulated life, generated day by day from named substreams."""

    def __init__(
        self,
        profile: SubjectProfile,
        world: World,
        seed: int,
        start: date,
        sleep_config: SleepConfig | None = None,
    ) -> None:
        self.profile = profile
        self.world = world
        self.seed = seed
        self.start = start
        self.sleep_config = sleep_config or SleepConfig()
        self.habits: dict[str, GridPath] = {
            "out": world.shortest_path(profile.home, profile.work),
            "back": world.shortest_path(profile.work, profile.home),
        }
        self.nights: dict[date, Night] = {}
        self.plans: dict[date, DayPlan] = {}

    def _rng(self, *names) -> np.random.Generator:
        return substream(self.seed, self.profile.subject_id, *names)

    # -- nights -----------------------------------------------------------
    def night(self, day_id: date) -> Night:
        if day_id in self.nights:
            return self.nights[day_id]
        p = self.profile
        rng = self._rng("night", day_id.toordinal())
        anchor = anchor_of(day_id)
        k = (day_id - self.start).days
        bed_min = p.bed_mean_min + p.bed_drift_min_per_day * k + rng.normal(0.0, p.bed_std_min)
        bed_min = min(max(bed_min, 150.0), 510.0)
        length = min(max(rng.normal(p.sleep_len_mean_min, p.sleep_len_std_min), 300.0), 600.0)
        bed = _snap(anchor + bed_min * 60, anchor)
        wake = min(_snap(bed + length * 60, anchor), anchor + 17 * 3600)

        n_dist = int(rng.poisson(p.disturbance_rate))
        dists: list[tuple[int, int]] = []
        for _ in range(n_dist):
            dur = int(rng.integers(3, 7)) * GRID_S
            lo, hi = bed + 3600, wake - 3600 - dur
            if hi <= lo:
                continue
            s = _snap(rng.uniform(lo, hi), anchor)
            if all(s >= e + 2 * GRID_S or s + dur <= a - 2 * GRID_S for a, e in dists):
                dists.append((s, s + dur))
        night = Night(day_id, bed, wake, sorted(dists))

        scale = p.noise_scale
        u_dawn, u_noisy = rng.random(2)
        dawn_len = int(rng.integers(3, 7)) * GRID_S
        n_turns = int(rng.poisson(3.0 * scale)) if scale > 0 else 0
        turns = rng.uniform(bed, wake, n_turns) if n_turns else []
        if scale > 0:
            rate = scale * p.night_event_rate
            if u_dawn < min(1.0, 0.35 * rate):
                night.dawn = (max(bed, wake - dawn_len), wake)
            night.noisy = bool(u_noisy < min(1.0, 0.25 * rate))
            night.turns = sorted(int(t) for t in turns)
        self.nights[day_id] = night
        return night

    # -- day plans --------------------------------------------------------
    def plan(self, day: date) -> DayPlan:
        if day in self.plans:
            return self.plans[day]
        p = self.profile
        midnight = day_start(day)
        wake = self.night(day).wake
        bed = self.night(day + timedelta(days=1)).bed
        plan = DayPlan(day, wake, bed)
        scale = p.noise_scale

        if day.weekday() < 5:
            rng = self._rng("commute", day.toordinal())
            jit = rng.normal(0.0, 1.0, 2) * p.departure_std_min
            dep = int(midnight + (p.departure_min + jit[0]) * 60)
            dep = max(dep, wake + 1800)
            out = self._make_walk("out", dep)
            leave = max(int(midnight + (p.return_min + jit[1]) * 60), out.stop + 3600)
            back = self._make_walk("back", leave)
            if back.stop < bed - 1800:
                plan.walks = [out, back]
                plan.work = (out.stop, back.start)

        walks = [(w.start, w.stop) for w in plan.walks]
        rng = self._rng("bouts", day.toordinal())
        n_bouts = int(round(p.bouts_per_day)) if p.daily_step_jitter == 0 else int(rng.poisson(p.bouts_per_day))
        free = _free_slots(wake + 600, bed - 600, walks)
        for _ in range(n_bouts):
            dur = int(rng.integers(5, 13)) * 60
            steps = p.bout_steps * (math.exp(rng.normal(0.0, p.daily_step_jitter)) if p.daily_step_jitter else 1.0)
            slot = self._pick(rng, free, dur)
            if slot is not None:
                plan.bouts.append(Bout(slot, slot + dur, float(steps)))
                free = _free_slots(wake + 600, bed - 600, walks + [(b.start, b.stop) for b in plan.bouts])
        plan.bouts.sort(key=lambda b: b.start)

        rng = self._rng("quirks", day.toordinal())
        u = rng.random(3)
        if scale > 0 and u[0] < min(1.0, 0.6 * scale):
            plan.dark_pre_bed = (bed - int(rng.integers(1, 5)) * GRID_S, bed)
        evening = (max(wake, midnight + 19 * 3600), bed - 1800)
        for _ in range(int(rng.poisson(1.0 * scale)) if scale > 0 else 0):
            dur = int(rng.integers(20, 61)) * 60
            slot = self._pick(rng, _free_slots(*evening, walks), dur)
            if slot is not None:
                plan.quiet.append((slot, slot + dur))
        if plan.work is not None and scale > 0:
            for _ in range(int(rng.poisson(1.5 * scale))):
                dur = int(rng.integers(30, 91)) * 60
                slot = self._pick(rng, [plan.work], dur)
                if slot is not None:
                    plan.face_down.append((slot, slot + dur))

        self._plan_sessions(plan, day)
        self.plans[day] = plan
        return plan

    def _make_walk(self, kind: str, t0: int) -> Walk:
        path = self.habits[kind]
        dur = int(round(self.world.path_length_m(path) / self.profile.walk_speed_mps))
        return Walk(kind, t0, t0 + dur, path)

    @staticmethod
    def _pick(rng: np.random.Generator, free: list[tuple[int, int]], dur: int) -> int | None:
        fits = [(a, b) for a, b in free if b - a >= dur]
        if not fits:
            return None
        weights = np.array([b - a - dur + 1 for a, b in fits], dtype=float)
        a, b = fits[int(rng.choice(len(fits), p=weights / weights.sum()))]
        return int(rng.integers(a, b - dur + 1))

    def _app(self, rng: np.random.Generator, evening: bool) -> tuple[str, str]:
        w = np.array([a[3] if evening else a[2] for a in self.profile.apps])
        k = int(rng.choice(len(w), p=w / w.sum()))
        return self.profile.apps[k][0], self.profile.apps[k][1]

    def _plan_sessions(self, plan: DayPlan, day: date) -> None:
        p = self.profile
        rng = self._rng("sessions", day.toordinal())
        midnight = day_start(day)
        busy = [(w.start, w.stop) for w in plan.walks]
        sessions: list[PhoneSession] = []
        u = rng.random(2)
        if plan.walks and u[0] < p.pre_departure_use_prob:
            dep = plan.walks[0].start
            s = dep - int(rng.integers(12, 25)) * 60
            e = s + int(rng.integers(6, 11)) * 60
            if s > plan.wake:
                sessions.append(PhoneSession(s, min(e, dep - 60), *self._app(rng, False)))
        if u[1] < p.pre_bed_use_prob:
            if plan.dark_pre_bed is not None:
                s, e = plan.dark_pre_bed[0], plan.bed - 60
            else:
                s = plan.bed - int(rng.integers(15, 40)) * 60
                e = s + int(rng.integers(5, 15)) * 60
            if s > plan.wake:
                sessions.append(PhoneSession(s, min(e, plan.bed - 60), *self._app(rng, True)))
        busy += [(s.start - 60, s.stop + 60) for s in sessions]

        t = plan.wake + 300
        while True:
            evening = t >= midnight + 18 * 3600
            rate = p.session_rate_evening_per_h if evening else p.session_rate_day_per_h
            t += int(rng.exponential(3600.0 / rate))
            length = int(min(max(rng.exponential(p.session_len_mean_min), 1.0), 45.0) * 60)
            app = self._app(rng, evening)
            if t >= plan.bed - 300:
                break
            end = min(t + length, plan.bed - 60)
            clash = next(((a, b) for a, b in busy if a < end and t < b), None)
            if clash is not None:
                if clash[0] <= t:
                    t = clash[1]
                    continue
                end = clash[0]
            if end - t >= 60:
                sessions.append(PhoneSession(t, end, *app))
                busy.append((t - 60, end + 60))
            t = end
        plan.sessions = sorted((s for s in sessions if s.stop > s.start), key=lambda s: s.start)

    # -- edits from accepted advice ----------------------------------------
    def reroute(self, kind: str, path: GridPath, now: int) -> bool:
        """Adopt ``path`` for the ``kind`` commute from now on; returns True if
        today's walk still changes."""
        self.habits[kind] = path
        plan = self.plans.get(to_date(now))
        if plan is None:
            return False
        for i, w in enumerate(plan.walks):
            if w.kind == kind and w.start > now:
                new = self._make_walk(kind, w.start)
                plan.walks[i] = new
                plan.clear(new.start, new.stop)
                if kind == "out" and plan.work is not None:
                    plan.work = (new.stop, max(plan.work[1], new.stop))
                    plan.face_down = [(max(a, new.stop), b) for a, b in plan.face_down if b > new.stop]
                return True
        return False

    def truncate_session(self, now: int, after_s: int = 60) -> bool:
        s = self.session_at(now)
        if s is None:
            return False
        s.stop = min(s.stop, now + after_s)
        return True

    def shift_bedtime(self, day_id: date, target: int, compliance: float, now: int) -> int | None:
        """Move the bed time of analysis day ``day_id`` part of the way to ``target``."""
        night = self.night(day_id)
        if night.bed <= now:
            return None
        anchor = anchor_of(day_id)
        new = _snap(night.bed + compliance * (target - night.bed), anchor)
        earliest = anchor + int(math.ceil((now + 60 - anchor) / GRID_S)) * GRID_S
        new = max(new, earliest)
        if not night.shift_bed(new):
            return None
        plan = self.plans.get(day_id - timedelta(days=1))
        if plan is not None:
            plan.bed = new
            plan.clear(new - 60, new + DAY_S)
            if plan.dark_pre_bed is not None:
                length = plan.dark_pre_bed[1] - plan.dark_pre_bed[0]
                plan.dark_pre_bed = (new - length, new)
            plan.quiet = [(a, min(b, new - 1800)) for a, b in plan.quiet if a < new - 1800]
        return new

    # -- state queries ----------------------------------------------------
    def _near_plans(self, t: int) -> list[DayPlan]:
        d = to_date(t)
        return [self.plan(d - timedelta(days=1)), self.plan(d)]

    def session_at(self, t: int) -> PhoneSession | None:
        for plan in self._near_plans(t):
            for s in plan.sessions:
                if s.start <= t < s.stop:
                    return s
        return None

    def asleep(self, t: int) -> bool:
        night = self.night(analysis_day(t))
        return any(a <= t < b for a, b in night.intervals())

    def _levels(self, t: int) -> tuple[float, float, float, float, bool]:
        """(light, noise, movement mean, movement spread, in a walk) at ``t``, noise-free."""
        night = self.night(analysis_day(t))
        if night.bed <= t < night.wake:
            if any(a <= t < b for a, b in night.disturbances):
                mv = MOVEMENT["handling"] if self.session_at(t) else MOVEMENT["still"]
                return LIGHT["night_awake"], NOISE["night_awake"], *mv, False
            light = LIGHT["dawn"] if night.dawn and night.dawn[0] <= t < night.dawn[1] else LIGHT["sleep"]
            noise = NOISE["noisy_night"] if night.noisy else NOISE["sleep"]
            return light, noise, *MOVEMENT["sleep"], False
        hour = (t % DAY_S) / 3600
        for plan in self._near_plans(t):
            for w in plan.walks:
                if w.start <= t < w.stop:
                    light = LIGHT["outdoor_day"] if 7 <= hour < 17 else LIGHT["outdoor_dark"]
                    return light, NOISE["outdoor"], *MOVEMENT["walking"], True
        plan = next((pl for pl in reversed(self._near_plans(t)) if pl.wake <= t < pl.bed), None)
        mv = MOVEMENT["still"]
        if self.session_at(t) is not None:
            mv = MOVEMENT["handling"]
        elif plan is not None and any(b.start <= t < b.stop for b in plan.bouts):
            mv = MOVEMENT["bout"]
        if plan is not None and plan.work and plan.work[0] <= t < plan.work[1]:
            light = LIGHT["face_down"] if any(a <= t < b for a, b in plan.face_down) else LIGHT["work"]
            return light, NOISE["work"], *mv, False
        if plan is not None and plan.dark_pre_bed and plan.dark_pre_bed[0] <= t < plan.dark_pre_bed[1]:
            light = LIGHT["dark_pre_bed"]
        elif 7 <= hour < 17:
            light = LIGHT["home_day"]
        elif hour >= 17:
            light = LIGHT["home_evening"]
        else:
            light = LIGHT["home_night"]
        if plan is not None and any(a <= t < b for a, b in plan.quiet):
            noise = NOISE["quiet"]
        else:
            noise = NOISE["home_day"] if 7 <= hour < 17 else NOISE["home_evening"]
        return light, noise, *mv, False

    def steps_between(self, a: int, b: int) -> float:
        """Steps taken in [a, b) according to the plans."""
        total = 0.0
        d0 = to_date(a) - timedelta(days=1)
        d1 = to_date(b - 1)
        day = d0
        spm = self.profile.steps_per_m * self.profile.walk_speed_mps
        while day <= d1:
            plan = self.plan(day)
            for w in plan.walks:
                total += _overlap(w.start, w.stop, a, b) * spm
            for x in plan.bouts:
                total += _overlap(x.start, x.stop, a, b) / (x.stop - x.start) * x.steps
            day += timedelta(days=1)
        return total

    def daily_steps(self, day: date) -> float:
        plan = self.plan(day)
        spm = self.profile.steps_per_m * self.profile.walk_speed_mps
        return sum((w.stop - w.start) * spm for w in plan.walks) + sum(x.steps for x in plan.bouts)

    def app_minutes(self, day: date) -> float:
        return sum(s.stop - s.start for s in self.plan(day).sessions) / 60.0

    def context(self, t: int) -> ContextSnapshot:
        s = self.session_at(t)
        light, _, mu, sigma, _ = self._levels(t)
        return ContextSnapshot(
            now=t,
            screen_on=s is not None,
            last_interaction=t if s is not None else None,
            movement_recent=Stats(max(0.0, mu - 2 * sigma), mu, mu + 2 * sigma, sigma),
            current_app=s.app_id if s is not None else None,
            light_avg=light,
            steps_today=self.steps_between(day_start(to_date(t)), t),
            sleep_signal=self.asleep(t),
        )

    def kind_for(self, start: tuple[float, float], end: tuple[float, float]) -> str | None:
        a, _ = self.world.node_of(*start)
        b, _ = self.world.node_of(*end)
        p = self.profile
        if (a, b) == (p.home, p.work):
            return "out"
        if (a, b) == (p.work, p.home):
            return "back"
        return None

    # -- rendering ----------------------------------------------------------
    def render(self, day: date) -> list[Event]:
        """All events of calendar ``day`` at the phone's sampling rates."""
        p = self.profile
        scale = p.noise_scale
        rng = self._rng("render", day.toordinal())
        midnight = day_start(day)
        events: list[tuple[int, int, str, dict]] = []

        times = midnight + np.arange(0, DAY_S, SAMPLE_S)
        levels = [self._levels(int(t)) for t in times]
        light = np.array([lv[0] for lv in levels])
        noise = np.array([lv[1] for lv in levels])
        mu = np.array([lv[2] for lv in levels])
        sigma = np.array([lv[3] for lv in levels])
        walking = np.array([lv[4] for lv in levels])
        for night in (self.night(day), self.night(day + timedelta(days=1))):
            for turn in night.turns:
                k = (turn - midnight) // SAMPLE_S
                if 0 <= k < len(times) and mu[k] == MOVEMENT["sleep"][0]:
                    mu[k], sigma[k] = MOVEMENT["turn"]
        z = rng.normal(0.0, 1.0, (4, len(times)))
        mag = np.abs(mu + sigma * scale * z[0])
        lux = np.maximum(0.0, light * np.exp(0.2 * scale * z[1]) + np.abs(0.3 * scale * z[2]))
        db = noise + 2.5 * scale * z[3]
        steps = np.array([self.steps_between(int(t), int(t) + SAMPLE_S) for t in times])
        for k, t in enumerate(times.tolist()):
            events.append((t, 1, "movement", {"magnitude": round(float(mag[k]), 5), "steps": int(round(steps[k]))}))
            events.append((t, 2, "light", {"lux": round(float(lux[k]), 3)}))
            events.append((t, 3, "noise", {"level": round(float(db[k]), 3)}))

        plans = self._near_plans(midnight + DAY_S // 2)
        walk_spans = []
        for plan in plans:
            for w in plan.walks:
                if w.stop < midnight or w.start >= midnight + DAY_S:
                    continue
                fixes, _ = self.world.walk_fixes(w.path, w.start, p.walk_speed_mps, WALK_FIX_S, rng, p.gps_sigma_m)
                walk_spans.append((w.start, w.stop))
                for t, lat, lon in fixes:
                    if midnight <= t < midnight + DAY_S:
                        events.append((t, 0, "location", {"lat": round(lat, 7), "lon": round(lon, 7)}))
        home = self.world.node_latlon(p.home)
        work = self.world.node_latlon(p.work)
        loc_times = np.arange(midnight, midnight + DAY_S, LOCATION_S)
        jitter = rng.normal(0.0, p.gps_sigma_m, (len(loc_times), 2)) if p.gps_sigma_m > 0 else np.zeros((len(loc_times), 2))
        for k, t in enumerate(loc_times.tolist()):
            if any(a <= t <= b for a, b in walk_spans):
                continue
            at_work = any(pl.work and pl.work[0] <= t < pl.work[1] for pl in plans)
            base = work if at_work else home
            lat, lon = offset_m(*base, float(jitter[k, 0]), float(jitter[k, 1]))
            events.append((t, 0, "location", {"lat": round(lat, 7), "lon": round(lon, 7)}))

        for plan in plans:
            for s in plan.sessions:
                if midnight <= s.start < midnight + DAY_S:
                    events.append((s.start, 5, "screen", {"state": "on"}))
                    events.append((s.start, 6, "app", {"app_id": s.app_id, "app_type": s.app_type, "event": "start"}))
                if midnight <= s.stop < midnight + DAY_S:
                    events.append((s.stop, 7, "app", {"app_id": s.app_id, "app_type": s.app_type, "event": "stop"}))
                    events.append((s.stop, 8, "screen", {"state": "off"}))

        wz = rng.normal(0.0, 1.0, (DAY_S // WEATHER_S, 2))
        for k, t in enumerate(range(midnight, midnight + DAY_S, WEATHER_S)):
            hour = (t % DAY_S) / 3600
            temp = 10 + 5 * math.sin((hour - 9) / 24 * 2 * math.pi) + wz[k, 0] * scale
            events.append((t, 4, "weather", {"temp": round(temp, 2), "humidity": round(70 + 5 * float(wz[k, 1]) * scale, 2)}))

        events.sort(key=lambda e: (e[0], e[1]))
        return [Event(t, kind, payload) for t, _, kind, payload in events]

    def truth_episode(self, day_id: date) -> SleepEpisode:
        """The episode a perfect detector would report for ``day_id``."""
        cfg = self.sleep_config
        runs = self.night(day_id).intervals()
        chunks = merge_chunks(runs, cfg.merge_gap_min * 60)
        spans = runs if cfg.duration_excludes_absorbed_gaps else chunks
        return SleepEpisode(
            day_id,
            chunks[0][0],
            chunks[-1][1],
            sum(e - s for s, e in spans) / 60.0,
            len(chunks) - 1,
            chunks,
        )


def simulate_subject(
    world: World,
    profile: SubjectProfile,
    days: int,
    *,
    seed: int = 0,
    start: date = date(2024, 1, 1),
    sleep_config: SleepConfig | None = None,
) -> tuple[SubjectSim, EventLog, GroundTruth]:
    """Render ``days`` full analysis days starting at ``start``.

    The trace begins at midnight the day before ``start`` so the first
    analysis day (which opens at 18:00 that evening) is complete.
    """
    if days < 1:
        raise ValueError("days must be at least 1")
    sim = SubjectSim(profile, world, seed, start, sleep_config)
    events: list[Event] = []
    first = start - timedelta(days=1)
    for k in range(days + 1):
        events.extend(sim.render(first + timedelta(days=k)))
    analysis = [start + timedelta(days=k) for k in range(days)]
    plans = [sim.plan(first + timedelta(days=k)) for k in range(days + 1)]
    truth = GroundTruth(
        profile.subject_id,
        analysis,
        {d: sim.night(d).intervals() for d in analysis},
        [w for p in plans for w in p.walks],
        [s for p in plans for s in p.sessions],
    )
    return sim, EventLog(profile.subject_id, events), truth


def synth_trace(
    world: World,
    profile: SubjectProfile,
    days: int,
    *,
    seed: int = 0,
    start: date = date(2024, 1, 1),
) -> tuple[EventLog, GroundTruth]:
    """Event log plus ground truth (sleep intervals, walks, app sessions)."""
    _, log, truth = simulate_subject(world, profile, days, seed=seed, start=start)
    return log, truth
