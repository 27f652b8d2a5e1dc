"""Scenario runner: a learning phase shared by all arms, then nudging.

Phase 1 renders the learning days, trains the subject's sleep detector on
ground-truth labels (standing in for confirmed feedback), computes the best
profile, mines recurring walks and fits the interruptibility model from
randomly timed break probes. Phase 2 replays the same subjects under each
arm: ``control`` (no advice), ``context_gated`` (the nudge engine) and
``random_timing`` (advice posted at random moments, frequency matched to the
gated arm).
"""

from __future__ import annotations

import copy
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from datetime import date, timedelta
from typing import Sequence

import numpy as np

from ..coredata import SLOT_S, AppSession, CoreConfig, EventLog, FeatureRecord, aggregate_records, app_sessions
from ..correlate import BestProfile, CorrelateConfig, best_profile, extract_daily_params
from ..mlkit import ClassifierSpec, EvalMetrics, cross_validate
from ..nudge import (
    Advice,
    ContextSnapshot,
    InterruptFeatureTracker,
    InterruptibilityModel,
    NudgeConfig,
    NudgeEngine,
    train_interruptibility,
    update_pattern,
)
from ..rng import derive_seed, substream
from ..sleep import (
    MODALITIES,
    SleepConfig,
    SleepDetector,
    SleepEpisode,
    SleepWindow,
    WindowBuilder,
    incorporate_feedback,
    label_windows,
    learning_curve,
    merge_chunks,
    windows_dataset,
)
from ..timeutil import DAY_S, analysis_day, anchor_of, day_start, to_date
from ..trajectory import (
    Fix,
    PoiRegistry,
    Route,
    TrajectoryConfig,
    TrajectoryPattern,
    is_suppressed,
    mine_patterns,
    propose_alternative,
    route_string,
    segment_routes,
)
from .agent import agent_respond
from .profiles import SubjectProfile
from .synth import SubjectSim, simulate_subject
from .world import World

log = logging.getLogger(__name__)

ARMS = ("control", "context_gated", "random_timing")
ADVICE_KINDS = ("steps", "break", "bedtime")
TICK_S = 300


@dataclass(frozen=True)
class SimConfig:
    learn_days: int = 10
    act_days: int = 10
    start_date: str = "2024-01-01"
    evaluate_sleep: bool = True
    cv_folds: int = 10
    break_probe_prob: float = 0.25
    random_break_gap_min: int = 30
    random_break_gap_max: int = 60
    random_bedtime_window_min: int = 180


@dataclass
class Funnel:
    generated: int = 0
    seen: int = 0
    accepted: int = 0

    def add(self, other: "Funnel") -> None:
        self.generated += other.generated
        self.seen += other.seen
        self.accepted += other.accepted

    @property
    def seen_rate(self) -> float:
        return self.seen / self.generated if self.generated else math.nan

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.generated if self.generated else math.nan


def funnel_from_log(advices: Sequence[Advice]) -> dict[str, Funnel]:
    out: dict[str, Funnel] = {}
    for a in advices:
        f = out.setdefault(a.kind, Funnel())
        f.generated += 1
        f.seen += a.delivered_at is not None
        f.accepted += a.response == "accepted"
    return out


@dataclass
class SubjectOutcome:
    subject_id: str
    steps_before: list[float]
    steps_during: list[float]
    weekday_during: list[bool]
    app_before: list[float]
    app_during: list[float]
    bed_before: list[float]
    bed_after: list[float]
    sleep_before: list[float]
    sleep_after: list[float]
    funnel: dict[str, Funnel]
    patterns: int
    interrupt_fallback: bool


def _mean(xs) -> float:
    xs = [x for x in xs if not (isinstance(x, float) and math.isnan(x))]
    return float(np.mean(xs)) if xs else math.nan


@dataclass
class ArmReport:
    arm: str
    subjects: list[SubjectOutcome]

    def funnel(self, kinds: Sequence[str] | None = None) -> Funnel:
        total = Funnel()
        for s in self.subjects:
            for k, f in s.funnel.items():
                if kinds is None or k in kinds:
                    total.add(f)
        return total

    def funnel_by_kind(self) -> dict[str, Funnel]:
        out: dict[str, Funnel] = {}
        for s in self.subjects:
            for k, f in s.funnel.items():
                out.setdefault(k, Funnel()).add(f)
        return out

    @property
    def acceptance_rate(self) -> float:
        return self.funnel(ADVICE_KINDS).acceptance_rate

    def steps_during(self, weekdays_only: bool = False) -> float:
        vals = []
        for s in self.subjects:
            vals.extend(v for v, wd in zip(s.steps_during, s.weekday_during) if wd or not weekdays_only)
        return _mean(vals)

    def daily_steps_series(self, weekdays_only: bool = True) -> list[float]:
        """Mean over subjects of each nudging day's steps."""
        n = len(self.subjects[0].steps_during) if self.subjects else 0
        out = []
        for k in range(n):
            if weekdays_only and not self.subjects[0].weekday_during[k]:
                continue
            out.append(_mean([s.steps_during[k] for s in self.subjects]))
        return out

    def summary(self) -> dict:
        by_kind = self.funnel_by_kind()
        return {
            "arm": self.arm,
            "acceptance_rate": self.acceptance_rate,
            "funnel": {k: asdict(f) for k, f in sorted(by_kind.items())},
            "mean_daily_steps_before": _mean([_mean(s.steps_before) for s in self.subjects]),
            "mean_daily_steps_during": _mean([_mean(s.steps_during) for s in self.subjects]),
            "app_minutes_before": _mean([_mean(s.app_before) for s in self.subjects]),
            "app_minutes_during": _mean([_mean(s.app_during) for s in self.subjects]),
            "bed_time_var_before": _mean([float(np.var(s.bed_before)) for s in self.subjects]),
            "bed_time_var_after": _mean([float(np.var(s.bed_after)) for s in self.subjects]),
            "sleep_hours_before": _mean([_mean(s.sleep_before) for s in self.subjects]),
            "sleep_hours_after": _mean([_mean(s.sleep_after) for s in self.subjects]),
        }


@dataclass
class ScenarioReport:
    seed: int
    config: SimConfig
    arms: dict[str, ArmReport]
    sleep_metrics: dict[str, dict[str, float]] = field(default_factory=dict)
    learning_curves: dict[str, list[float]] = field(default_factory=dict)
    patterns: dict[str, int] = field(default_factory=dict)
    advice_logs: dict[str, list[Advice]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "config": asdict(self.config),
            "arms": {
                name: {
                    **arm.summary(),
                    "subjects": [
                        {**asdict(s), "funnel": {k: asdict(f) for k, f in sorted(s.funnel.items())}}
                        for s in arm.subjects
                    ],
                }
                for name, arm in self.arms.items()
            },
            "sleep_metrics": self.sleep_metrics,
            "learning_curves": self.learning_curves,
            "patterns": self.patterns,
        }

    def to_json(self) -> str:
        return json.dumps(_clean(self.to_dict()), indent=1, sort_keys=True)


def _clean(obj):
    if isinstance(obj, float):
        return None if math.isnan(obj) else round(obj, 9)
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


# ------------------------------------------------------------------- learning


@dataclass
class Settings:
    core: CoreConfig = field(default_factory=CoreConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    sleep: SleepConfig = field(default_factory=SleepConfig)
    spec: ClassifierSpec = field(default_factory=ClassifierSpec)
    correlate: CorrelateConfig = field(default_factory=CorrelateConfig)
    trajectory: TrajectoryConfig = field(default_factory=TrajectoryConfig)
    nudge: NudgeConfig = field(default_factory=NudgeConfig)


@dataclass
class SubjectState:
    """Everything an arm carries forward for one subject."""

    sim: SubjectSim
    builder: WindowBuilder
    detector: SleepDetector
    tracker: InterruptFeatureTracker
    patterns: list[TrajectoryPattern]
    best: BestProfile | None
    interrupt: InterruptibilityModel
    thresholds: tuple[float, float]
    records: dict[date, list[FeatureRecord]]
    windows: dict[date, list[SleepWindow]] = field(default_factory=dict)
    episodes: dict[date, SleepEpisode] = field(default_factory=dict)
    observed: set = field(default_factory=set)
    log: list[Advice] = field(default_factory=list)
    break_days: dict[date, int] = field(default_factory=dict)


def _day_records(log_: EventLog, day: date, core: CoreConfig) -> list[FeatureRecord]:
    m = day_start(day)
    return aggregate_records(
        log_, step_threshold=core.step_threshold, refractory_s=core.refractory_s, span=(m, m + DAY_S - 1)
    )


def _analysis_records(records: dict[date, list[FeatureRecord]], day_id: date) -> list[FeatureRecord]:
    lo = anchor_of(day_id)
    out = []
    for d in (day_id - timedelta(days=1), day_id):
        out.extend(r for r in records.get(d, []) if lo <= r.slot_start < lo + DAY_S)
    return out


def _observe_sessions(st: SubjectState, t: int) -> None:
    for d in (to_date(t) - timedelta(days=1), to_date(t)):
        for s in st.sim.plan(d).sessions:
            key = (s.start, s.app_id)
            if s.stop <= t and key not in st.observed:
                st.observed.add(key)
                st.tracker.observe(AppSession(s.app_id, s.app_type, s.start, s.stop))


def _break_factor(profile: SubjectProfile, sim: SubjectSim, t: int) -> float:
    s = sim.session_at(t)
    engaged = (s is not None and t - s.start >= 8 * 60) or (t % DAY_S) >= 20 * 3600
    return profile.break_engaged_factor if engaged else profile.break_idle_factor


def _routes(
    world: World, log_: EventLog, records: list[FeatureRecord], days: list[date], cfg: TrajectoryConfig, registry: PoiRegistry
) -> list[Route]:
    fixes_by_day: dict[date, list[Fix]] = {}
    for ev in log_.events:
        if ev.kind == "location":
            fixes_by_day.setdefault(to_date(ev.t), []).append(Fix(ev.t, ev.payload["lat"], ev.payload["lon"]))
    starts = np.array([r.slot_start for r in records])
    out = []
    for d in days:
        routes, _ = segment_routes(fixes_by_day.get(d, []), d, cfg, registry)
        for r in routes:
            try:
                r.street_string = route_string(r, world)
            except LookupError:
                continue
            a = int(np.searchsorted(starts, r.start_t - SLOT_S, side="right"))
            b = int(np.searchsorted(starts, r.end_t, side="right"))
            steps = 0.0
            for rec in records[a:b]:
                ov = max(0, min(rec.slot_start + SLOT_S, r.end_t) - max(rec.slot_start, r.start_t))
                steps += rec.steps * ov / SLOT_S
            r.steps = steps
            out.append(r)
    return out


def _thresholds(windows: list[SleepWindow]) -> tuple[float, float]:
    """20th percentiles of evening movement std and light among awake windows."""
    mv, lx = [], []
    for w in windows:
        if w.label == 0 and (w.window_start % DAY_S) >= 20 * 3600:
            mv.append(w.features[3])
            lx.append(w.features[9])
    if not mv:
        return 0.05, 5.0
    return float(np.percentile(mv, 20)), float(np.percentile(lx, 20))


def sleep_evaluation(
    windows: Sequence[SleepWindow], spec: ClassifierSpec, k: int, seed: int, subject: str = ""
) -> dict[str, EvalMetrics]:
    """Cross-validated metrics for all features and each single modality."""
    ds = windows_dataset(windows, subject)
    out = {"all": cross_validate(ds, spec, k, seed)}
    for name, cols in MODALITIES.items():
        out[name] = cross_validate(ds.select(list(cols)), spec, k, seed)
    return out


def learn_subject(
    world: World, profile: SubjectProfile, seed: int, settings: Settings
) -> tuple[SubjectState, dict]:
    cfg = settings.sim
    start = date.fromisoformat(cfg.start_date)
    sim = SubjectSim(profile, world, seed, start, settings.sleep)
    st = SubjectState(
        sim=sim,
        builder=WindowBuilder(settings.sleep),
        detector=SleepDetector(settings.spec, settings.sleep, profile.subject_id),
        tracker=InterruptFeatureTracker(),
        patterns=[],
        best=None,
        interrupt=InterruptibilityModel(None, {}, 0),
        thresholds=(0.05, 5.0),
        records={},
    )
    cal_days = [start + timedelta(days=k) for k in range(-1, cfg.learn_days)]
    probes: list[tuple] = []
    events = []
    for day in cal_days:
        rng = substream(seed, profile.subject_id, "probe", day.toordinal())
        last_probe = -(10**9)
        midnight = day_start(day)
        for k in range(DAY_S // TICK_S):
            t = midnight + k * TICK_S
            _observe_sessions(st, t)
            s = sim.session_at(t)
            u = rng.random(2)
            if s is None or t - last_probe < 30 * 60 or u[0] >= cfg.break_probe_prob:
                continue
            ctx = sim.context(t)
            feats = st.tracker.features(t, s.app_id, s.start, ctx.movement_recent)
            resp = agent_respond(profile, t, True, rng, factor=_break_factor(profile, sim, t))
            probes.append((feats, resp.accepted))
            last_probe = t
            if resp.accepted:
                sim.truncate_session(t)
        day_events = sim.render(day)
        events.extend(day_events)
        st.records[day] = _day_records(EventLog(profile.subject_id, day_events), day, settings.core)
    log_ = EventLog(profile.subject_id, events)

    learn_ids = [start + timedelta(days=k) for k in range(cfg.learn_days)]
    prev = None
    all_windows: list[SleepWindow] = []
    for d in learn_ids:
        ws = st.builder.build(d, _analysis_records(st.records, d), prev)
        label_windows(ws, sim.night(d).intervals())
        ep = sim.truth_episode(d)
        st.builder.observe_episode(ep)
        st.windows[d] = ws
        st.episodes[d] = ep
        all_windows.extend(ws)
        prev = ep
    st.detector.add_training(all_windows)
    st.detector.fit(derive_seed(seed, profile.subject_id, "detector"))
    st.thresholds = _thresholds(all_windows)

    records = [r for d in cal_days for r in st.records[d]]
    rows = extract_daily_params(records, app_sessions(log_), st.episodes, settings.correlate)
    try:
        st.best = best_profile(rows, settings.correlate)
    except ValueError as exc:
        log.warning("subject %s: no best profile (%s)", profile.subject_id, exc)

    registry = PoiRegistry(settings.trajectory.poi_merge_radius_m)
    routes = _routes(world, log_, records, cal_days, settings.trajectory, registry)
    st.patterns = mine_patterns(routes, settings.trajectory, registry)

    st.interrupt = train_interruptibility(
        probes, settings.spec, derive_seed(seed, profile.subject_id, "interrupt"), min_rows=settings.nudge.min_interrupt_rows
    )

    extra: dict = {}
    if cfg.evaluate_sleep:
        evals = sleep_evaluation(all_windows, settings.spec, cfg.cv_folds, derive_seed(seed, profile.subject_id, "cv"), profile.subject_id)
        extra["sleep_metrics"] = {k: v.as_dict() for k, v in evals.items()}
        curve = learning_curve([st.windows[d] for d in learn_ids], settings.spec, seed, settings.sleep)
        extra["learning_curve"] = [m.accuracy for m in curve]
    return st, extra


# ---------------------------------------------------------------------- arms


def _next_session_start(sim: SubjectSim, t: int, until: int) -> int | None:
    best = None
    for d in (to_date(t), to_date(t) + timedelta(days=1)):
        for s in sim.plan(d).sessions:
            if t < s.start < until and (best is None or s.start < best):
                best = s.start
    return best


class _ArmRunner:
    def __init__(self, arm: str, world: World, seed: int, settings: Settings, st: SubjectState) -> None:
        self.arm = arm
        self.world = world
        self.seed = seed
        self.settings = settings
        self.st = st
        self.profile = st.sim.profile
        self.sid = self.profile.subject_id
        self.refit = False
        self.engine: NudgeEngine | None = None
        self.break_caps: dict[date, int] | None = None
        self._counter = 0
        if arm == "context_gated":
            self.engine = NudgeEngine(
                settings.nudge,
                patterns=st.patterns,
                best=st.best,
                alternatives=world,
                break_scorer=self._score_break,
                sleep_source=self._sleep_source,
                bedtime_thresholds=st.thresholds,
                trajectory_config=settings.trajectory,
            )

    # -- hooks for the engine ---------------------------------------------
    def _score_break(self, ctx: ContextSnapshot) -> float:
        s = self.st.sim.session_at(ctx.now)
        if s is None:
            return 0.0
        feats = self.st.tracker.features(ctx.now, s.app_id, s.start, ctx.movement_recent)
        return self.st.interrupt.accept_probability(feats)

    def _sleep_source(self, now: int):
        horizon = analysis_day(now) - timedelta(days=1)
        return [ep for d, ep in sorted(self.st.episodes.items()) if d >= horizon and d not in self._learned_days]

    # -- main loop ----------------------------------------------------------
    def run(self, act_days: list[date]) -> None:
        self._learned_days = set(self.st.episodes)
        for day in act_days:
            self._run_day(day)

    def _rng(self, *names) -> np.random.Generator:
        return substream(self.seed, self.sid, *names)

    def _run_day(self, day: date) -> None:
        st, sim = self.st, self.st.sim
        plan = sim.plan(day)
        midnight = day_start(day)
        if self.arm != "control":
            rng = self._rng("respond", day.toordinal())
            queue = self._random_schedule(day, plan) if self.arm == "random_timing" else []
            for k in range(DAY_S // TICK_S):
                t = midnight + k * TICK_S
                _observe_sessions(st, t)
                ctx = sim.context(t)
                if self.engine is not None:
                    for adv in self.engine.tick(t, ctx):
                        self._respond_gated(adv, ctx, rng)
                else:
                    while queue and queue[0][0] <= t:
                        item = queue.pop(0)
                        self._respond_random(item, ctx, rng)
        if self.engine is not None:
            self.st.break_days[day] = sum(
                1 for a in self.engine.log if a.kind == "break" and a.created_at // DAY_S == midnight // DAY_S
            )
            self._detect(day)

    # -- gated arm ------------------------------------------------------------
    def _respond_gated(self, adv: Advice, ctx: ContextSnapshot, rng: np.random.Generator) -> None:
        sim, prof, t = self.st.sim, self.profile, ctx.now
        eng = self.engine
        if adv.kind == "steps":
            trip = adv.expiry
            resp = agent_respond(prof, t, ctx.in_use, rng, ideal_time=trip - 15 * 60)
            eng.record_response(adv.advice_id, "accepted" if resp.accepted else "rejected", t)
            if resp.accepted:
                self._reroute(eng.patterns[adv.payload["pattern_id"]], adv.payload["street_string"], t)
        elif adv.kind == "break":
            resp = agent_respond(prof, t, ctx.in_use, rng, factor=_break_factor(prof, sim, t))
            details = {"contents": "water"} if resp.accepted else None
            eng.record_response(adv.advice_id, "accepted" if resp.accepted else "rejected", t, details=details)
            if resp.accepted:
                sim.truncate_session(t)
        elif adv.kind == "bedtime":
            day_id = analysis_day(t)
            best_t = anchor_of(day_id) + int(round(self.st.best.best_bed_time_min * 60))
            resp = agent_respond(prof, t, ctx.in_use, rng, ideal_time=best_t - self.settings.nudge.bedtime_lead_min * 60)
            eng.record_response(adv.advice_id, "accepted" if resp.accepted else "rejected", t)
            if resp.accepted:
                sim.shift_bedtime(day_id, best_t, prof.bed_compliance, t)
        elif adv.kind == "sleep_confirm":
            day_id = date.fromisoformat(adv.day_id)
            ok = float(rng.random()) < prof.confirm_prob
            if not ok:
                eng.record_response(adv.advice_id, "rejected", t)
                return
            detected = self.st.episodes[day_id]
            truth = merge_chunks(sim.night(day_id).intervals(), self.settings.sleep.merge_gap_min * 60)
            correction = None if truth == detected.chunks else (truth[0][0], truth[-1][1])
            eng.record_response(adv.advice_id, "accepted", t, correction=correction)
            fb = eng.feedback_for(adv.day_id)
            windows = self.st.windows.get(day_id)
            if fb is not None and windows:
                self.st.detector.add_training(incorporate_feedback(detected, fb, windows))
                self.refit = True

    def _reroute(self, pattern: TrajectoryPattern, street_string: str, now: int) -> None:
        sim = self.st.sim
        kind = sim.kind_for((pattern.start_lat, pattern.start_lon), (pattern.end_lat, pattern.end_lon))
        if kind is None:
            return
        a, _ = self.world.node_of(pattern.start_lat, pattern.start_lon)
        b, _ = self.world.node_of(pattern.end_lat, pattern.end_lon)
        path = self.world.find_path(a, b, street_string)
        if path is not None:
            sim.reroute(kind, path, now)

    def _detect(self, day: date) -> None:
        """Render the finished calendar day and run detection for the analysis
        day that closed at 18:00."""
        st, sim = self.st, self.st.sim
        events = sim.render(day)
        st.records[day] = _day_records(EventLog(self.sid, events), day, self.settings.core)
        prev = st.episodes.get(day - timedelta(days=1))
        windows = st.builder.build(day, _analysis_records(st.records, day), prev)
        st.records.pop(day - timedelta(days=2), None)
        if self.refit:
            st.detector.fit(derive_seed(self.seed, self.sid, "detector", day.toordinal()))
            self.refit = False
        episode = st.detector.detect(windows)
        st.windows[day] = windows
        st.builder.observe_episode(episode)
        if episode is not None:
            st.episodes[day] = episode

    # -- random arm -------------------------------------------------------------
    def _random_schedule(self, day: date, plan) -> list[tuple]:
        cfg = self.settings.sim
        rng = self._rng("random_arm", day.toordinal())
        midnight = day_start(day)
        items: list[tuple] = []

        def on_tick(t: float) -> int:
            return int(math.ceil(t / TICK_S)) * TICK_S

        for p in sorted(self.st.patterns, key=lambda p: p.pattern_id):
            start = midnight + int(round(p.start_clock_min * 60))
            u = float(rng.random())
            if day.weekday() in p.weekdays and start > plan.wake + TICK_S:
                items.append((on_tick(plan.wake + u * (start - plan.wake)), 0, "steps", p.pattern_id, start))

        times = []
        t = plan.wake
        while True:
            t += int(rng.integers(cfg.random_break_gap_min, cfg.random_break_gap_max + 1)) * 60
            if t >= plan.bed:
                break
            times.append(t)
        cap = len(times) if self.break_caps is None else min(len(times), self.break_caps.get(day, 0))
        chosen = sorted(rng.choice(len(times), size=cap, replace=False).tolist()) if cap else []
        for k in chosen:
            items.append((on_tick(times[k]), 1, "break", None, None))

        if self.st.best is not None:
            tonight = day + timedelta(days=1)
            best_t = anchor_of(tonight) + int(round(self.st.best.best_bed_time_min * 60))
            lo = best_t - cfg.random_bedtime_window_min * 60
            u = float(rng.random())
            items.append((on_tick(lo + u * (best_t - lo)), 2, "bedtime", None, best_t))
        items.sort(key=lambda x: (x[0], x[1]))
        return items

    def _new_advice(self, kind: str, target: str, t: int, **kw) -> Advice:
        self._counter += 1
        adv = Advice(f"{kind}-{self._counter:06d}", kind, target, to_date(t).isoformat(), t, **kw)
        self.st.log.append(adv)
        return adv

    def _respond_random(self, item: tuple, ctx: ContextSnapshot, rng: np.random.Generator) -> None:
        t, _, kind, pid, when = item
        st, sim, prof = self.st, self.st.sim, self.profile
        if kind == "steps":
            p = next(p for p in st.patterns if p.pattern_id == pid)
            if st.best is None or is_suppressed(p, self.settings.trajectory.max_consecutive_rejections):
                return
            proposal = propose_alternative(
                p, self.world, st.best.best_daily_steps, ctx.steps_today, now=t, config=self.settings.trajectory
            )
            if proposal is None:
                return
            payload = {
                "pattern_id": pid,
                "street_string": proposal.street_string,
                "alt_distance": proposal.alt_distance,
                "est_steps": proposal.est_steps,
            }
            adv = self._new_advice("steps", str(pid), t, payload=payload, expiry=when)
            seen_at, in_use = self._seen(ctx, t, when)
            resp = agent_respond(prof, seen_at, in_use, rng, ideal_time=when - 15 * 60)
            self._settle(adv, resp)
            if resp.seen:
                update_pattern(p, resp.accepted, payload, self.settings.nudge.adopt_accepted_route)
            if resp.accepted:
                self._reroute(p, proposal.street_string, seen_at)
        elif kind == "break":
            plan_bed = sim.plan(to_date(t)).bed
            adv = self._new_advice("break", ctx.current_app or "phone", t, payload={"suggestion": "drink_or_snack"})
            seen_at, in_use = self._seen(ctx, t, min(plan_bed, t + 2 * 3600))
            factor = _break_factor(prof, sim, seen_at) if seen_at is not None else 1.0
            resp = agent_respond(prof, seen_at, in_use, rng, factor=factor)
            self._settle(adv, resp)
            if resp.accepted:
                sim.truncate_session(seen_at)
        elif kind == "bedtime":
            adv = self._new_advice("bedtime", "relax", t, expiry=when)
            seen_at, in_use = self._seen(ctx, t, when)
            resp = agent_respond(
                prof, seen_at, in_use, rng, ideal_time=when - self.settings.nudge.bedtime_lead_min * 60
            )
            self._settle(adv, resp)
            if resp.accepted:
                sim.shift_bedtime(analysis_day(when), when, prof.bed_compliance, seen_at)

    def _seen(self, ctx: ContextSnapshot, t: int, until: int) -> tuple[int | None, bool]:
        if ctx.in_use:
            return t, True
        return _next_session_start(self.st.sim, t, until), False

    @staticmethod
    def _settle(adv: Advice, resp) -> None:
        if resp.seen:
            adv.delivered_at = resp.seen_at
            adv.response = "accepted" if resp.accepted else "rejected"
        else:
            adv.expired = True

    def advice_log(self) -> list[Advice]:
        return self.engine.log if self.engine is not None else list(self.st.log)


def _outcome(st: SubjectState, runner: _ArmRunner, settings: Settings, learn: list[date], act: list[date]) -> SubjectOutcome:
    sim = st.sim
    night_before = learn
    night_after = [d + timedelta(days=1) for d in act]

    def bed(d):
        return (sim.night(d).bed - anchor_of(d)) / 60.0

    return SubjectOutcome(
        subject_id=sim.profile.subject_id,
        steps_before=[sim.daily_steps(d) for d in learn],
        steps_during=[sim.daily_steps(d) for d in act],
        weekday_during=[d.weekday() < 5 for d in act],
        app_before=[sim.app_minutes(d) for d in learn],
        app_during=[sim.app_minutes(d) for d in act],
        bed_before=[bed(d) for d in night_before],
        bed_after=[bed(d) for d in night_after],
        sleep_before=[sim.night(d).duration_min / 60 for d in night_before],
        sleep_after=[sim.night(d).duration_min / 60 for d in night_after],
        funnel=funnel_from_log(runner.advice_log()),
        patterns=len(st.patterns),
        interrupt_fallback=st.interrupt.fallback,
    )


def run_scenario(
    world: World,
    profiles: Sequence[SubjectProfile],
    arms: Sequence[str] = ARMS,
    seed: int = 0,
    settings: Settings | None = None,
) -> ScenarioReport:
    """Run the learning phase once per subject, then every arm on copies of it."""
    settings = settings or Settings()
    cfg = settings.sim
    if not profiles:
        raise ValueError("scenario needs at least one subject")
    unknown = [a for a in arms if a not in ARMS]
    if unknown or not arms:
        raise ValueError(f"unknown or empty arms: {unknown or arms}")
    if cfg.learn_days < 2 or cfg.act_days < 1:
        raise ValueError("need at least 2 learning days and 1 nudging day")
    start = date.fromisoformat(cfg.start_date)
    learn = [start + timedelta(days=k) for k in range(cfg.learn_days)]
    act = [start + timedelta(days=cfg.learn_days + k) for k in range(cfg.act_days)]
    ordered = sorted(arms, key=lambda a: ("context_gated", "random_timing", "control").index(a))

    report = ScenarioReport(seed, cfg, {a: ArmReport(a, []) for a in arms})
    metric_sums: dict[str, list[dict]] = {}
    for profile in sorted(profiles, key=lambda p: p.subject_id):
        learned, extra = learn_subject(world, profile, seed, settings)
        report.patterns[profile.subject_id] = len(learned.patterns)
        for name, m in extra.get("sleep_metrics", {}).items():
            metric_sums.setdefault(name, []).append(m)
        if "learning_curve" in extra:
            report.learning_curves[profile.subject_id] = extra["learning_curve"]
        caps = None
        for arm in ordered:
            st = copy.deepcopy(learned)
            runner = _ArmRunner(arm, world, seed, settings, st)
            if arm == "random_timing":
                runner.break_caps = caps
            runner.run(act)
            if arm == "context_gated":
                caps = dict(st.break_days)
            report.arms[arm].subjects.append(_outcome(st, runner, settings, learn, act))
            report.advice_logs[f"{arm}/{profile.subject_id}"] = runner.advice_log()
    for name, ms in metric_sums.items():
        report.sleep_metrics[name] = {k: _mean([m[k] for m in ms]) for k in ms[0]}
    return report


def sleep_corpus(
    world: World,
    profiles: Sequence[SubjectProfile],
    days: int,
    seed: int = 0,
    *,
    start: date = date(2024, 1, 1),
    sleep_config: SleepConfig | None = None,
    core: CoreConfig | None = None,
) -> dict[str, list[list[SleepWindow]]]:
    """Ground-truth-labelled windows per subject and analysis day.

    The sleep-time features of each day come from the previous day's true
    episode, as they would after the subject confirmed it.
    """
    out = {}
    for profile in profiles:
        sim, log_, truth = simulate_subject(world, profile, days, seed=seed, start=start, sleep_config=sleep_config)
        core = core or CoreConfig()
        records = aggregate_records(log_, step_threshold=core.step_threshold, refractory_s=core.refractory_s)
        builder = WindowBuilder(sleep_config)
        starts = np.array([r.slot_start for r in records])
        corpus, prev = [], None
        for d in truth.analysis_days:
            lo = anchor_of(d)
            a, b = np.searchsorted(starts, lo), np.searchsorted(starts, lo + DAY_S)
            ws = builder.build(d, records[a:b], prev)
            label_windows(ws, truth.sleep[d])
            prev = sim.truth_episode(d)
            builder.observe_episode(prev)
            corpus.append(ws)
        out[profile.subject_id] = corpus
    return out
