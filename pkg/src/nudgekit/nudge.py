"""Proactive nudging services as a clock-driven state machine.

The engine never reads the wall clock: callers feed it ticks (5-minute
granularity) with a :class:`ContextSnapshot`, and user responses through
:meth:`NudgeEngine.record_response`. Every delivery requires the phone to be
in use; sleep confirmations queue until it is.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from datetime import date
from typing import Callable, Iterable, Sequence

import numpy as np

from .coredata import AppSession, Stats
from .correlate import BestProfile
from .mlkit import ClassifierModel, ClassifierSpec, Dataset, train
from .sleep import FeedbackResponse, SleepEpisode
from .timeutil import DAY_S, anchor_of, analysis_day, format_ts, to_date, day_start
from .trajectory import (
    AlternativesProvider,
    TrajectoryConfig,
    TrajectoryPattern,
    propose_alternative,
)

log = logging.getLogger(__name__)

KINDS = ("steps", "break", "bedtime", "sleep_confirm")


@dataclass(frozen=True)
class NudgeConfig:
    tick_min: int = 5
    advice_lead_min: int = 30
    bedtime_lead_min: int = 60
    scan_interval_min: int = 15
    sleep_check_interval_min: int = 30
    break_min_gap_min: int = 30
    break_movement_threshold: float = 0.2
    in_use_window_min: int = 5
    accept_threshold: float = 0.5
    max_consecutive_rejections: int = 3
    suppression_decay_days: int = 0  # 0 = suppression never decays
    adopt_accepted_route: bool = True
    bedtime_volume_decay: float = 0.9
    min_interrupt_rows: int = 50


@dataclass(frozen=True)
class ContextSnapshot:
    now: int
    screen_on: bool = False
    last_interaction: int | None = None
    movement_recent: Stats | None = None
    current_app: str | None = None
    light_avg: float | None = None
    steps_today: float = 0.0
    sleep_signal: bool = False
    in_use_window_s: int = 300

    @property
    def in_use(self) -> bool:
        return (
            self.screen_on
            and self.last_interaction is not None
            and 0 <= self.now - self.last_interaction <= self.in_use_window_s
        )


@dataclass
class Advice:
    advice_id: str
    kind: str
    target: str
    day_id: str
    created_at: int
    payload: dict = field(default_factory=dict)
    delivered_at: int | None = None
    response: str | None = None  # accepted | rejected
    expiry: int | None = None
    expired: bool = False
    not_before: int | None = None

    def log_record(self) -> dict:
        return {
            "advice_id": self.advice_id,
            "kind": self.kind,
            "created_at": format_ts(self.created_at),
            "delivered_at": None if self.delivered_at is None else format_ts(self.delivered_at),
            "response": self.response,
            "payload": self.payload,
        }


@dataclass
class BedtimeSession:
    session_id: str
    trigger_at: int
    started_at: int
    volume: float = 1.0
    effects: tuple[str, ...] = ("rain", "waves")
    ended_at: int | None = None
    termination: str | None = None  # user | service
    volume_history: list[float] = field(default_factory=list)

    @property
    def active(self) -> bool:
        return self.ended_at is None

    def log_entry(self) -> dict:
        return {
            "session_id": self.session_id,
            "effects": list(self.effects),
            "start": format_ts(self.started_at),
            "end": None if self.ended_at is None else format_ts(self.ended_at),
            "length_min": None if self.ended_at is None else (self.ended_at - self.started_at) / 60,
            "termination": self.termination,
        }


def bedtime_step(
    session: BedtimeSession,
    context: ContextSnapshot,
    sleep_signal: bool,
    *,
    movement_threshold: float,
    light_threshold: float,
    decay: float = 0.9,
) -> BedtimeSession:
    """Advance a relaxation session by one 5-minute step.

    Quiet and dark surroundings lower the volume geometrically; a sleeping
    window from the detector ends the session on the service's side.
    """
    if not session.active:
        return session
    mv = context.movement_recent
    still = mv is not None and mv.std < movement_threshold
    dark = context.light_avg is not None and context.light_avg < light_threshold
    if still and dark:
        session.volume *= decay
    session.volume_history.append(session.volume)
    if sleep_signal:
        session.ended_at = context.now
        session.termination = "service"
    return session


def stop_session(session: BedtimeSession, now: int) -> BedtimeSession:
    if session.active:
        session.ended_at = now
        session.termination = "user"
    return session


# --------------------------------------------------------- interruptibility


@dataclass(frozen=True)
class InterruptFeatures:
    weekday: int
    app_id: str
    continuous_use: tuple[float, float, float, float]
    start_clock_hour: int
    same_app_count: tuple[float, float, float, float]
    movement: tuple[float, float, float, float]

    NAMES = (
        "weekday",
        "app_code",
        "cont_min",
        "cont_avg",
        "cont_max",
        "cont_std",
        "start_hour",
        "count_min",
        "count_avg",
        "count_max",
        "count_std",
        "move_min",
        "move_avg",
        "move_max",
        "move_std",
    )

    def vector(self, vocab: dict[str, int]) -> list[float]:
        code = vocab.get(self.app_id, math.nan)
        return [
            float(self.weekday),
            float(code),
            *self.continuous_use,
            float(self.start_clock_hour),
            *self.same_app_count,
            *self.movement,
        ]


class InterruptFeatureTracker:
    """Computes break-advice features from the app sessions seen so far."""

    def __init__(self) -> None:
        self._durations: dict[str, list[float]] = {}
        self._daily_counts: dict[str, dict[date, int]] = {}

    def observe(self, session: AppSession) -> None:
        self._durations.setdefault(session.app_id, []).append(float(session.stop - session.start))
        day = to_date(session.start)
        counts = self._daily_counts.setdefault(session.app_id, {})
        counts[day] = counts.get(day, 0) + 1

    def features(
        self, now: int, app_id: str, session_start: int, movement: Stats | None
    ) -> InterruptFeatures:
        durs = list(self._durations.get(app_id, [])) + [float(now - session_start)]
        today = to_date(now)
        counts = dict(self._daily_counts.get(app_id, {}))
        counts[today] = counts.get(today, 0) + 1
        c = Stats.of([float(v) for v in counts.values()])
        mv = movement.as_tuple() if movement is not None else (math.nan,) * 4
        return InterruptFeatures(
            weekday=today.weekday(),
            app_id=app_id,
            continuous_use=Stats.of(durs).as_tuple(),
            start_clock_hour=int((session_start % DAY_S) // 3600),
            same_app_count=c.as_tuple(),
            movement=mv,
        )


@dataclass
class InterruptibilityModel:
    model: ClassifierModel | None
    vocab: dict[str, int]
    n_rows: int

    @property
    def fallback(self) -> bool:
        """True when too little data was available: every moment counts as eligible."""
        return self.model is None

    def accept_probability(self, features: InterruptFeatures) -> float:
        if self.model is None:
            return 1.0
        return float(self.model.predict_proba([features.vector(self.vocab)])[0])


def interrupt_dataset(
    history: Sequence[tuple[InterruptFeatures, bool]], vocab: dict[str, int]
) -> Dataset:
    X = np.array([f.vector(vocab) for f, _ in history], dtype=np.float64).reshape(len(history), len(InterruptFeatures.NAMES))
    y = np.array([1 if a else 0 for _, a in history], dtype=np.int64)
    return Dataset(list(InterruptFeatures.NAMES), X, y, [(i,) for i in range(len(history))])


def train_interruptibility(
    history: Sequence[tuple[InterruptFeatures, bool]],
    spec: ClassifierSpec | None = None,
    seed: int = 0,
    *,
    min_rows: int = 50,
) -> InterruptibilityModel:
    """Random forest predicting whether a break advice will be accepted.

    With fewer than ``min_rows`` rows or a single class the returned model is
    in fallback mode (always eligible, i.e. random timing).
    """
    vocab = {a: i for i, a in enumerate(sorted({f.app_id for f, _ in history}))}
    labels = {bool(a) for _, a in history}
    if len(history) < min_rows or len(labels) < 2:
        log.warning("interruptibility model: %d rows, falling back to random timing", len(history))
        return InterruptibilityModel(None, vocab, len(history))
    spec = spec or ClassifierSpec(kind="forest", n_trees=25)
    model = train(interrupt_dataset(history, vocab), spec, seed)
    return InterruptibilityModel(model, vocab, len(history))


# ------------------------------------------------------------------- engine


def update_pattern(pattern: TrajectoryPattern, accepted: bool, payload: dict, adopt: bool = True) -> None:
    """Apply a steps-advice response: rejections count up, an acceptance resets
    the count and (with ``adopt``) makes the advised route the new habit."""
    if not accepted:
        pattern.consecutive_rejections += 1
        return
    pattern.consecutive_rejections = 0
    if adopt:
        pattern.avg_steps = payload["est_steps"]
        pattern.map_distance = payload["alt_distance"]
        pattern.street_string = payload["street_string"]


@dataclass
class EngineState:
    last_clock: int | None = None
    advices: dict[str, Advice] = field(default_factory=dict)
    issued: set[str] = field(default_factory=set)  # (kind, target, day) keys
    last_break_at: int | None = None
    last_scan_at: int | None = None
    last_sleep_check_at: int | None = None
    last_rejection_day: dict[int, str] = field(default_factory=dict)
    sessions: list[BedtimeSession] = field(default_factory=list)
    confirmed_days: set[str] = field(default_factory=set)
    feedback: dict[str, dict] = field(default_factory=dict)
    known_episodes: dict[str, SleepEpisode] = field(default_factory=dict)
    counter: int = 0
    break_log: list[dict] = field(default_factory=list)


def _due(last: int | None, now: int, interval_min: int) -> bool:
    return last is None or now - last >= interval_min * 60


BreakScorer = Callable[[ContextSnapshot], float]
SleepSource = Callable[[int], Iterable[SleepEpisode]]


class NudgeEngine:
    def __init__(
        self,
        config: NudgeConfig | None = None,
        *,
        patterns: Sequence[TrajectoryPattern] = (),
        best: BestProfile | None = None,
        alternatives: AlternativesProvider | None = None,
        break_scorer: BreakScorer | None = None,
        sleep_source: SleepSource | None = None,
        bedtime_thresholds: tuple[float, float] = (0.1, 5.0),
        trajectory_config: TrajectoryConfig | None = None,
    ) -> None:
        self.config = config or NudgeConfig()
        self.patterns = {p.pattern_id: p for p in patterns}
        self.best = best
        self.alternatives = alternatives
        self.break_scorer = break_scorer
        self.sleep_source = sleep_source
        self.bedtime_thresholds = bedtime_thresholds
        self.trajectory_config = replace(
            trajectory_config or TrajectoryConfig(),
            max_consecutive_rejections=self.config.max_consecutive_rejections,
        )
        self.state = EngineState()

    # -- helpers ----------------------------------------------------------
    def _new(self, kind: str, target: str, day: str, now: int, **kw) -> Advice:
        self.state.counter += 1
        adv = Advice(f"{kind}-{self.state.counter:06d}", kind, target, day, now, **kw)
        self.state.advices[adv.advice_id] = adv
        return adv

    def _deliver(self, adv: Advice, now: int, out: list[Advice]) -> None:
        adv.delivered_at = now
        out.append(adv)

    @property
    def log(self) -> list[Advice]:
        return list(self.state.advices.values())

    def active_session(self) -> BedtimeSession | None:
        for s in self.state.sessions:
            if s.active:
                return s
        return None

    def _maybe_decay(self, pattern: TrajectoryPattern, day: date) -> None:
        n = self.config.suppression_decay_days
        last = self.state.last_rejection_day.get(pattern.pattern_id)
        if n > 0 and last is not None and (day - date.fromisoformat(last)).days >= n:
            pattern.consecutive_rejections = 0

    # -- main loop --------------------------------------------------------
    def tick(self, now: int, context: ContextSnapshot) -> list[Advice]:
        """Process one clock tick; returns advices delivered during it."""
        st = self.state
        if st.last_clock is not None and now < st.last_clock:
            raise ValueError(f"clock went backwards: {now} < {st.last_clock}")
        st.last_clock = now
        cfg = self.config
        out: list[Advice] = []
        minute = (now % DAY_S) // 60
        in_use = context.in_use
        today = to_date(now)

        for adv in st.advices.values():
            if adv.delivered_at is None and not adv.expired and adv.expiry is not None and now >= adv.expiry:
                adv.expired = True

        # (a) look ahead for recurring trajectories
        if _due(st.last_scan_at, now, cfg.scan_interval_min) and self.alternatives is not None and self.best is not None:
            st.last_scan_at = now
            self._scan_patterns(now, today, context)

        # (b) deliver cached steps advice inside its window
        if in_use:
            for adv in st.advices.values():
                if (
                    adv.kind == "steps"
                    and adv.delivered_at is None
                    and not adv.expired
                    and adv.not_before is not None
                    and adv.not_before <= now < adv.expiry
                ):
                    self._deliver(adv, now, out)

        # (c) sleep confirmation reminders
        if self.sleep_source is not None and _due(st.last_sleep_check_at, now, cfg.sleep_check_interval_min):
            st.last_sleep_check_at = now
            self._remind_sleep(now)
        if in_use:
            for adv in st.advices.values():
                if adv.kind == "sleep_confirm" and adv.delivered_at is None and not adv.expired:
                    self._deliver(adv, now, out)

        # (d) break advice
        mv = context.movement_recent
        if (
            in_use
            and mv is not None
            and mv.avg >= cfg.break_movement_threshold
            and (st.last_break_at is None or now - st.last_break_at >= cfg.break_min_gap_min * 60)
        ):
            p = 1.0 if self.break_scorer is None else self.break_scorer(context)
            if p >= cfg.accept_threshold:
                slot = minute // cfg.break_min_gap_min
                adv = self._new(
                    "break", context.current_app or "phone", today.isoformat(), now,
                    payload={"suggestion": "drink_or_snack", "app_id": context.current_app, "p_accept": round(p, 4), "slot": int(slot)},
                )
                st.last_break_at = now
                self._deliver(adv, now, out)

        # (e) bedtime relaxation trigger
        if self.best is not None and in_use:
            day = analysis_day(now)
            key = f"bedtime/{day.isoformat()}"
            best_t = anchor_of(day) + int(round(self.best.best_bed_time_min * 60))
            if key not in st.issued and best_t - cfg.bedtime_lead_min * 60 <= now <= best_t:
                st.issued.add(key)
                adv = self._new("bedtime", "relax", day.isoformat(), now, payload={"best_bed_time": format_ts(best_t)})
                self._deliver(adv, now, out)

        session = self.active_session()
        if session is not None and session.started_at < now:
            bedtime_step(
                session,
                context,
                context.sleep_signal,
                movement_threshold=self.bedtime_thresholds[0],
                light_threshold=self.bedtime_thresholds[1],
                decay=cfg.bedtime_volume_decay,
            )
        return out

    def _scan_patterns(self, now: int, today: date, context: ContextSnapshot) -> None:
        cfg = self.config
        midnight = day_start(today)
        upcoming = []
        for p in self.patterns.values():
            if today.weekday() not in p.weekdays:
                continue
            start = midnight + int(round(p.start_clock_min * 60))
            if 0 < start - now <= cfg.advice_lead_min * 60:
                upcoming.append((start, p.pattern_id, p))
        for start, _, p in sorted(upcoming, key=lambda u: (u[0], u[1])):
            key = f"steps/{p.pattern_id}/{today.isoformat()}"
            if key in self.state.issued:
                continue
            self._maybe_decay(p, today)
            proposal = propose_alternative(
                p,
                self.alternatives,
                self.best.best_daily_steps,
                context.steps_today,
                now=now,
                config=self.trajectory_config,
            )
            if proposal is None:
                continue
            self.state.issued.add(key)
            self._new(
                "steps",
                str(p.pattern_id),
                today.isoformat(),
                now,
                payload={
                    "pattern_id": p.pattern_id,
                    "street_string": proposal.street_string,
                    "alt_distance": proposal.alt_distance,
                    "est_steps": proposal.est_steps,
                    "baseline_steps": p.avg_steps,
                    "trip_start": format_ts(start),
                },
                expiry=start,
                not_before=start - cfg.advice_lead_min * 60,
            )
            break  # only the immediate forthcoming trajectory

    def _remind_sleep(self, now: int) -> None:
        st = self.state
        for ep in self.sleep_source(now):
            day = ep.day_id.isoformat()
            st.known_episodes[day] = ep
            if day in st.confirmed_days:
                continue
            # each round replaces the previous unanswered reminder
            for adv in st.advices.values():
                if adv.kind == "sleep_confirm" and adv.day_id == day and adv.response is None and not adv.expired:
                    adv.expired = True
            self._new("sleep_confirm", "episode", day, now, payload=ep.to_dict())

    # -- responses --------------------------------------------------------
    def record_response(
        self,
        advice_id: str,
        response: str,
        now: int,
        *,
        correction: tuple[int, int] | None = None,
        details: dict | None = None,
    ) -> Advice:
        st = self.state
        if advice_id not in st.advices:
            raise KeyError(f"unknown advice {advice_id!r}")
        adv = st.advices[advice_id]
        if response not in ("accepted", "rejected"):
            raise ValueError("response must be accepted or rejected")
        if adv.delivered_at is None:
            raise ValueError(f"advice {advice_id} was never delivered")
        if adv.response is not None:
            raise ValueError(f"advice {advice_id} already has a response")
        adv.response = response

        if adv.kind == "steps":
            p = self.patterns.get(adv.payload["pattern_id"])
            if p is not None:
                update_pattern(p, response == "accepted", adv.payload, self.config.adopt_accepted_route)
                if response == "rejected":
                    st.last_rejection_day[p.pattern_id] = adv.day_id
        elif adv.kind == "break" and response == "accepted" and details:
            st.break_log.append({"advice_id": advice_id, "at": format_ts(now), **details})
        elif adv.kind == "bedtime" and response == "accepted":
            best_t = anchor_of(date.fromisoformat(adv.day_id)) + int(round(self.best.best_bed_time_min * 60))
            st.sessions.append(
                BedtimeSession(f"session-{len(st.sessions) + 1:04d}", best_t - self.config.bedtime_lead_min * 60, now)
            )
        elif adv.kind == "sleep_confirm" and response == "accepted":
            st.confirmed_days.add(adv.day_id)
            fb = FeedbackResponse.confirm() if correction is None else FeedbackResponse.correction(*correction)
            st.feedback[adv.day_id] = asdict(fb)
        return adv

    def feedback_for(self, day: str) -> FeedbackResponse | None:
        fb = self.state.feedback.get(day)
        return None if fb is None else FeedbackResponse(**fb)

    # -- persistence ------------------------------------------------------
    def advice_log_jsonl(self) -> str:
        return "".join(json.dumps(a.log_record(), separators=(",", ":")) + "\n" for a in self.log)

    def snapshot(self) -> dict:
        st = self.state
        return {
            "last_clock": st.last_clock,
            "advices": [asdict(a) for a in st.advices.values()],
            "issued": sorted(st.issued),
            "last_break_at": st.last_break_at,
            "last_scan_at": st.last_scan_at,
            "last_sleep_check_at": st.last_sleep_check_at,
            "last_rejection_day": {str(k): v for k, v in st.last_rejection_day.items()},
            "sessions": [asdict(s) for s in st.sessions],
            "confirmed_days": sorted(st.confirmed_days),
            "feedback": st.feedback,
            "counter": st.counter,
            "break_log": st.break_log,
            "patterns": [p.to_dict() for p in self.patterns.values()],
        }

    def restore(self, snap: dict) -> None:
        st = EngineState()
        st.last_clock = snap["last_clock"]
        for a in snap["advices"]:
            adv = Advice(**a)
            st.advices[adv.advice_id] = adv
        st.issued = set(snap["issued"])
        st.last_break_at = snap["last_break_at"]
        st.last_scan_at = snap.get("last_scan_at")
        st.last_sleep_check_at = snap.get("last_sleep_check_at")
        st.last_rejection_day = {int(k): v for k, v in snap["last_rejection_day"].items()}
        for s in snap["sessions"]:
            s = dict(s)
            s["effects"] = tuple(s["effects"])
            st.sessions.append(BedtimeSession(**s))
        st.confirmed_days = set(snap["confirmed_days"])
        st.feedback = dict(snap["feedback"])
        st.counter = snap["counter"]
        st.break_log = list(snap["break_log"])
        self.patterns = {}
        for d in snap["patterns"]:
            p = TrajectoryPattern.from_dict(d)
            self.patterns[p.pattern_id] = p
        self.state = st
