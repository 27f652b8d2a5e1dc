"""Event schema, JSONL ingestion and 5-minute aggregation of phone sensor traces."""

from __future__ import annotations

import gzip
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .timeutil import format_ts, parse_ts

log = logging.getLogger(__name__)

SLOT_S = 300
KINDS = ("location", "movement", "light", "noise", "screen", "app", "weather")
APP_TYPES = ("communication", "video", "music", "reading", "game", "other")

# Required payload fields per kind; optional ones are listed separately.
_PAYLOAD_FIELDS = {
    "location": ("lat", "lon"),
    "movement": ("magnitude",),
    "light": ("lux",),
    "noise": ("level",),
    "screen": ("state",),
    "app": ("app_id", "app_type", "event"),
    "weather": ("temp", "humidity"),
}
_OPTIONAL_FIELDS = {"movement": ("steps",)}


class TraceError(ValueError):
    """A trace is too damaged to use (too many bad lines or time running backwards)."""


@dataclass(frozen=True, slots=True)
class Event:
    t: int
    kind: str
    payload: dict

    def to_json(self) -> str:
        rec = {"t": format_ts(self.t), "kind": self.kind}
        rec.update(self.payload)
        return json.dumps(rec, separators=(",", ":"))


@dataclass
class EventLog:
    subject_id: str
    events: list[Event]
    warnings: list[str] = field(default_factory=list)
    malformed: int = 0

    @property
    def span(self) -> tuple[int, int] | None:
        if not self.events:
            return None
        return self.events[0].t, self.events[-1].t

    def of_kind(self, kind: str) -> list[Event]:
        return [e for e in self.events if e.kind == kind]


@dataclass(frozen=True, slots=True)
class Stats:
    min: float
    avg: float
    max: float
    std: float

    @classmethod
    def of(cls, values: Sequence[float]) -> "Stats | None":
        n = len(values)
        if n == 0:
            return None
        mean = math.fsum(values) / n
        var = math.fsum((v - mean) ** 2 for v in values) / n
        return cls(min(values), mean, max(values), math.sqrt(var))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.min, self.avg, self.max, self.std)


@dataclass
class FeatureRecord:
    slot_start: int
    movement_stats: Stats | None = None
    light_stats: Stats | None = None
    noise_stats: Stats | None = None
    screen_on_seconds: float = 0.0
    steps: int = 0
    location: tuple[float, float] | None = None
    app_seconds_by_type: dict[str, float] = field(default_factory=dict)
    # (is_on, seconds) runs tiling the slot; used for screen spell features.
    screen_spells: list[tuple[bool, float]] = field(default_factory=list)


@dataclass(frozen=True)
class CoreConfig:
    step_threshold: float = 1.5
    refractory_s: float = 0.25


@dataclass(frozen=True, slots=True)
class AppSession:
    app_id: str
    app_type: str
    start: int
    stop: int


def _validate(rec: dict) -> Event:
    t = parse_ts(rec["t"])
    kind = rec["kind"]
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}")
    payload = rec.get("payload")
    if payload is None:
        payload = {k: v for k, v in rec.items() if k not in ("t", "kind")}
    for name in _PAYLOAD_FIELDS[kind]:
        if name not in payload:
            raise ValueError(f"{kind} event missing {name!r}")
    if kind == "screen" and payload["state"] not in ("on", "off"):
        raise ValueError("screen state must be on|off")
    if kind == "app":
        if payload["event"] not in ("start", "stop"):
            raise ValueError("app event must be start|stop")
        if payload["app_type"] not in APP_TYPES:
            raise ValueError(f"unknown app_type {payload['app_type']!r}")
    keep = _PAYLOAD_FIELDS[kind] + _OPTIONAL_FIELDS.get(kind, ())
    return Event(t, kind, {k: payload[k] for k in keep if k in payload})


def ingest_events(
    lines: Iterable[str],
    subject_id: str = "subject",
    *,
    max_malformed_fraction: float = 0.01,
    max_regression_s: int = 3600,
) -> EventLog:
    """Parse JSONL lines into a time-sorted :class:`EventLog`.

    Malformed lines are counted and reported in ``warnings``. More than
    ``max_malformed_fraction`` of them, or a timestamp that runs backwards by
    more than ``max_regression_s``, raises :class:`TraceError`.
    """
    events: list[Event] = []
    warnings: list[str] = []
    n_lines = 0
    latest = None
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        n_lines += 1
        try:
            ev = _validate(json.loads(line))
        except (ValueError, KeyError, TypeError) as exc:
            warnings.append(f"line {lineno}: {exc}")
            continue
        if latest is not None and latest - ev.t > max_regression_s:
            raise TraceError(
                f"line {lineno}: timestamp regresses by {latest - ev.t} s (corrupt trace)"
            )
        latest = ev.t if latest is None else max(latest, ev.t)
        events.append(ev)
    bad = len(warnings)
    if n_lines and bad / n_lines > max_malformed_fraction:
        raise TraceError(f"{bad} of {n_lines} lines malformed")
    events.sort(key=lambda e: e.t)
    for w in warnings:
        log.warning(w)
    return EventLog(subject_id, events, warnings, bad)


def read_event_file(path: str | Path, subject_id: str | None = None, **kwargs) -> EventLog:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rt", encoding="utf-8") as fh:
        return ingest_events(fh, subject_id or path.name.split(".")[0], **kwargs)


def write_event_file(log_: EventLog, path: str | Path) -> None:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "wt", encoding="utf-8") as fh:
        for ev in log_.events:
            fh.write(ev.to_json())
            fh.write("\n")


def derive_steps(
    magnitudes: Sequence[float],
    times: Sequence[float] | None = None,
    *,
    threshold: float = 1.5,
    refractory_s: float = 0.25,
) -> int:
    """Count local maxima rising more than ``threshold`` above the slot mean.

    Peaks closer than ``refractory_s`` to the previously counted peak are
    ignored. Without ``times`` the refractory check is skipped.
    """
    n = len(magnitudes)
    if n == 0:
        return 0
    mean = math.fsum(magnitudes) / n
    level = mean + threshold
    count = 0
    last_t = -math.inf
    for i in range(n):
        x = magnitudes[i]
        if x <= level:
            continue
        if i > 0 and magnitudes[i - 1] >= x:
            continue
        if i + 1 < n and magnitudes[i + 1] > x:
            continue
        if times is not None:
            if times[i] - last_t < refractory_s:
                continue
            last_t = times[i]
        count += 1
    return count


def _intervals_from_toggles(events: list[Event], span_end: int):
    """Screen on-intervals from alternating on/off events (repeats ignored)."""
    out = []
    on_at = None
    for ev in events:
        state = ev.payload["state"]
        if state == "on" and on_at is None:
            on_at = ev.t
        elif state == "off" and on_at is not None:
            out.append((on_at, ev.t))
            on_at = None
    if on_at is not None:
        out.append((on_at, span_end))
    return out


def app_sessions(log_: EventLog) -> list[AppSession]:
    """Pair app start/stop events into sessions.

    Only one app is in the foreground: a start while another app is open
    closes the open session at that moment. A stop without a start is ignored.
    """
    sessions = []
    open_: tuple[str, str, int] | None = None
    for ev in log_.events:
        if ev.kind != "app":
            continue
        p = ev.payload
        if p["event"] == "start":
            if open_ is not None:
                sessions.append(AppSession(open_[0], open_[1], open_[2], ev.t))
            open_ = (p["app_id"], p["app_type"], ev.t)
        elif open_ is not None and open_[0] == p["app_id"]:
            sessions.append(AppSession(open_[0], open_[1], open_[2], ev.t))
            open_ = None
    if open_ is not None and log_.events:
        sessions.append(AppSession(open_[0], open_[1], open_[2], log_.events[-1].t))
    return sessions


def _spread(intervals, first_slot: int, n_slots: int):
    """Yield (slot_index, seconds, interval) overlaps of [start, stop) intervals with slots."""
    for iv in intervals:
        start, stop = iv[0], iv[1]
        if stop <= start:
            continue
        s = max(start // SLOT_S, first_slot)
        last = min((stop - 1) // SLOT_S, first_slot + n_slots - 1)
        while s <= last:
            lo = max(start, s * SLOT_S)
            hi = min(stop, (s + 1) * SLOT_S)
            if hi > lo:
                yield s - first_slot, hi - lo, iv
            s += 1


def aggregate_records(
    log_: EventLog,
    *,
    step_threshold: float = 1.5,
    refractory_s: float = 0.25,
    span: tuple[int, int] | None = None,
) -> list[FeatureRecord]:
    """One :class:`FeatureRecord` per 5-minute slot intersecting the trace span.

    Modalities with no samples in a slot stay ``None``. Movement events may
    carry a ``steps`` count from the phone's step detector; slots with such
    counts use them, other slots fall back to :func:`derive_steps`.
    """
    if span is None:
        span = log_.span
    if span is None:
        return []
    first = span[0] // SLOT_S
    n_slots = span[1] // SLOT_S - first + 1
    span_end = (first + n_slots) * SLOT_S

    mov: dict[int, list] = defaultdict(list)
    mov_t: dict[int, list] = defaultdict(list)
    counted: dict[int, int] = {}
    light: dict[int, list] = defaultdict(list)
    noise: dict[int, list] = defaultdict(list)
    loc: dict[int, tuple[float, float]] = {}
    screen_events = []
    for ev in log_.events:
        s = ev.t // SLOT_S - first
        if not 0 <= s < n_slots:
            continue
        k = ev.kind
        p = ev.payload
        if k == "movement":
            mov[s].append(float(p["magnitude"]))
            mov_t[s].append(ev.t)
            if "steps" in p:
                counted[s] = counted.get(s, 0) + int(p["steps"])
        elif k == "light":
            light[s].append(float(p["lux"]))
        elif k == "noise":
            noise[s].append(float(p["level"]))
        elif k == "location":
            loc[s] = (float(p["lat"]), float(p["lon"]))
        elif k == "screen":
            screen_events.append(ev)

    records = [FeatureRecord(slot_start=(first + i) * SLOT_S) for i in range(n_slots)]
    for s, rec in enumerate(records):
        if s in mov:
            rec.movement_stats = Stats.of(mov[s])
            if s in counted:
                rec.steps = counted[s]
            else:
                rec.steps = derive_steps(
                    mov[s], mov_t[s], threshold=step_threshold, refractory_s=refractory_s
                )
        if s in light:
            rec.light_stats = Stats.of(light[s])
        if s in noise:
            rec.noise_stats = Stats.of(noise[s])
        if s in loc:
            rec.location = loc[s]

    on_intervals = _intervals_from_toggles(screen_events, span_end)
    on_parts: dict[int, list[tuple[int, int]]] = defaultdict(list)
    for s, secs, iv in _spread(on_intervals, first, n_slots):
        records[s].screen_on_seconds += secs
        lo = max(iv[0], records[s].slot_start)
        on_parts[s].append((lo, lo + secs))
    for s, rec in enumerate(records):
        rec.screen_spells = _slot_spells(rec.slot_start, on_parts.get(s, []))

    sessions = [(a.start, a.stop, a.app_type) for a in app_sessions(log_)]
    for s, secs, iv in _spread(sessions, first, n_slots):
        by_type = records[s].app_seconds_by_type
        by_type[iv[2]] = by_type.get(iv[2], 0.0) + secs
    return records


def _slot_spells(slot_start: int, on_parts: list[tuple[int, int]]) -> list[tuple[bool, float]]:
    spells: list[tuple[bool, float]] = []
    cursor = slot_start
    for lo, hi in sorted(on_parts):
        if lo > cursor:
            spells.append((False, float(lo - cursor)))
        spells.append((True, float(hi - lo)))
        cursor = hi
    end = slot_start + SLOT_S
    if end > cursor:
        spells.append((False, float(end - cursor)))
    return spells
