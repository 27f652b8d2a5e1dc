"""Daily activity parameters, their Pearson correlations with sleep, and the
"best day" target profile used by the nudging services."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .coredata import SLOT_S, AppSession, FeatureRecord
from .sleep import SleepEpisode

log = logging.getLogger(__name__)

APP_TYPE_FIELDS = {
    "communication": "comm_min",
    "video": "video_min",
    "music": "music_min",
    "reading": "reading_min",
    "game": "gaming_min",
}
BASE_PARAMS = (
    "daily_steps",
    "walking_min",
    "running_min",
    "comm_min",
    "video_min",
    "music_min",
    "reading_min",
    "gaming_min",
    "pre_bed_light",
    "pre_bed_noise",
    "bed_time_min",
    "wake_time_min",
    "sleep_duration_h",
    "wakeup_count",
)


@dataclass(frozen=True)
class CorrelateConfig:
    min_n: int = 5
    quartile_fraction: float = 0.25
    walk_cadence: int = 60  # steps per 5-minute slot
    run_cadence: int = 130
    pre_bed_hours: float = 2.0
    min_rows: int = 8
    top_apps: int = 10
    bed_band_min: int = 60


@dataclass
class DailyParams:
    day_id: date
    daily_steps: float = 0.0
    walking_min: float = 0.0
    running_min: float = 0.0
    comm_min: float = 0.0
    video_min: float = 0.0
    music_min: float = 0.0
    reading_min: float = 0.0
    gaming_min: float = 0.0
    pre_bed_light: float = math.nan
    pre_bed_noise: float = math.nan
    pre_bed_apps: frozenset[str] = frozenset()
    bed_time_min: float = math.nan
    wake_time_min: float = math.nan
    sleep_duration_h: float = math.nan
    wakeup_count: float = math.nan
    app_minutes: dict[str, float] = field(default_factory=dict)

    def value(self, name: str) -> float:
        if name.startswith("app:"):
            return self.app_minutes.get(name[4:], 0.0)
        return float(getattr(self, name))


def _overlap(a0: float, a1: float, b0: float, b1: float) -> float:
    return max(0.0, min(a1, b1) - max(a0, b0))


def extract_daily_params(
    records: Sequence[FeatureRecord],
    sessions: Sequence[AppSession],
    episodes: Mapping[date, SleepEpisode | None],
    config: CorrelateConfig | None = None,
) -> list[DailyParams]:
    """One parameter vector per day d whose episodes for d-1 and d both exist.

    Activity sums run from the previous wake time to the current bed time;
    pre-bed aggregates cover the ``pre_bed_hours`` before bed.
    """
    cfg = config or CorrelateConfig()
    by_slot = sorted(records, key=lambda r: r.slot_start)
    starts = np.array([r.slot_start for r in by_slot], dtype=np.int64)
    out = []
    for day in sorted(episodes):
        ep = episodes[day]
        prev = episodes.get(date.fromordinal(day.toordinal() - 1))
        if ep is None or prev is None:
            log.info("day %s skipped: sleep episode missing for the day or the day before", day)
            continue
        lo, hi = prev.wake_time, ep.bed_time
        p = DailyParams(day)
        a = np.searchsorted(starts, lo - SLOT_S + 1)
        b = np.searchsorted(starts, hi)
        for rec in by_slot[a:b]:
            frac = _overlap(rec.slot_start, rec.slot_start + SLOT_S, lo, hi) / SLOT_S
            if frac <= 0:
                continue
            p.daily_steps += rec.steps * frac
            if cfg.walk_cadence <= rec.steps < cfg.run_cadence:
                p.walking_min += 5 * frac
            elif rec.steps >= cfg.run_cadence:
                p.running_min += 5 * frac

        pre_lo = hi - int(cfg.pre_bed_hours * 3600)
        a = np.searchsorted(starts, pre_lo - SLOT_S + 1)
        light, noise = [], []
        for rec in by_slot[a:b]:
            if _overlap(rec.slot_start, rec.slot_start + SLOT_S, pre_lo, hi) <= 0:
                continue
            if rec.light_stats is not None:
                light.append(rec.light_stats.avg)
            if rec.noise_stats is not None:
                noise.append(rec.noise_stats.avg)
        p.pre_bed_light = float(np.mean(light)) if light else math.nan
        p.pre_bed_noise = float(np.mean(noise)) if noise else math.nan

        apps = set()
        for s in sessions:
            secs = _overlap(s.start, s.stop, lo, hi)
            if secs > 0:
                p.app_minutes[s.app_id] = p.app_minutes.get(s.app_id, 0.0) + secs / 60
                fld = APP_TYPE_FIELDS.get(s.app_type)
                if fld is not None:
                    setattr(p, fld, getattr(p, fld) + secs / 60)
            if s.stop >= pre_lo and s.start <= hi:
                apps.add(s.app_id)
        p.pre_bed_apps = frozenset(apps)

        p.bed_time_min = ep.bed_minutes
        p.wake_time_min = ep.wake_minutes
        p.sleep_duration_h = ep.duration_min / 60
        p.wakeup_count = float(ep.wakeup_count)
        out.append(p)
    return out


# ------------------------------------------------------------------ correlation


@dataclass
class CorrelationMatrix:
    names: list[str]
    r: np.ndarray  # NaN where absent
    n: np.ndarray

    @property
    def absent(self) -> np.ndarray:
        return np.isnan(self.r)

    def get(self, a: str, b: str) -> float:
        return float(self.r[self.names.index(a), self.names.index(b)])

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["", *self.names])
            for name, row in zip(self.names, self.r):
                w.writerow([name, *("" if math.isnan(v) else f"{v:.6f}" for v in row)])

    def heatmap_json(self) -> str:
        values = [[None if math.isnan(v) else round(float(v), 6) for v in row] for row in self.r]
        return json.dumps(
            {"names": self.names, "values": values, "absent": self.absent.tolist(), "n": self.n.tolist()},
            separators=(",", ":"),
        )


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    """Pearson r of two equal-length vectors; NaN when either is constant."""
    mx, my = x.mean(), y.mean()
    dx, dy = x - mx, y - my
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx <= 0 or syy <= 0:
        return math.nan
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def param_names(rows: Sequence[DailyParams], top_apps: int = 10) -> list[str]:
    totals: dict[str, float] = {}
    for row in rows:
        for app, mins in row.app_minutes.items():
            totals[app] = totals.get(app, 0.0) + mins
    apps = sorted(totals, key=lambda a: (-totals[a], a))[:top_apps]
    return list(BASE_PARAMS) + [f"app:{a}" for a in apps]


def correlation_table(columns: Mapping[str, Sequence[float]], min_n: int = 5) -> CorrelationMatrix:
    names = list(columns)
    data = np.array([np.asarray(columns[k], dtype=np.float64) for k in names])
    k = len(names)
    r = np.full((k, k), math.nan)
    n = np.zeros((k, k), dtype=np.int64)
    for i in range(k):
        for j in range(i, k):
            ok = ~np.isnan(data[i]) & ~np.isnan(data[j])
            cnt = int(ok.sum())
            n[i, j] = n[j, i] = cnt
            if cnt < min_n:
                continue
            v = 1.0 if i == j else pearson(data[i][ok], data[j][ok])
            if i == j and np.ptp(data[i][ok]) == 0:
                v = math.nan
            r[i, j] = r[j, i] = v
    return CorrelationMatrix(names, r, n)


def pearson_matrix(
    rows: Sequence[DailyParams], min_n: int = 5, top_apps: int = 10
) -> CorrelationMatrix:
    """Pairwise-complete Pearson matrix over the daily parameters.

    Cells with fewer than ``min_n`` joint observations or a constant column
    are absent (NaN).
    """
    if len(rows) < min_n:
        raise ValueError(f"need at least {min_n} days, got {len(rows)}")
    names = param_names(rows, top_apps)
    cols = {name: [row.value(name) for row in rows] for name in names}
    return correlation_table(cols, min_n)


# -------------------------------------------------------------------- best day


@dataclass
class BestProfile:
    """Nudging targets taken from the subject's best-sleep days (targets, not causes)."""

    best_daily_steps: float
    best_bed_time_min: float
    best_app_usage_min: dict[str, float]
    top_days: list[date] = field(default_factory=list)
    bed_band: tuple[float, float] | None = None

    def to_dict(self) -> dict:
        return {
            "kind": "targets",
            "best_daily_steps": self.best_daily_steps,
            "best_bed_time_min": self.best_bed_time_min,
            "best_app_usage_min": self.best_app_usage_min,
            "top_days": [d.isoformat() for d in self.top_days],
            "bed_band": list(self.bed_band) if self.bed_band else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"), sort_keys=True)


def _z(values: np.ndarray) -> np.ndarray:
    sd = values.std()
    if sd == 0 or not np.isfinite(sd):
        return np.zeros_like(values)
    return (values - values.mean()) / sd


def sleep_scores(rows: Sequence[DailyParams]) -> np.ndarray:
    """z(sleep duration) - z(wakeup count), per row."""
    dur = np.array([r.sleep_duration_h for r in rows], dtype=np.float64)
    wak = np.array([r.wakeup_count for r in rows], dtype=np.float64)
    return _z(dur) - _z(wak)


def top_quartile(rows: Sequence[DailyParams], fraction: float = 0.25) -> list[DailyParams]:
    scores = sleep_scores(rows)
    n_top = max(1, math.ceil(round(fraction * len(rows), 9)))
    order = sorted(range(len(rows)), key=lambda i: (-scores[i], rows[i].day_id))
    return [rows[i] for i in order[:n_top]]


def _bed_band(rows: Sequence[DailyParams], scores: np.ndarray, width: float):
    beds = np.array([r.bed_time_min for r in rows])
    best, best_mean = None, -math.inf
    for start in sorted(set(beds.tolist())):
        inside = (beds >= start) & (beds <= start + width)
        if inside.sum() < 2:
            continue
        m = float(scores[inside].mean())
        if m > best_mean + 1e-12:
            best, best_mean = (start, start + width), m
    return best


def best_profile(
    rows: Sequence[DailyParams],
    config: CorrelateConfig | None = None,
    *,
    min_rows: int | None = None,
) -> BestProfile:
    """Means of the target parameters over the top-scoring quarter of days.

    The best bed time is clamped into the one-hour bed-time band with the
    highest mean sleep score.
    """
    cfg = config or CorrelateConfig()
    need = cfg.min_rows if min_rows is None else min_rows
    if len(rows) < need:
        raise ValueError(f"need at least {need} days for a best profile, got {len(rows)}")
    rows = sorted(rows, key=lambda r: r.day_id)
    top = top_quartile(rows, cfg.quartile_fraction)
    steps = float(np.mean([r.daily_steps for r in top]))
    bed = float(np.mean([r.bed_time_min for r in top]))
    band = _bed_band(rows, sleep_scores(rows), cfg.bed_band_min)
    if band is not None:
        bed = min(max(bed, band[0]), band[1])
    pre_bed = sorted({a for r in rows for a in r.pre_bed_apps})
    apps = {a: float(np.mean([r.app_minutes.get(a, 0.0) for r in top])) for a in pre_bed}
    return BestProfile(steps, bed, apps, [r.day_id for r in top], band)
