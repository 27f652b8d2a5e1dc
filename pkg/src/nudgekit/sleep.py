"""Sleep detection: 10-minute windows, place-partitioned models, chunk merging,
feedback relabelling and prequential learning curves."""

from __future__ import annotations

import csv
import json
import math
import statistics
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from datetime import date
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .coredata import SLOT_S, FeatureRecord, Stats
from .geo import haversine_m
from .mlkit import ClassifierModel, ClassifierSpec, Dataset, EvalMetrics, compute_metrics, train
from .timeutil import DAY_S, anchor_of, format_ts, parse_ts

STAT_NAMES = ("min", "avg", "max", "std")
FEATURE_NAMES: tuple[str, ...] = (
    *(f"movement_{s}" for s in STAT_NAMES),
    *(f"noise_{s}" for s in STAT_NAMES),
    *(f"light_{s}" for s in STAT_NAMES),
    *(f"screen_{s}" for s in STAT_NAMES),
    "lat",
    "lon",
    "prev_bed_min",
    "prev_wake_min",
)
# Single-modality feature groups, in the order the evaluation table lists them.
MODALITIES: dict[str, tuple[str, ...]] = {
    "movement": FEATURE_NAMES[0:4],
    "light": FEATURE_NAMES[8:12],
    "screen": FEATURE_NAMES[12:16],
    "location": FEATURE_NAMES[16:18],
    "sleep_time": FEATURE_NAMES[18:20],
    "noise": FEATURE_NAMES[4:8],
}
_SENSOR_MODALITIES = ("movement", "noise", "light")

SLEEPING, AWAKE = 1, 0


class NotTrainedError(RuntimeError):
    """Classification was requested before any model was trained."""


@dataclass(frozen=True)
class SleepConfig:
    window_min: int = 10
    merge_gap_min: int = 30
    place_radius_m: float = 100.0
    fallback_radius_m: float = 1000.0
    duration_excludes_absorbed_gaps: bool = False
    default_bed_min: float = 330.0  # 23:30 as minutes after the 18:00 anchor
    default_wake_min: float = 810.0  # 07:30
    default_light: float = 0.0
    default_noise: float = 30.0
    default_movement: float = 0.0
    min_place_rows: int = 36

    @property
    def window_s(self) -> int:
        return self.window_min * 60

    @property
    def windows_per_day(self) -> int:
        return DAY_S // self.window_s

    def __post_init__(self) -> None:
        if self.window_s % SLOT_S or DAY_S % self.window_s:
            raise ValueError("window_min must be a multiple of 5 dividing 24 h")


@dataclass
class SleepWindow:
    day_id: date
    window_start: int
    features: np.ndarray  # len(FEATURE_NAMES), NaN = absent
    label: int | None = None  # SLEEPING, AWAKE or None (unlabelled)
    place_id: int | None = None
    prob: float | None = None

    @property
    def location(self) -> tuple[float, float] | None:
        lat, lon = self.features[16], self.features[17]
        if math.isnan(lat) or math.isnan(lon):
            return None
        return float(lat), float(lon)


@dataclass
class SleepEpisode:
    day_id: date
    bed_time: int
    wake_time: int
    duration_min: float
    wakeup_count: int
    chunks: list[tuple[int, int]]
    place_id: int | None = None

    @property
    def bed_minutes(self) -> float:
        return (self.bed_time - anchor_of(self.day_id)) / 60.0

    @property
    def wake_minutes(self) -> float:
        return (self.wake_time - anchor_of(self.day_id)) / 60.0

    def to_dict(self) -> dict:
        return {
            "day_id": self.day_id.isoformat(),
            "bed_time": format_ts(self.bed_time),
            "wake_time": format_ts(self.wake_time),
            "duration_min": self.duration_min,
            "wakeup_count": self.wakeup_count,
            "chunks": [[format_ts(s), format_ts(e)] for s, e in self.chunks],
            "place_id": self.place_id,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "SleepEpisode":
        return cls(
            date.fromisoformat(doc["day_id"]),
            parse_ts(doc["bed_time"]),
            parse_ts(doc["wake_time"]),
            float(doc["duration_min"]),
            int(doc["wakeup_count"]),
            [(parse_ts(a), parse_ts(b)) for a, b in doc["chunks"]],
            doc.get("place_id"),
        )


# --------------------------------------------------------------------- windows


def _combine(stats: list[Stats]) -> Stats | None:
    """Min of mins, max of maxes, equal-duration mean, pooled population std."""
    if not stats:
        return None
    if len(stats) == 1:
        return stats[0]
    mean = sum(s.avg for s in stats) / len(stats)
    var = sum(s.std**2 + (s.avg - mean) ** 2 for s in stats) / len(stats)
    return Stats(min(s.min for s in stats), mean, max(s.max for s in stats), math.sqrt(var))


def _spell_stats(records: Sequence[FeatureRecord | None]) -> tuple[float, float, float, float]:
    spells: list[list] = []
    for rec in records:
        parts = rec.screen_spells if rec is not None and rec.screen_spells else [(False, float(SLOT_S))]
        for on, secs in parts:
            if spells and spells[-1][0] == on:
                spells[-1][1] += secs
            else:
                spells.append([on, secs])
    s = Stats.of([sec for _, sec in spells])
    return s.as_tuple()


class WindowBuilder:
    """Builds each analysis day's windows and keeps the per-subject history
    needed for imputation (time-of-day medians, running sleep-time medians)."""

    def __init__(self, config: SleepConfig | None = None) -> None:
        self.config = config or SleepConfig()
        n = self.config.windows_per_day
        self._tod: dict[str, list[list[tuple]]] = {m: [[] for _ in range(n)] for m in _SENSOR_MODALITIES}
        self._beds: list[float] = []
        self._wakes: list[float] = []
        self._last_location: tuple[float, float] | None = None

    def observe_episode(self, episode: SleepEpisode | None) -> None:
        if episode is not None:
            self._beds.append(episode.bed_minutes)
            self._wakes.append(episode.wake_minutes)

    def _sleep_time_features(self, prev: SleepEpisode | None) -> tuple[float, float]:
        if prev is not None:
            return prev.bed_minutes, prev.wake_minutes
        if self._beds:
            return statistics.median(self._beds), statistics.median(self._wakes)
        return self.config.default_bed_min, self.config.default_wake_min

    def _impute(self, modality: str, idx: int) -> tuple[float, float, float, float]:
        hist = self._tod[modality][idx]
        if hist:
            return tuple(float(np.median([h[k] for h in hist])) for k in range(4))
        c = getattr(self.config, f"default_{modality}")
        return (c, c, c, 0.0)

    def build(
        self,
        day_id: date,
        records: Iterable[FeatureRecord],
        prev_episode: SleepEpisode | None = None,
    ) -> list[SleepWindow]:
        cfg = self.config
        anchor = anchor_of(day_id)
        per = cfg.window_s // SLOT_S
        n_slots = DAY_S // SLOT_S
        slots: list[FeatureRecord | None] = [None] * n_slots
        for rec in records:
            k = (rec.slot_start - anchor) // SLOT_S
            if 0 <= k < n_slots:
                slots[k] = rec
        bed, wake = self._sleep_time_features(prev_episode)

        windows = []
        observed: list[tuple[int, str, tuple]] = []
        for i in range(cfg.windows_per_day):
            recs = slots[i * per : (i + 1) * per]
            feats: list[float] = []
            for modality in _SENSOR_MODALITIES:
                st = _combine([getattr(r, f"{modality}_stats") for r in recs if r is not None and getattr(r, f"{modality}_stats") is not None])
                if st is None:
                    feats.extend(self._impute(modality, i))
                else:
                    tup = st.as_tuple()
                    feats.extend(tup)
                    observed.append((i, modality, tup))
            feats.extend(_spell_stats(recs))
            for r in recs:
                if r is not None and r.location is not None:
                    self._last_location = r.location
            loc = self._last_location
            feats.extend(loc if loc is not None else (math.nan, math.nan))
            feats.extend((bed, wake))
            windows.append(
                SleepWindow(day_id, anchor + i * cfg.window_s, np.array(feats, dtype=np.float64))
            )
        for i, modality, tup in observed:
            self._tod[modality][i].append(tup)
        return windows


def build_windows(
    records: Iterable[FeatureRecord],
    prev_episode: SleepEpisode | None = None,
    *,
    day_id: date,
    builder: WindowBuilder | None = None,
) -> list[SleepWindow]:
    """The analysis day's windows (144 at the 10-minute default)."""
    builder = builder or WindowBuilder()
    return builder.build(day_id, records, prev_episode)


def label_windows(windows: Sequence[SleepWindow], intervals: Sequence[tuple[int, int]]) -> None:
    """Label windows sleeping when their start lies inside one of ``intervals``."""
    for w in windows:
        w.label = AWAKE
        for s, e in intervals:
            if s <= w.window_start < e:
                w.label = SLEEPING
                break


def windows_dataset(windows: Sequence[SleepWindow], subject: str = "") -> Dataset:
    X = np.vstack([w.features for w in windows]) if windows else np.empty((0, len(FEATURE_NAMES)))
    y = np.array([w.label for w in windows], dtype=np.int64)
    tags = [(subject, w.day_id.isoformat(), w.place_id if w.place_id is not None else -1, w.window_start) for w in windows]
    return Dataset(list(FEATURE_NAMES), X, y, tags)


CORPUS_COLUMNS = ("day_id", "window_start", *FEATURE_NAMES, "label")


def write_day_csv(windows: Sequence[SleepWindow], path: str | Path) -> None:
    """One analysis day of windows; empty cells are absent values or labels."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CORPUS_COLUMNS)
        for win in windows:
            feats = ["" if math.isnan(v) else repr(float(v)) for v in win.features]
            label = "" if win.label is None else int(win.label)
            w.writerow([win.day_id.isoformat(), win.window_start, *feats, label])


def read_day_csv(path: str | Path) -> list[SleepWindow]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header is None or tuple(header) != CORPUS_COLUMNS:
            raise ValueError(f"{path}: unexpected corpus header")
        out = []
        for row in r:
            feats = np.array([math.nan if v == "" else float(v) for v in row[2:-1]], dtype=np.float64)
            label = None if row[-1] == "" else int(row[-1])
            out.append(SleepWindow(date.fromisoformat(row[0]), int(row[1]), feats, label))
    return out


# ----------------------------------------------------------------------- places


@dataclass
class Place:
    place_id: int
    lat: float
    lon: float
    count: int = 0


@dataclass
class PlaceRegistry:
    radius_m: float = 100.0
    places: list[Place] = field(default_factory=list)
    models: dict[int, ClassifierModel] = field(default_factory=dict)

    def nearest(self, lat: float, lon: float, *, with_model: bool = False) -> tuple[Place | None, float]:
        best, best_d = None, math.inf
        for p in self.places:
            if with_model and p.place_id not in self.models:
                continue
            d = haversine_m(lat, lon, p.lat, p.lon)
            if d < best_d:
                best, best_d = p, d
        return best, best_d

    def assign(self, lat: float, lon: float) -> int:
        place, d = self.nearest(lat, lon)
        if place is not None and d <= self.radius_m:
            place.count += 1
            return place.place_id
        new = Place(len(self.places), lat, lon, 1)
        self.places.append(new)
        return new.place_id

    def get(self, place_id: int) -> Place:
        return self.places[place_id]


def assign_place(location: tuple[float, float], registry: PlaceRegistry) -> int:
    """Nearest place within the registry radius, else a newly registered one."""
    return registry.assign(*location)


# -------------------------------------------------------------------- detector


class SleepDetector:
    """Per-subject sleep classifier: one model per place plus a pooled fallback."""

    POOLED = -1

    def __init__(
        self,
        spec: ClassifierSpec | None = None,
        config: SleepConfig | None = None,
        subject: str = "",
    ) -> None:
        self.spec = spec or ClassifierSpec()
        self.config = config or SleepConfig()
        self.subject = subject
        self.registry = PlaceRegistry(self.config.place_radius_m)
        self.pooled: ClassifierModel | None = None
        self._rows: dict[int, list[SleepWindow]] = defaultdict(list)

    def place_of(self, window: SleepWindow) -> int | None:
        loc = window.location
        if loc is None:
            return None
        window.place_id = self.registry.assign(*loc)
        return window.place_id

    def add_training(self, windows: Iterable[SleepWindow]) -> None:
        for w in windows:
            if w.label is None:
                continue
            pid = self.place_of(w)
            self._rows[self.POOLED if pid is None else pid].append(w)

    @property
    def n_rows(self) -> int:
        return sum(len(v) for v in self._rows.values())

    def fit(self, seed: int = 0) -> None:
        self.registry.models.clear()
        self.pooled = None
        everything: list[SleepWindow] = []
        for pid in sorted(self._rows):
            rows = self._rows[pid]
            everything.extend(rows)
            if pid == self.POOLED or len(rows) < self.config.min_place_rows:
                continue
            labels = {w.label for w in rows}
            if len(labels) < 2:
                continue
            self.registry.models[pid] = train(windows_dataset(rows, self.subject), self.spec, seed + pid + 1)
        if len({w.label for w in everything}) == 2:
            self.pooled = train(windows_dataset(everything, self.subject), self.spec, seed)

    def model_for(self, place_id: int | None) -> ClassifierModel:
        models = self.registry.models
        if place_id is not None:
            if place_id in models:
                return models[place_id]
            p = self.registry.get(place_id)
            near, d = self.registry.nearest(p.lat, p.lon, with_model=True)
            if near is not None and d <= self.config.fallback_radius_m:
                return models[near.place_id]
        if self.pooled is not None:
            return self.pooled
        if models:
            return models[min(models)]
        raise NotTrainedError("no sleep model has been trained; run training first")

    def classify(self, windows: Sequence[SleepWindow]) -> list[SleepWindow]:
        """Set ``prob`` and ``label`` on each window using its place's model."""
        if not windows:
            return []
        groups: dict[int, list[int]] = defaultdict(list)
        chosen: dict[int, ClassifierModel] = {}
        for i, w in enumerate(windows):
            model = self.model_for(self.place_of(w))
            groups[id(model)].append(i)
            chosen[id(model)] = model
        for key, idx in groups.items():
            X = np.vstack([windows[i].features for i in idx])
            probs = chosen[key].predict_proba(X)
            for i, p in zip(idx, probs):
                windows[i].prob = float(p)
                windows[i].label = SLEEPING if p > 0.5 else AWAKE
        return list(windows)

    def detect(self, windows: Sequence[SleepWindow]) -> SleepEpisode | None:
        self.classify(windows)
        return merge_episodes(windows, self.config)

    # Training rows are not persisted; a restored detector classifies but
    # must be given its corpus again before refitting.
    def to_dict(self) -> dict[str, Any]:
        return {
            "format": "nudgekit-sleep-detector",
            "version": 1,
            "subject": self.subject,
            "spec": asdict(self.spec),
            "config": asdict(self.config),
            "places": [asdict(p) for p in self.registry.places],
            "models": {str(k): m.to_dict() for k, m in sorted(self.registry.models.items())},
            "pooled": None if self.pooled is None else self.pooled.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "SleepDetector":
        if doc.get("format") != "nudgekit-sleep-detector":
            raise ValueError("not a sleep detector document")
        det = cls(ClassifierSpec(**doc["spec"]), SleepConfig(**doc["config"]), doc.get("subject", ""))
        det.registry.places = [Place(**p) for p in doc["places"]]
        det.registry.models = {int(k): ClassifierModel.from_dict(m) for k, m in doc["models"].items()}
        det.pooled = None if doc["pooled"] is None else ClassifierModel.from_dict(doc["pooled"])
        return det

    @classmethod
    def from_json(cls, text: str) -> "SleepDetector":
        return cls.from_dict(json.loads(text))


def classify_day(windows: Sequence[SleepWindow], detector: SleepDetector) -> list[SleepWindow]:
    """Label a day's windows with the matching place model (fallbacks: nearest place
    with a model within the fallback radius, then the pooled model)."""
    return detector.classify(windows)


# ---------------------------------------------------------------------- merging


def positive_runs(windows: Sequence[SleepWindow], window_s: int) -> list[tuple[int, int]]:
    """Maximal runs of contiguous sleeping windows as [start, end) intervals."""
    runs: list[list[int]] = []
    for w in sorted(windows, key=lambda w: w.window_start):
        if w.label != SLEEPING:
            continue
        if runs and runs[-1][1] == w.window_start:
            runs[-1][1] += window_s
        else:
            runs.append([w.window_start, w.window_start + window_s])
    return [(s, e) for s, e in runs]


def merge_chunks(chunks: Sequence[tuple[int, int]], gap_s: int) -> list[tuple[int, int]]:
    """Merge sorted chunks whose gap is strictly below ``gap_s``."""
    merged: list[list[int]] = []
    for s, e in chunks:
        if merged and s - merged[-1][1] < gap_s:
            merged[-1][1] = max(merged[-1][1], e)
        else:
            merged.append([s, e])
    return [(s, e) for s, e in merged]


def merge_episodes(
    windows: Sequence[SleepWindow], config: SleepConfig | None = None
) -> SleepEpisode | None:
    """Merge a day's labelled windows into one episode, or ``None`` without sleep."""
    cfg = config or SleepConfig()
    runs = positive_runs(windows, cfg.window_s)
    if not runs:
        return None
    chunks = merge_chunks(runs, cfg.merge_gap_min * 60)
    if cfg.duration_excludes_absorbed_gaps:
        duration_s = sum(e - s for s, e in runs)
    else:
        duration_s = sum(e - s for s, e in chunks)
    first = min(windows, key=lambda w: w.window_start)
    places = [w.place_id for w in windows if w.label == SLEEPING and w.place_id is not None]
    place = max(set(places), key=places.count) if places else None
    return SleepEpisode(
        day_id=first.day_id,
        bed_time=chunks[0][0],
        wake_time=chunks[-1][1],
        duration_min=duration_s / 60.0,
        wakeup_count=len(chunks) - 1,
        chunks=chunks,
        place_id=place,
    )


# --------------------------------------------------------------------- feedback


@dataclass(frozen=True)
class FeedbackResponse:
    """``confirm`` accepts the detection; ``correction`` supplies bed and wake times."""

    kind: str = "confirm"
    bed_time: int | None = None
    wake_time: int | None = None

    @classmethod
    def confirm(cls) -> "FeedbackResponse":
        return cls("confirm")

    @classmethod
    def correction(cls, bed_time: int, wake_time: int) -> "FeedbackResponse":
        return cls("correction", bed_time, wake_time)


def corrected_chunks(
    detected: SleepEpisode, bed_time: int, wake_time: int
) -> list[tuple[int, int]]:
    """Detected chunks clipped to [bed, wake) with the outer edges moved to match."""
    inner = [(max(s, bed_time), min(e, wake_time)) for s, e in detected.chunks]
    inner = [(s, e) for s, e in inner if e > s]
    if not inner:
        return [(bed_time, wake_time)]
    inner[0] = (bed_time, inner[0][1])
    inner[-1] = (inner[-1][0], wake_time)
    return inner


def incorporate_feedback(
    detected: SleepEpisode,
    response: FeedbackResponse,
    windows: Sequence[SleepWindow],
) -> list[SleepWindow]:
    """Relabel the day's windows from a user confirmation or correction.

    Returns new labelled windows ready to append to the place's training set.
    """
    if response.kind == "confirm":
        chunks = detected.chunks
    elif response.kind == "correction":
        anchor = anchor_of(detected.day_id)
        b, w = response.bed_time, response.wake_time
        if b is None or w is None or not anchor <= b < w <= anchor + DAY_S:
            raise ValueError("correction interval must lie inside the analysis day")
        chunks = corrected_chunks(detected, b, w)
    else:
        raise ValueError(f"unknown feedback kind {response.kind!r}")
    out = [
        SleepWindow(w.day_id, w.window_start, w.features.copy(), None, w.place_id)
        for w in windows
    ]
    label_windows(out, chunks)
    return out


# --------------------------------------------------------------- learning curve


def learning_curve(
    corpus: Sequence[Sequence[SleepWindow]],
    spec: ClassifierSpec | None = None,
    seed: int = 0,
    config: SleepConfig | None = None,
) -> list[EvalMetrics]:
    """Prequential evaluation: for each d, train on days 1..d and score day d+1."""
    if len(corpus) < 2:
        raise ValueError("learning curve needs at least 2 labelled days")
    out = []
    for d in range(1, len(corpus)):
        det = SleepDetector(spec, config)
        for day in corpus[:d]:
            det.add_training(day)
        det.fit(seed)
        test = [SleepWindow(w.day_id, w.window_start, w.features, None) for w in corpus[d]]
        det.classify(test)
        labels = [w.label for w in corpus[d]]
        probs = [w.prob for w in test]
        try:
            out.append(compute_metrics(labels, probs))
        except ValueError:
            pred = [1 if p > 0.5 else 0 for p in probs]
            acc = float(np.mean(np.array(pred) == np.array(labels)))
            out.append(EvalMetrics(acc, 0.0, 0.0, 0.0, math.nan))
    return out
