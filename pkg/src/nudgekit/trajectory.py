"""Walking-route segmentation, street-string similarity, recurring-pattern
mining and alternative-route proposals."""

from __future__ import annotations

import json
import logging
import math
import xml.etree.ElementTree as ET
from collections import Counter
from dataclasses import asdict, dataclass, field
from datetime import date
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .geo import haversine_m, path_length_m
from .timeutil import DAY_S, parse_ts

log = logging.getLogger(__name__)

SEPARATOR = "|"


@dataclass(frozen=True)
class TrajectoryConfig:
    poi_radius_m: float = 10.0
    min_poi_points: int = 5
    poi_merge_radius_m: float = 100.0
    jump_filter_m: float = 150.0
    min_route_length_m: float = 100.0
    tau_fraction: float = 0.2
    min_occurrence: int = 2
    edit_level: str = "token"  # token | char
    selection_strategy: str = "smallest_increase"  # or closest_to_gap
    max_consecutive_rejections: int = 3
    mining_days: int = 14


@dataclass(frozen=True, slots=True)
class Fix:
    t: int
    lat: float
    lon: float


@dataclass
class PoiCluster:
    poi_id: int
    lat: float
    lon: float
    count: int


@dataclass
class Route:
    points: list[Fix]
    day_id: date
    start_poi: int | None = None
    end_poi: int | None = None
    steps: float = 0.0
    street_string: str | None = None

    @property
    def start_t(self) -> int:
        return self.points[0].t

    @property
    def end_t(self) -> int:
        return self.points[-1].t

    @property
    def length_m(self) -> float:
        return path_length_m([(p.lat, p.lon) for p in self.points])


@dataclass
class TrajectoryPattern:
    pattern_id: int
    start_poi: int | None
    end_poi: int | None
    weekdays: frozenset[int]
    start_clock_min: float
    end_clock_min: float
    avg_steps: float
    avg_speed: float
    map_distance: float
    street_string: str
    occurrences: int
    consecutive_rejections: int = 0
    start_lat: float = math.nan
    start_lon: float = math.nan
    end_lat: float = math.nan
    end_lon: float = math.nan

    @property
    def steps_per_m(self) -> float:
        return self.avg_steps / self.map_distance if self.map_distance > 0 else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["weekdays"] = sorted(self.weekdays)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrajectoryPattern":
        d = dict(d)
        d["weekdays"] = frozenset(d["weekdays"])
        return cls(**d)


@dataclass
class RouteAdvice:
    pattern_id: int
    street_string: str
    alt_distance: float
    est_steps: float
    created_at: int
    state: str = "pending"  # pending | seen_accepted | seen_rejected | expired


class StreetNameProvider(Protocol):
    def street_name(self, lat: float, lon: float) -> str | None: ...


class AlternativesProvider(Protocol):
    def alternatives(
        self, start: tuple[float, float], end: tuple[float, float]
    ) -> list[tuple[str, float]]: ...


class PoiRegistry:
    """Stable POI ids across days: a day's POI joins the nearest known one
    within ``radius_m``."""

    def __init__(self, radius_m: float = 100.0) -> None:
        self.radius_m = radius_m
        self.pois: list[PoiCluster] = []

    def resolve(self, lat: float, lon: float, count: int = 1) -> int:
        best, best_d = None, math.inf
        for p in self.pois:
            d = haversine_m(lat, lon, p.lat, p.lon)
            if d < best_d:
                best, best_d = p, d
        if best is not None and best_d <= self.radius_m:
            best.count += count
            return best.poi_id
        self.pois.append(PoiCluster(len(self.pois), lat, lon, count))
        return len(self.pois) - 1

    def get(self, poi_id: int) -> PoiCluster:
        return self.pois[poi_id]


# ----------------------------------------------------------------- segmenting


def sequential_clusters(fixes: Sequence[Fix], radius_m: float) -> list[list[int]]:
    """Group consecutive fixes lying within ``radius_m`` of the cluster's first fix."""
    clusters: list[list[int]] = []
    seed = None
    for i, f in enumerate(fixes):
        if seed is not None and haversine_m(seed.lat, seed.lon, f.lat, f.lon) <= radius_m:
            clusters[-1].append(i)
        else:
            clusters.append([i])
            seed = f
    return clusters


def _split_jumps(points: list[Fix], max_hop: float) -> list[list[Fix]]:
    pieces: list[list[Fix]] = [[]]
    for p in points:
        cur = pieces[-1]
        if cur and haversine_m(cur[-1].lat, cur[-1].lon, p.lat, p.lon) > max_hop:
            pieces.append([p])
        else:
            cur.append(p)
    return pieces


def segment_routes(
    fixes: Sequence[Fix],
    day_id: date,
    config: TrajectoryConfig | None = None,
    registry: PoiRegistry | None = None,
) -> tuple[list[Route], list[PoiCluster]]:
    """Split a weekday's fixes into walking routes between points of interest.

    Weekends produce nothing. POI ids come from ``registry`` when given, so
    they are comparable across days.
    """
    cfg = config or TrajectoryConfig()
    if len(fixes) < 2 or day_id.weekday() >= 5:
        return [], []
    fixes = sorted(fixes, key=lambda f: f.t)
    clusters = sequential_clusters(fixes, cfg.poi_radius_m)

    pois: list[PoiCluster] = []
    stops: list[tuple[int, int, int]] = []  # (first idx, last idx, poi id)
    for members in clusters:
        if len(members) < cfg.min_poi_points:
            continue
        lat = float(np.mean([fixes[i].lat for i in members]))
        lon = float(np.mean([fixes[i].lon for i in members]))
        pid = registry.resolve(lat, lon, len(members)) if registry else len(pois)
        pois.append(PoiCluster(pid, lat, lon, len(members)))
        stops.append((members[0], members[-1], pid))

    routes: list[Route] = []
    for (_, a_end, a_id), (b_start, _, b_id) in zip(stops, stops[1:]):
        between = list(fixes[a_end + 1 : b_start])
        pieces = _split_jumps(between, cfg.jump_filter_m)
        for k, piece in enumerate(pieces):
            if len(piece) < 2:
                continue
            route = Route(
                piece,
                day_id,
                a_id if k == 0 else None,
                b_id if k == len(pieces) - 1 else None,
            )
            if route.length_m >= cfg.min_route_length_m:
                routes.append(route)
    return routes, pois


# ------------------------------------------------------------- street strings


def route_string(route: Route, provider: StreetNameProvider) -> str:
    """Street names along the route, consecutive repeats dropped, joined by ``|``."""
    names: list[str] = []
    resolved = 0
    for p in route.points:
        try:
            name = provider.street_name(p.lat, p.lon)
        except Exception as exc:  # provider failure skips the point
            log.debug("street lookup failed at %s,%s: %s", p.lat, p.lon, exc)
            continue
        if not name:
            continue
        resolved += 1
        if SEPARATOR in name:
            raise ValueError(f"street name {name!r} contains the reserved separator")
        if not names or names[-1] != name:
            names.append(name)
    if resolved == 0:
        raise LookupError("no point of the route resolved to a street name")
    return SEPARATOR.join(names)


def tokens(s: str | Sequence[str]) -> list[str]:
    if isinstance(s, str):
        return s.split(SEPARATOR) if s else []
    return list(s)


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Unit-cost edit distance between two sequences."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def edit_distance(a: str | Sequence[str], b: str | Sequence[str], level: str = "token") -> int:
    """Levenshtein distance over street tokens, or over characters with ``level="char"``."""
    if level == "char":
        return levenshtein(a if isinstance(a, str) else SEPARATOR.join(a), b if isinstance(b, str) else SEPARATOR.join(b))
    if level != "token":
        raise ValueError(f"unknown edit level {level!r}")
    return levenshtein(tokens(a), tokens(b))


def similarity_threshold(a: str, b: str, fraction: float = 0.2, level: str = "token") -> int:
    size = max(len(tokens(a)), len(tokens(b))) if level == "token" else max(len(a), len(b))
    return math.ceil(round(fraction * size, 9))


def same_trajectory(a: str, b: str, config: TrajectoryConfig | None = None) -> bool:
    cfg = config or TrajectoryConfig()
    d = edit_distance(a, b, cfg.edit_level)
    return d <= similarity_threshold(a, b, cfg.tau_fraction, cfg.edit_level)


# --------------------------------------------------------------------- mining


def _circular_mean_min(minutes: Sequence[float]) -> float:
    ang = np.asarray(minutes) / 1440.0 * 2 * math.pi
    m = math.atan2(float(np.sin(ang).mean()), float(np.cos(ang).mean()))
    return (m / (2 * math.pi) * 1440.0) % 1440.0


def _clock_min(t: int) -> float:
    return (t % DAY_S) / 60.0


def _mode(values):
    values = [v for v in values if v is not None]
    if not values:
        return None
    counts = Counter(values)
    return min(counts, key=lambda v: (-counts[v], v))


def mine_patterns(
    routes: Sequence[Route],
    config: TrajectoryConfig | None = None,
    registry: PoiRegistry | None = None,
) -> list[TrajectoryPattern]:
    """Group routes whose street strings are within the edit threshold
    (single linkage); groups seen at least ``min_occurrence`` times become patterns.

    Every route needs ``street_string`` set.
    """
    cfg = config or TrajectoryConfig()
    rs = sorted(
        (r for r in routes if r.street_string is not None and r.day_id.weekday() < 5),
        key=lambda r: (r.day_id, r.start_t, r.street_string),
    )
    days = {r.day_id for r in rs}
    if days and (max(days) - min(days)).days + 1 < cfg.mining_days:
        log.info("mining over %d calendar days (fewer than %d)", (max(days) - min(days)).days + 1, cfg.mining_days)

    parent = list(range(len(rs)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(rs)):
        for j in range(i + 1, len(rs)):
            if find(i) != find(j) and same_trajectory(rs[i].street_string, rs[j].street_string, cfg):
                parent[find(j)] = find(i)

    groups: dict[int, list[int]] = {}
    for i in range(len(rs)):
        groups.setdefault(find(i), []).append(i)

    patterns = []
    for members in sorted(groups.values(), key=lambda m: m[0]):
        if len(members) < cfg.min_occurrence:
            continue
        group = [rs[i] for i in members]
        strings = [r.street_string for r in group]
        medoid = min(
            range(len(group)),
            key=lambda i: (sum(edit_distance(strings[i], s, cfg.edit_level) for s in strings), i),
        )
        lengths = [r.length_m for r in group]
        speeds = [L / max(1, r.end_t - r.start_t) for L, r in zip(lengths, group)]
        start = _mode([r.start_poi for r in group])
        end = _mode([r.end_poi for r in group])
        p = TrajectoryPattern(
            pattern_id=len(patterns),
            start_poi=start,
            end_poi=end,
            weekdays=frozenset(r.day_id.weekday() for r in group),
            start_clock_min=_circular_mean_min([_clock_min(r.start_t) for r in group]),
            end_clock_min=_circular_mean_min([_clock_min(r.end_t) for r in group]),
            avg_steps=float(np.mean([r.steps for r in group])),
            avg_speed=float(np.mean(speeds)),
            map_distance=float(np.mean(lengths)),
            street_string=strings[medoid],
            occurrences=len(group),
        )
        if registry is not None and start is not None and end is not None:
            a, b = registry.get(start), registry.get(end)
            p.start_lat, p.start_lon, p.end_lat, p.end_lon = a.lat, a.lon, b.lat, b.lon
        else:
            first, last = group[medoid].points[0], group[medoid].points[-1]
            p.start_lat, p.start_lon, p.end_lat, p.end_lon = first.lat, first.lon, last.lat, last.lon
        patterns.append(p)
    return patterns


# ---------------------------------------------------------------- alternatives


def is_suppressed(pattern: TrajectoryPattern, max_rejections: int = 3) -> bool:
    return pattern.consecutive_rejections > max_rejections


def propose_alternative(
    pattern: TrajectoryPattern,
    provider: AlternativesProvider,
    best_daily_steps: float,
    steps_so_far_today: float,
    *,
    now: int = 0,
    config: TrajectoryConfig | None = None,
) -> RouteAdvice | None:
    """Pick a longer alternative route whose extra steps fit the day's remaining gap.

    ``smallest_increase`` takes the gentlest qualifying nudge;
    ``closest_to_gap`` the one nearest the full gap.
    """
    cfg = config or TrajectoryConfig()
    if is_suppressed(pattern, cfg.max_consecutive_rejections):
        return None
    if pattern.map_distance <= 0:
        return None
    try:
        alts = provider.alternatives((pattern.start_lat, pattern.start_lon), (pattern.end_lat, pattern.end_lon))
    except Exception as exc:
        log.warning("alternative-route provider failed for pattern %s: %s", pattern.pattern_id, exc)
        return None
    density = pattern.avg_steps / pattern.map_distance
    room = max(0.0, best_daily_steps - steps_so_far_today - pattern.avg_steps)
    cap = pattern.avg_steps + room
    candidates = []
    for street_string, dist in alts:
        est = dist * density
        if pattern.avg_steps < est <= cap:
            candidates.append((est, dist, street_string))
    if not candidates:
        return None
    if cfg.selection_strategy == "smallest_increase":
        est, dist, s = min(candidates)
    elif cfg.selection_strategy == "closest_to_gap":
        est, dist, s = min(candidates, key=lambda c: (abs(cap - c[0]), c[0], c[2]))
    else:
        raise ValueError(f"unknown selection strategy {cfg.selection_strategy!r}")
    return RouteAdvice(pattern.pattern_id, s, dist, est, now)


def patterns_to_json(patterns: Sequence[TrajectoryPattern]) -> str:
    return json.dumps([p.to_dict() for p in patterns], indent=1)


def patterns_from_json(text: str) -> list[TrajectoryPattern]:
    return [TrajectoryPattern.from_dict(d) for d in json.loads(text)]


def read_gpx(path: str | Path) -> list[Fix]:
    """Track points of a GPX file as time-sorted fixes; points without a time are skipped."""
    root = ET.parse(path).getroot()
    out = []
    for el in root.iter():
        if el.tag.rsplit("}", 1)[-1] != "trkpt":
            continue
        t = next((c.text for c in el if c.tag.rsplit("}", 1)[-1] == "time"), None)
        if t is None:
            continue
        out.append(Fix(parse_ts(t.strip()), float(el.attrib["lat"]), float(el.attrib["lon"])))
    out.sort(key=lambda f: f.t)
    return out
