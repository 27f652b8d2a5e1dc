"""A Manhattan street grid standing in for map services.

Nodes are ``(i, j)`` with ``i`` counting columns eastwards and ``j`` rows
northwards. Horizontal streets are named per row, vertical ones per column,
so a path's street string follows directly from its edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..geo import EARTH_RADIUS_M, offset_m
from ..trajectory import SEPARATOR

Node = tuple[int, int]

_WORDS = (
    "Ash", "Birch", "Cedar", "Dale", "Elm", "Fern", "Grove", "Hazel", "Iris", "Juniper",
    "Kings", "Laurel", "Maple", "North", "Oak", "Pine", "Queens", "Rowan", "Spruce", "Thorn",
    "Union", "Vale", "Willow", "York", "Zion", "Abbey", "Bridge", "Castle", "Dock", "Eden",
)


@dataclass(frozen=True)
class WorldConfig:
    width: int = 20
    height: int = 20
    edge_m: float = 100.0
    origin_lat: float = 51.5
    origin_lon: float = -0.12
    k_alternatives: int = 3


@dataclass(frozen=True)
class GridPath:
    nodes: tuple[Node, ...]
    street_string: str

    @property
    def n_edges(self) -> int:
        return len(self.nodes) - 1


def _street_names(n: int, suffix: str) -> list[str]:
    out = []
    for k in range(n):
        base = _WORDS[k % len(_WORDS)]
        out.append(f"{base} {suffix}" if k < len(_WORDS) else f"{base} {suffix} {k // len(_WORDS) + 1}")
    return out


class World:
    def __init__(self, config: WorldConfig | None = None) -> None:
        self.config = config or WorldConfig()
        c = self.config
        if c.width < 2 or c.height < 2:
            raise ValueError("grid needs at least 2x2 nodes")
        self.row_names = _street_names(c.height, "Street")
        self.col_names = _street_names(c.width, "Avenue")
        self._cos = math.cos(math.radians(c.origin_lat))

    # -- coordinates ------------------------------------------------------
    def latlon(self, x: float, y: float) -> tuple[float, float]:
        """Coordinates of grid position ``(x, y)`` measured in edges."""
        c = self.config
        return offset_m(c.origin_lat, c.origin_lon, y * c.edge_m, x * c.edge_m)

    def node_latlon(self, node: Node) -> tuple[float, float]:
        return self.latlon(*node)

    def grid_xy(self, lat: float, lon: float) -> tuple[float, float]:
        c = self.config
        north = math.radians(lat - c.origin_lat) * EARTH_RADIUS_M
        east = math.radians(lon - c.origin_lon) * EARTH_RADIUS_M * self._cos
        return east / c.edge_m, north / c.edge_m

    def node_of(self, lat: float, lon: float) -> tuple[Node, float]:
        """Nearest node and its distance in metres."""
        x, y = self.grid_xy(lat, lon)
        i = min(max(round(x), 0), self.config.width - 1)
        j = min(max(round(y), 0), self.config.height - 1)
        return (i, j), math.hypot(x - i, y - j) * self.config.edge_m

    def street_name(self, lat: float, lon: float) -> str | None:
        """Name of the nearest street line; ``None`` well off the grid."""
        c = self.config
        x, y = self.grid_xy(lat, lon)
        if not (-0.5 <= x <= c.width - 0.5 and -0.5 <= y <= c.height - 0.5):
            return None
        i = min(max(round(x), 0), c.width - 1)
        j = min(max(round(y), 0), c.height - 1)
        if abs(y - j) <= abs(x - i):
            return self.row_names[j]
        return self.col_names[i]

    # -- paths ------------------------------------------------------------
    def in_grid(self, node: Node) -> bool:
        return 0 <= node[0] < self.config.width and 0 <= node[1] < self.config.height

    def path_length_m(self, path: GridPath) -> float:
        return path.n_edges * self.config.edge_m

    def _string(self, nodes: list[Node]) -> str:
        names: list[str] = []
        for (x0, y0), (x1, y1) in zip(nodes, nodes[1:]):
            name = self.row_names[y0] if y0 == y1 else self.col_names[x0]
            if not names or names[-1] != name:
                names.append(name)
        return SEPARATOR.join(names)

    def _walk(self, corners: list[Node]) -> GridPath:
        nodes = [corners[0]]
        for a, b in zip(corners, corners[1:]):
            dx = int(np.sign(b[0] - a[0]))
            dy = int(np.sign(b[1] - a[1]))
            cur = a
            while cur != b:
                cur = (cur[0] + dx, cur[1] + dy)
                nodes.append(cur)
        return GridPath(tuple(nodes), self._string(nodes))

    def shortest_path(self, a: Node, b: Node) -> GridPath:
        """The L-shaped path going along the row first, then the column."""
        return self._walk([a, (b[0], a[1]), b])

    def detours(self, a: Node, b: Node, k: int | None = None) -> list[GridPath]:
        """Up to ``k`` loop-free detours, the d-th being exactly 2*d edges longer
        than the shortest path. Each steps sideways d blocks before travelling."""
        k = self.config.k_alternatives if k is None else k
        if a == b:
            return []
        out = []
        vertical_first = a[0] != b[0]
        for d in range(1, k + 1):
            path = self._detour(a, b, d, vertical_first) or self._detour(a, b, d, not vertical_first)
            if path is not None:
                out.append(path)
        return out

    def _detour(self, a: Node, b: Node, d: int, offset_in_y: bool) -> GridPath | None:
        # Offset along one axis, travel along the other, then come back.
        if offset_in_y:
            s = int(np.sign(b[1] - a[1])) or 1
            for y in (a[1] - d * s, b[1] + d * s):
                corners = [a, (a[0], y), (b[0], y), b]
                if all(self.in_grid(n) for n in corners) and a[0] != b[0]:
                    return self._walk(_dedup(corners))
        else:
            s = int(np.sign(b[0] - a[0])) or 1
            for x in (a[0] - d * s, b[0] + d * s):
                corners = [a, (x, a[1]), (x, b[1]), b]
                if all(self.in_grid(n) for n in corners) and a[1] != b[1]:
                    return self._walk(_dedup(corners))
        return None

    def alternatives(
        self, start: tuple[float, float], end: tuple[float, float]
    ) -> list[tuple[str, float]]:
        """Alternative routes between the nodes nearest two coordinates."""
        a, da = self.node_of(*start)
        b, db = self.node_of(*end)
        half = self.config.edge_m / 2
        if da > half or db > half:
            return []
        return [(p.street_string, self.path_length_m(p)) for p in self.detours(a, b)]

    def find_path(self, a: Node, b: Node, street_string: str) -> GridPath | None:
        for p in [self.shortest_path(a, b), *self.detours(a, b)]:
            if p.street_string == street_string:
                return p
        return None

    # -- walking ----------------------------------------------------------
    def walk_fixes(
        self,
        path: GridPath,
        t0: int,
        speed_mps: float,
        interval_s: int,
        rng: np.random.Generator | None = None,
        sigma_m: float = 0.0,
    ) -> tuple[list[tuple[int, float, float]], int]:
        """GPS fixes every ``interval_s`` along ``path``; returns fixes and the arrival time."""
        length = self.path_length_m(path)
        duration = int(round(length / speed_mps))
        times = list(range(t0, t0 + duration, interval_s)) + [t0 + duration]
        out = []
        for t in times:
            dist_edges = min(length, (t - t0) * speed_mps) / self.config.edge_m
            seg = min(int(dist_edges), path.n_edges - 1)
            frac = dist_edges - seg
            (x0, y0), (x1, y1) = path.nodes[seg], path.nodes[seg + 1]
            x = x0 + (x1 - x0) * frac
            y = y0 + (y1 - y0) * frac
            lat, lon = self.latlon(x, y)
            if sigma_m > 0 and rng is not None:
                n, e = rng.normal(0.0, sigma_m, 2)
                lat, lon = offset_m(lat, lon, n, e)
            out.append((t, lat, lon))
        return out, t0 + duration


def _dedup(corners: list[Node]) -> list[Node]:
    out = [corners[0]]
    for c in corners[1:]:
        if c != out[-1]:
            out.append(c)
    return out
