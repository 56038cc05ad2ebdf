"""Maze geometry, visibility and fire-aware grid pathfinding."""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

Cell = tuple[int, int]

FIRE_PENALTY = 20.0
FIRE_LIFETIME = 5.0

# 4-connected moves in a fixed order; path tie-breaking depends on it.
_MOVES = ((1, 0), (-1, 0), (0, 1), (0, -1))


class MapError(ValueError):
    pass


class Unreachable(RuntimeError):
    """No wall-free route exists between two cells."""


@dataclass(frozen=True, slots=True)
class Pose:
    x: float
    y: float
    heading: float = 0.0

    def distance_to(self, other: Pose) -> float:
        return math.hypot(other.x - self.x, other.y - self.y)


@dataclass(frozen=True)
class MazeMap:
    width: int
    height: int
    blocked: frozenset
    spawn_player: Cell
    spawn_agent: Cell
    cell_size: float = 1.0

    def __post_init__(self):
        if self.width < 3 or self.height < 3:
            raise MapError("map must be at least 3x3")
        for x in range(self.width):
            if (x, 0) not in self.blocked or (x, self.height - 1) not in self.blocked:
                raise MapError("map border must be fully walled")
        for y in range(self.height):
            if (0, y) not in self.blocked or (self.width - 1, y) not in self.blocked:
                raise MapError("map border must be fully walled")
        for name, cell in (("player", self.spawn_player), ("agent", self.spawn_agent)):
            if self.is_blocked(cell):
                raise MapError(f"{name} spawn {cell} is blocked")
        if self.grid_distance(self.spawn_player, self.spawn_agent) < 0:
            raise MapError("spawn cells are not mutually reachable")

    # -- cells and coordinates -------------------------------------------------

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.width and 0 <= cell[1] < self.height

    def is_blocked(self, cell: Cell) -> bool:
        return cell in self.blocked or not self.in_bounds(cell)

    def cell_of(self, x: float, y: float) -> Cell:
        cs = self.cell_size
        return (int(math.floor(x / cs)), int(math.floor(y / cs)))

    def center(self, cell: Cell) -> tuple[float, float]:
        cs = self.cell_size
        return ((cell[0] + 0.5) * cs, (cell[1] + 0.5) * cs)

    def center_pose(self, cell: Cell, heading: float = 0.0) -> Pose:
        x, y = self.center(cell)
        return Pose(x, y, heading)

    def neighbors(self, cell: Cell) -> Iterator[Cell]:
        x, y = cell
        for dx, dy in _MOVES:
            nxt = (x + dx, y + dy)
            if not self.is_blocked(nxt):
                yield nxt

    @cached_property
    def open_cells(self) -> tuple[Cell, ...]:
        return tuple(
            (x, y)
            for y in range(self.height)
            for x in range(self.width)
            if (x, y) not in self.blocked
        )

    @cached_property
    def _index(self) -> dict[Cell, int]:
        return {c: i for i, c in enumerate(self.open_cells)}

    @cached_property
    def _bfs_tables(self) -> tuple[np.ndarray, np.ndarray]:
        # dist[t, s]: steps from s to t; nxt[t, s]: index of the next cell on a
        # shortest s->t route (first in _MOVES order), -1 when s == t or unreachable.
        cells = self.open_cells
        index = self._index
        n = len(cells)
        adj = [[index[nb] for nb in self.neighbors(c)] for c in cells]
        dist = np.full((n, n), -1, dtype=np.int32)
        nxt = np.full((n, n), -1, dtype=np.int32)
        for t in range(n):
            drow = dist[t]
            nrow = nxt[t]
            drow[t] = 0
            queue = deque([t])
            while queue:
                u = queue.popleft()
                du = drow[u] + 1
                for v in adj[u]:
                    if drow[v] < 0:
                        drow[v] = du
                        nrow[v] = u
                        queue.append(v)
        return dist, nxt

    def grid_distance(self, a: Cell, b: Cell) -> int:
        """Plain 4-connected step count, or -1 if ``b`` cannot be reached."""
        index = self._index
        if a not in index or b not in index:
            return -1
        dist, _ = self._bfs_tables
        return int(dist[index[b], index[a]])

    def shortest_route(self, a: Cell, b: Cell) -> list[Cell]:
        index = self._index
        dist, nxt = self._bfs_tables
        if a not in index or b not in index or dist[index[b], index[a]] < 0:
            raise Unreachable(f"{b} is not reachable from {a}")
        cells = self.open_cells
        t = index[b]
        row = nxt[t]
        path = [a]
        i = index[a]
        while i != t:
            i = int(row[i])
            path.append(cells[i])
        return path

    def is_chokepoint(self, cell: Cell) -> bool:
        nbs = list(self.neighbors(cell))
        if len(nbs) != 2:
            return False
        (ax, ay), (bx, by) = nbs
        return ax == bx or ay == by

    def to_text(self) -> str:
        rows = []
        for y in range(self.height):
            row = []
            for x in range(self.width):
                if (x, y) in self.blocked:
                    row.append("#")
                elif (x, y) == self.spawn_player:
                    row.append("P")
                elif (x, y) == self.spawn_agent:
                    row.append("A")
                else:
                    row.append(".")
            rows.append("".join(row))
        return "\n".join(rows) + "\n"


def parse_map(text: str, cell_size: float = 1.0) -> MazeMap:
    """Parse the plain-text grid format (``#`` wall, ``.`` open, ``P``/``A`` spawns)."""
    lines = [ln.rstrip("\r") for ln in text.split("\n")]
    while lines and not lines[-1]:
        lines.pop()
    if not lines:
        raise MapError("empty map")
    width = len(lines[0])
    blocked = set()
    spawns: dict[str, Cell] = {}
    for y, line in enumerate(lines):
        if len(line) != width:
            raise MapError(f"row {y + 1} has width {len(line)}, expected {width}")
        for x, ch in enumerate(line):
            if ch == "#":
                blocked.add((x, y))
            elif ch in "PA":
                if ch in spawns:
                    raise MapError(f"duplicate spawn {ch!r}")
                spawns[ch] = (x, y)
            elif ch != ".":
                raise MapError(f"unknown map symbol {ch!r} at row {y + 1}, column {x + 1}")
    if "P" not in spawns or "A" not in spawns:
        raise MapError("map needs both a P and an A spawn")
    return MazeMap(width, len(lines), frozenset(blocked), spawns["P"], spawns["A"], cell_size)


def load_map(path: str | Path | None = None, cell_size: float = 1.0) -> MazeMap:
    if path is None:
        text = resources.files("mazing").joinpath("data/default_map.txt").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    return parse_map(text, cell_size)


@dataclass
class FireField:
    """Burning cells with their remaining lifetime in seconds."""

    active: dict = field(default_factory=dict)

    def ignite(self, cell: Cell, lifetime: float = FIRE_LIFETIME) -> None:
        if not 0.0 < lifetime <= FIRE_LIFETIME:
            raise ValueError("fire lifetime must lie in (0, 5] seconds")
        self.active[cell] = lifetime

    def advance(self, dt: float) -> None:
        # 1e-9 absorbs float drift from summing 1/tick_rate steps
        for cell in list(self.active):
            left = self.active[cell] - dt
            if left <= 1e-9:
                del self.active[cell]
            else:
                self.active[cell] = left

    @property
    def cells(self) -> frozenset:
        return frozenset(self.active)

    def __contains__(self, cell) -> bool:
        return cell in self.active

    def __len__(self) -> int:
        return len(self.active)

    def copy(self) -> FireField:
        return FireField(dict(self.active))


# -- visibility ------------------------------------------------------------------


def traversed_cells(map_: MazeMap, a: Pose, b: Pose) -> Iterator[Cell]:
    """Cells touched by the segment a->b, including both neighbours at exact corner crossings."""
    cs = map_.cell_size
    x0, y0, x1, y1 = a.x / cs, a.y / cs, b.x / cs, b.y / cs
    cx, cy = math.floor(x0), math.floor(y0)
    dx, dy = x1 - x0, y1 - y0
    if dx > 0:
        sx, tdx, tmx = 1, 1.0 / dx, (cx + 1 - x0) / dx
    elif dx < 0:
        sx, tdx, tmx = -1, -1.0 / dx, (x0 - cx) / -dx
    else:
        sx, tdx, tmx = 0, math.inf, math.inf
    if dy > 0:
        sy, tdy, tmy = 1, 1.0 / dy, (cy + 1 - y0) / dy
    elif dy < 0:
        sy, tdy, tmy = -1, -1.0 / dy, (y0 - cy) / -dy
    else:
        sy, tdy, tmy = 0, math.inf, math.inf
    yield (cx, cy)
    while True:
        t = tmx if tmx < tmy else tmy
        if t > 1.0:
            return
        if abs(tmx - tmy) <= 1e-12:
            yield (cx + sx, cy)
            yield (cx, cy + sy)
            cx += sx
            cy += sy
            tmx += tdx
            tmy += tdy
        elif tmx < tmy:
            cx += sx
            tmx += tdx
        else:
            cy += sy
            tmy += tdy
        yield (cx, cy)


def walls_between(map_: MazeMap, a: Pose, b: Pose) -> int:
    blocked = map_.blocked
    hit = {c for c in traversed_cells(map_, a, b) if c in blocked}
    return len(hit)


def line_of_sight(map_: MazeMap, a: Pose, b: Pose) -> bool:
    blocked = map_.blocked
    for c in traversed_cells(map_, a, b):
        if c in blocked:
            return False
    return True


def angle_diff(a: float, b: float) -> float:
    """Smallest absolute angle between two headings, in radians."""
    d = (b - a) % (2.0 * math.pi)
    return min(d, 2.0 * math.pi - d)


def in_view_cone(
    observer: Pose,
    fov_angle: float,
    fov_radius: float,
    target: Pose,
    map_: MazeMap,
) -> bool:
    """Visibility inside a cone of ``fov_angle`` degrees; boundaries count as visible."""
    dx = target.x - observer.x
    dy = target.y - observer.y
    dist = math.hypot(dx, dy)
    if dist > fov_radius:
        return False
    if dist > 0.0:
        bearing = angle_diff(observer.heading, math.atan2(dy, dx))
        # 1e-12 keeps the half-angle boundary inclusive under atan2 rounding
        if bearing > math.radians(fov_angle) / 2.0 + 1e-12:
            return False
    return line_of_sight(map_, observer, target)


# -- pathfinding ------------------------------------------------------------------


@dataclass(frozen=True)
class Path:
    cells: tuple
    cost: float

    def __len__(self) -> int:
        return len(self.cells)

    @property
    def steps(self) -> int:
        return len(self.cells) - 1

    def fire_cells(self, fires: Iterable[Cell]) -> int:
        fires = set(fires)
        return sum(1 for c in self.cells[1:] if c in fires)


def _fire_cells(fires) -> frozenset:
    if fires is None:
        return frozenset()
    if isinstance(fires, FireField):
        return fires.cells
    return frozenset(fires)


def plan_path(
    map_: MazeMap,
    fires,
    start: Cell,
    goal: Cell,
    risk_factor: float,
    penalty: float = FIRE_PENALTY,
) -> Path:
    """Cheapest 4-connected route where each entered fire cell costs ``penalty * (1 - risk_factor)`` extra."""
    if not 0.0 <= risk_factor <= 1.0:
        raise ValueError("risk_factor must lie in [0, 1]")
    if map_.grid_distance(start, goal) < 0:
        raise Unreachable(f"{goal} is not reachable from {start}")
    burning = _fire_cells(fires)
    extra = penalty * (1.0 - risk_factor)
    route = map_.shortest_route(start, goal)
    if extra == 0.0 or not burning.intersection(route[1:]):
        return Path(tuple(route), float(len(route) - 1))
    return _dijkstra(map_, burning, start, goal, extra)


def _dijkstra(map_: MazeMap, burning: frozenset, start: Cell, goal: Cell, extra: float) -> Path:
    best = {start: 0.0}
    parent: dict[Cell, Cell] = {}
    seq = 0
    heap = [(0.0, seq, start)]
    done = set()
    while heap:
        cost, _, cell = heapq.heappop(heap)
        if cell in done:
            continue
        if cell == goal:
            break
        done.add(cell)
        for nb in map_.neighbors(cell):
            step = 1.0 + (extra if nb in burning else 0.0)
            c = cost + step
            if c < best.get(nb, math.inf):
                best[nb] = c
                parent[nb] = cell
                seq += 1
                heapq.heappush(heap, (c, seq, nb))
    cells = [goal]
    while cells[-1] != start:
        cells.append(parent[cells[-1]])
    cells.reverse()
    return Path(tuple(cells), best[goal])
