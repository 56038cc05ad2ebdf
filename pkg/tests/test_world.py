from __future__ import annotations

import itertools
import math
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mazing.world import (
    FIRE_PENALTY,
    FireField,
    MapError,
    Pose,
    Unreachable,
    in_view_cone,
    line_of_sight,
    load_map,
    parse_map,
    plan_path,
    walls_between,
)

MAP = load_map()


def segment_hits_box(a, b, x0, y0, x1, y1):
    """Closed-box slab test for the segment a->b."""
    t0, t1 = 0.0, 1.0
    for p, d, lo, hi in ((a[0], b[0] - a[0], x0, x1), (a[1], b[1] - a[1], y0, y1)):
        if d == 0.0:
            if p < lo or p > hi:
                return False
            continue
        ta, tb = (lo - p) / d, (hi - p) / d
        if ta > tb:
            ta, tb = tb, ta
        t0, t1 = max(t0, ta), min(t1, tb)
        if t0 > t1:
            return False
    return True


def oracle_walls(map_, a: Pose, b: Pose) -> int:
    return sum(
        segment_hits_box((a.x, a.y), (b.x, b.y), cx, cy, cx + 1.0, cy + 1.0)
        for cx, cy in map_.blocked
    )


def bfs_len(map_, a, b):
    dist = {a: 0}
    q = deque([a])
    while q:
        c = q.popleft()
        for n in map_.neighbors(c):
            if n not in dist:
                dist[n] = dist[c] + 1
                q.append(n)
    return dist.get(b, -1)


def random_open_pose(rng, map_):
    cells = map_.open_cells
    cx, cy = cells[rng.integers(len(cells))]
    return Pose(cx + rng.uniform(0.01, 0.99), cy + rng.uniform(0.01, 0.99))


def test_default_map_shape():
    assert (MAP.width, MAP.height) == (16, 16)
    assert MAP.grid_distance(MAP.spawn_player, MAP.spawn_agent) > 0
    assert parse_map(MAP.to_text()) == MAP


def test_map_validation():
    with pytest.raises(MapError):
        parse_map("####\n#P.A\n####\n")  # open border
    with pytest.raises(MapError):
        parse_map("#####\n#P#A#\n#####\n")  # spawns disconnected


def test_los_trivial_cases():
    p = Pose(1.5, 1.5)
    assert line_of_sight(MAP, p, p)
    assert line_of_sight(MAP, Pose(1.5, 1.5), Pose(6.5, 1.5))
    # cell (7, 1) is a wall between the two corridors of row 1
    assert not line_of_sight(MAP, Pose(6.5, 1.5), Pose(8.5, 1.5))
    assert walls_between(MAP, Pose(6.5, 1.5), Pose(8.5, 1.5)) == 1


def test_walls_match_slab_oracle_random_poses():
    rng = np.random.default_rng(5)
    for _ in range(1500):
        a, b = random_open_pose(rng, MAP), random_open_pose(rng, MAP)
        n = walls_between(MAP, a, b)
        assert n == oracle_walls(MAP, a, b)
        assert (n == 0) == line_of_sight(MAP, a, b)


def test_walls_match_slab_oracle_cell_centres():
    cells = MAP.open_cells[::3]
    for ca, cb in itertools.product(cells, cells):
        a, b = MAP.center_pose(ca), MAP.center_pose(cb)
        assert walls_between(MAP, a, b) == oracle_walls(MAP, a, b)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 10**9))
def test_los_symmetric(seed):
    rng = np.random.default_rng(seed)
    a, b = random_open_pose(rng, MAP), random_open_pose(rng, MAP)
    assert line_of_sight(MAP, a, b) == line_of_sight(MAP, b, a)
    assert walls_between(MAP, a, b) == walls_between(MAP, b, a)


def test_view_cone_examples():
    obs = Pose(1.5, 1.5, 0.0)
    assert in_view_cone(obs, 90.0, 4.0, Pose(3.5, 1.5), MAP)
    assert not in_view_cone(obs, 90.0, 4.0, Pose(5.5 + 1e-9, 1.5), MAP)
    # exactly on the half-angle boundary (45 degrees), clear line to the target
    open_map = parse_map("######\n#P...#\n#....#\n#....#\n#...A#\n######\n")
    obs = Pose(1.5, 1.5, 0.0)
    assert in_view_cone(obs, 90.0, 10.0, Pose(3.5, 3.5), open_map)
    assert not in_view_cone(obs, 89.9, 10.0, Pose(3.5, 3.5), open_map)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**9), st.floats(1, 359), st.floats(0.5, 15))
def test_view_cone_monotone(seed, angle, radius):
    rng = np.random.default_rng(seed)
    obs = random_open_pose(rng, MAP)
    obs = Pose(obs.x, obs.y, rng.uniform(0, 2 * math.pi))
    tgt = random_open_pose(rng, MAP)
    if in_view_cone(obs, angle, radius, tgt, MAP):
        assert in_view_cone(obs, min(360.0, angle + 10), radius, tgt, MAP)
        assert in_view_cone(obs, angle, radius + 1, tgt, MAP)


def test_fire_lifetime():
    f = FireField()
    f.ignite((2, 3))
    with pytest.raises(ValueError):
        f.ignite((2, 4), 6.0)
    for _ in range(149):
        f.advance(1 / 30)
    assert (2, 3) in f
    f.advance(1 / 30)
    assert len(f) == 0


def all_simple_path_costs(map_, start, goal, burning, extra):
    best = math.inf
    stack = [(start, (start,), 0.0)]
    while stack:
        cell, path, cost = stack.pop()
        if cell == goal:
            best = min(best, cost)
            continue
        for n in map_.neighbors(cell):
            if n not in path:
                stack.append((n, path + (n,), cost + 1.0 + (extra if n in burning else 0.0)))
    return best


SMALL = parse_map("######\n#P...#\n#.##.#\n#.##.#\n#...A#\n######\n")


def test_path_avoids_fire_when_cautious():
    fires = {(2, 1), (3, 1)}  # the top route burns; the bottom route is equally long
    path = plan_path(SMALL, fires, (1, 1), (4, 1), 0.0)
    assert not set(path.cells) & fires
    assert path.cost == all_simple_path_costs(SMALL, (1, 1), (4, 1), fires, FIRE_PENALTY)
    assert path.cost == 9.0


def test_path_exhaustive_oracle():
    rng = np.random.default_rng(1)
    cells = SMALL.open_cells
    for _ in range(60):
        fires = {cells[i] for i in rng.choice(len(cells), size=rng.integers(0, 5), replace=False)}
        a, b = (cells[i] for i in rng.choice(len(cells), size=2, replace=False))
        risk = float(rng.choice([0.0, 0.3, 0.9, 1.0]))
        extra = FIRE_PENALTY * (1 - risk)
        path = plan_path(SMALL, fires, a, b, risk)
        assert path.cost == pytest.approx(all_simple_path_costs(SMALL, a, b, fires, extra))
        assert path.cost == pytest.approx(path.steps + extra * path.fire_cells(fires))


def test_risk_one_ignores_fire():
    fires = set(MAP.open_cells[::4])
    for a, b in [(MAP.spawn_player, MAP.spawn_agent), ((1, 9), (12, 5))]:
        assert plan_path(MAP, fires, a, b, 1.0).cells == plan_path(MAP, None, a, b, 0.0).cells


def test_no_fire_matches_bfs():
    rng = np.random.default_rng(3)
    cells = MAP.open_cells
    for _ in range(200):
        a, b = (cells[i] for i in rng.choice(len(cells), size=2, replace=False))
        assert plan_path(MAP, None, a, b, 0.0).steps == bfs_len(MAP, a, b)


def test_cost_non_increasing_in_risk():
    rng = np.random.default_rng(4)
    cells = MAP.open_cells
    for _ in range(50):
        fires = {cells[i] for i in rng.choice(len(cells), size=15, replace=False)}
        a, b = (cells[i] for i in rng.choice(len(cells), size=2, replace=False))
        costs = [plan_path(MAP, fires, a, b, r).cost for r in np.linspace(0, 1, 6)]
        assert all(c1 <= c0 + 1e-12 for c0, c1 in zip(costs, costs[1:]))


def test_unreachable_goal():
    with pytest.raises(Unreachable):
        plan_path(MAP, None, MAP.spawn_player, (0, 0), 0.0)
    with pytest.raises(ValueError):
        plan_path(MAP, None, MAP.spawn_player, MAP.spawn_agent, 1.5)
