from __future__ import annotations

import math

import numpy as np
import pytest

from mazing.agent import AgentState, FrustrationBand
from mazing.player import (
    PlayerCommand,
    PlayerConfig,
    PlayerState,
    PolicyKind,
    apply_command,
    observe,
    player_sees,
    resolve_interactions,
    scripted_policy,
)
from mazing.sim import Condition, SessionConfig, run_session
from mazing.world import FireField, Pose, load_map, parse_map

MAP = load_map()
DT = 1 / 30
ROOM = parse_map("##########\n#P.......#\n#........#\n#........#\n#.......A#\n##########\n")


def fresh(map_=MAP):
    return PlayerState.spawn(map_), FireField()


def test_dash_on_cooldown_is_counted():
    p, fires = fresh()
    assert apply_command(p, PlayerCommand(dash_pressed=True), DT, MAP, fires).dash_started
    for _ in range(36):  # 1.2 s later
        apply_command(p, PlayerCommand(), DT, MAP, fires)
    tick = apply_command(p, PlayerCommand(dash_pressed=True), DT, MAP, fires)
    assert not tick.dash_started and tick.dash_on_cd and p.tries_dash_on_cd == 1


def test_dashes_never_closer_than_cooldown():
    p, fires = fresh()
    starts = [i for i in range(600) if apply_command(p, PlayerCommand(dash_pressed=True), DT, MAP, fires).dash_started]
    gaps = np.diff(starts) * DT
    assert len(starts) > 1 and gaps.min() >= 2.0 - 1e-9


def test_full_burst_is_five_projectiles():
    p, fires = fresh()
    shots = [len(apply_command(p, PlayerCommand(shoot_held=True), DT, MAP, fires).projectiles) for _ in range(30)]
    assert sum(shots) == 5
    assert p.tries_shoot_on_cd > 0


def test_burst_recharges_after_release():
    cfg = PlayerConfig()
    p, fires = fresh()
    for _ in range(30):
        apply_command(p, PlayerCommand(shoot_held=True), DT, MAP, fires)
    for _ in range(int(cfg.burst_recharge * 30) + 1):
        apply_command(p, PlayerCommand(), DT, MAP, fires)
    assert p.shots_remaining_in_burst == cfg.burst_size


def test_no_burst_exceeds_five():
    rng = np.random.default_rng(0)
    p, fires = fresh()
    run = 0
    for _ in range(3000):
        held = bool(rng.random() < 0.8)
        tick = apply_command(p, PlayerCommand(shoot_held=held), DT, MAP, fires)
        run = run + len(tick.projectiles) if held else 0
        assert run <= 5 or p.shots_remaining_in_burst == 5
        assert 0 <= p.shots_remaining_in_burst <= 5


def test_bomb_fire_lasts_five_seconds():
    p, fires = fresh()
    tick = apply_command(p, PlayerCommand(aim=0.0, bomb_pressed=True), DT, MAP, fires)
    cell = tick.bomb_cell
    alive = 0
    while cell in fires:
        alive += 1
        fires.advance(DT)
    assert alive * DT == pytest.approx(5.0)


def test_bomb_gated_by_cooldown():
    p, fires = fresh()
    ticks = [apply_command(p, PlayerCommand(bomb_pressed=True), DT, MAP, fires) for _ in range(30)]
    assert sum(t.bomb_cell is not None for t in ticks) == 1
    assert p.tries_bomb_on_cd == 29


def test_speed_and_dash_multiplier():
    cfg = PlayerConfig()
    p, fires = fresh(ROOM)
    d = apply_command(p, PlayerCommand(move_dir=(1.0, 0.0)), DT, ROOM, fires).distance
    assert d == pytest.approx(cfg.speed * DT)
    assert cfg.speed > 2.0  # faster than the agent's base speed
    d = apply_command(p, PlayerCommand(move_dir=(0.0, 1.0), dash_pressed=True), DT, ROOM, fires).distance
    assert d == pytest.approx(cfg.speed * cfg.dash_multiplier * DT)


def test_projectile_hit_scores():
    cfg = PlayerConfig()
    p, fires = fresh(ROOM)
    agent = AgentState.spawn(ROOM, FrustrationBand(0, 100))
    agent.pose = Pose(4.5, 1.5)
    tick = apply_command(p, PlayerCommand(aim=0.0, shoot_held=True), DT, ROOM, fires)
    projectiles = list(tick.projectiles)
    hits = 0
    for _ in range(15):
        hits += resolve_interactions(p, agent, projectiles, fires, DT, ROOM).hits
    assert hits == 1
    assert p.score == cfg.s_hit
    assert agent.health == 200 - cfg.projectile_damage


def test_collision_respawns_both():
    cfg = PlayerConfig()
    p, fires = fresh(ROOM)
    agent = AgentState.spawn(ROOM, FrustrationBand(0, 100))
    agent.pose = Pose(p.pose.x + 0.3, p.pose.y)
    p.pose = Pose(3.5, 2.5)
    agent.pose = Pose(3.7, 2.5)
    res = resolve_interactions(p, agent, [], fires, DT, ROOM)
    assert res.loss == "collision" and p.score == -cfg.s_loss
    assert ROOM.cell_of(p.pose.x, p.pose.y) == ROOM.spawn_player
    assert ROOM.cell_of(agent.pose.x, agent.pose.y) == ROOM.spawn_agent


def test_fire_damage_over_two_seconds():
    cfg = PlayerConfig()
    p, fires = fresh(ROOM)
    agent = AgentState.spawn(ROOM, FrustrationBand(0, 100))
    fires.ignite(ROOM.spawn_player)
    for _ in range(60):
        resolve_interactions(p, agent, [], fires, DT, ROOM)
    assert p.health == pytest.approx(cfg.max_health - 2 * cfg.fire_damage)


def test_kill_respawns_agent_and_scores():
    cfg = PlayerConfig()
    p, fires = fresh(ROOM)
    agent = AgentState.spawn(ROOM, FrustrationBand(0, 100))
    agent.health = 1.0
    agent.pose = Pose(4.5, 1.5)
    projectiles = apply_command(p, PlayerCommand(aim=0.0, shoot_held=True), DT, ROOM, fires).projectiles
    for _ in range(15):
        resolve_interactions(p, agent, projectiles, fires, DT, ROOM)
    assert p.kills == 1 and p.score == cfg.s_hit + cfg.s_kill
    assert agent.health == 200


def test_random_policy_deterministic():
    def commands(seed):
        rng = np.random.default_rng(seed)
        p, fires = fresh()
        agent = AgentState.spawn(MAP, FrustrationBand(0, 100))
        return [scripted_policy(PolicyKind.RANDOM, observe(i * DT, MAP, p, agent, fires, {}), rng) for i in range(50)]

    assert commands(3) == commands(3)


def test_aggressive_damages_stationary_agent():
    rng = np.random.default_rng(0)
    p, fires = fresh(ROOM)
    agent = AgentState.spawn(ROOM, FrustrationBand(0, 100))
    memory = {}
    projectiles = []
    for i in range(300):
        cmd = scripted_policy(PolicyKind.AGGRESSIVE, observe(i * DT, ROOM, p, agent, fires, memory), rng)
        projectiles.extend(apply_command(p, cmd, DT, ROOM, fires).projectiles)
        resolve_interactions(p, agent, projectiles, fires, DT, ROOM)
        fires.advance(DT)
    assert agent.health < 200 or p.kills > 0


def test_kiter_keeps_more_distance():
    def mean_distance(policy):
        vals = [run_session(SessionConfig(condition=c, seed=s, policy=policy)).column("Agent Distance From Player").mean()
                for s in range(3) for c in (Condition.CONTROL, Condition.BAND_75_100)]
        return np.mean(vals)

    assert mean_distance(PolicyKind.KITER) > mean_distance(PolicyKind.AGGRESSIVE)


def test_fog_of_war():
    rng = np.random.default_rng(9)
    cfg = PlayerConfig()
    cells = MAP.open_cells
    p, fires = fresh()
    agent = AgentState.spawn(MAP, FrustrationBand(0, 100))
    for _ in range(2000):
        c1, c2 = cells[rng.integers(len(cells))], cells[rng.integers(len(cells))]
        p.pose = Pose(c1[0] + rng.random(), c1[1] + rng.random())
        p.aim = rng.uniform(0, 2 * math.pi)
        agent.pose = Pose(c2[0] + rng.random(), c2[1] + rng.random())
        obs = observe(0.0, MAP, p, agent, fires, {})
        if obs.agent_pose is not None:
            d = p.pose.distance_to(agent.pose)
            bearing = abs(math.remainder(math.atan2(agent.pose.y - p.pose.y, agent.pose.x - p.pose.x) - p.aim, 2 * math.pi))
            assert d <= cfg.peripheral_radius or (d <= cfg.view_radius and bearing <= math.radians(cfg.view_angle) / 2 + 1e-9)
        assert (obs.agent_pose is not None) == player_sees(MAP, p.pose, p.aim, agent.pose)
