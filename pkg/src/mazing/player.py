"""Player avatar mechanics and the scripted bots that stand in for human players."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .agent import AgentConfig, AgentState, move_clipped
from .world import Cell, FireField, MazeMap, Pose, Unreachable, in_view_cone, line_of_sight, plan_path


@dataclass(frozen=True)
class PlayerConfig:
    speed: float = 2.5  # 1.25x the agent base speed
    dash_multiplier: float = 2.0
    dash_duration: float = 0.6
    dash_cooldown: float = 2.0
    burst_size: int = 5
    fire_interval: float = 0.12
    burst_recharge: float = 1.5
    bomb_cooldown: float = 4.0
    bomb_range: float = 3.0
    projectile_speed: float = 12.0
    projectile_damage: float = 5.0
    projectile_lifetime: float = 1.0
    max_health: float = 100.0
    fire_damage: float = 10.0  # per second, applies to player and agent
    s_hit: float = 10.0
    s_kill: float = 100.0
    s_loss: float = 50.0
    collision_radius: float = 0.5
    hit_radius: float = 0.4
    view_angle: float = 90.0
    view_radius: float = 8.0
    peripheral_radius: float = 2.0

    def __post_init__(self):
        if not 0 < self.dash_duration < 1.0:
            raise ValueError("dash duration must be below one second")
        if not 1 <= self.burst_size <= 5:
            raise ValueError("burst size must lie in [1, 5]")


@dataclass
class PlayerCommand:
    move_dir: tuple = (0.0, 0.0)
    aim: float = 0.0
    shoot_held: bool = False
    bomb_pressed: bool = False
    dash_pressed: bool = False

    def __post_init__(self):
        if math.hypot(*self.move_dir) > 1.0 + 1e-9:
            raise ValueError("move_dir must have norm <= 1")


@dataclass
class Projectile:
    x: float
    y: float
    vx: float
    vy: float
    damage: float
    ttl: float


@dataclass
class PlayerState:
    pose: Pose
    health: float
    score: float = 0.0
    cooldowns: dict = field(default_factory=lambda: {"dash": 0.0, "shoot": 0.0, "bomb": 0.0})
    dash_active_remaining: float = 0.0
    shots_remaining_in_burst: int = 5
    shot_timer: float = 0.0
    recharging: bool = False
    aim: float = 0.0
    tries_dash_on_cd: int = 0
    tries_shoot_on_cd: int = 0
    tries_bomb_on_cd: int = 0
    hits: int = 0
    kills: int = 0
    losses: int = 0

    @classmethod
    def spawn(cls, map_: MazeMap, cfg: PlayerConfig = PlayerConfig()) -> PlayerState:
        return cls(pose=map_.center_pose(map_.spawn_player), health=cfg.max_health,
                   shots_remaining_in_burst=cfg.burst_size)

    def respawn(self, map_: MazeMap, cfg: PlayerConfig = PlayerConfig()) -> None:
        self.pose = map_.center_pose(map_.spawn_player)
        self.health = cfg.max_health
        self.dash_active_remaining = 0.0


@dataclass
class PlayerTick:
    """What the avatar did during one tick."""

    projectiles: list = field(default_factory=list)
    bomb_cell: Cell | None = None
    shooting: bool = False
    dash_pressed: bool = False
    dash_started: bool = False
    shoot_on_cd: bool = False
    dash_on_cd: bool = False
    bomb_on_cd: bool = False
    distance: float = 0.0
    rotation: float = 0.0  # degrees
    mouse: float = 0.0  # degrees


def _wrap(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def bomb_landing(map_: MazeMap, pose: Pose, aim: float, reach: float) -> Cell:
    """Last open cell along the throw before a wall stops it."""
    landing = map_.cell_of(pose.x, pose.y)
    n = max(1, int(math.ceil(reach / 0.1)))
    for i in range(1, n + 1):
        d = reach * i / n
        c = map_.cell_of(pose.x + d * math.cos(aim), pose.y + d * math.sin(aim))
        if map_.is_blocked(c):
            break
        landing = c
    return landing


def apply_command(state: PlayerState, cmd: PlayerCommand, dt: float, map_: MazeMap, fires: FireField,
                  cfg: PlayerConfig = PlayerConfig()) -> PlayerTick:
    out = PlayerTick(dash_pressed=cmd.dash_pressed)
    cd = state.cooldowns
    for k in cd:
        cd[k] = max(0.0, cd[k] - dt)
    state.shot_timer = max(0.0, state.shot_timer - dt)
    # burst refills once its recharge timer has run out
    if state.recharging and cd["shoot"] <= 1e-9:
        state.shots_remaining_in_burst = cfg.burst_size
        state.recharging = False

    out.mouse = math.degrees(abs(_wrap(cmd.aim - state.aim)))
    state.aim = cmd.aim

    if cmd.dash_pressed:
        if cd["dash"] <= 1e-9:
            cd["dash"] = cfg.dash_cooldown
            state.dash_active_remaining = cfg.dash_duration
            out.dash_started = True
        else:
            state.tries_dash_on_cd += 1
            out.dash_on_cd = True

    mx, my = cmd.move_dir
    speed = cfg.speed * (cfg.dash_multiplier if state.dash_active_remaining > 1e-9 else 1.0)
    pose = state.pose
    heading = pose.heading
    if mx or my:
        nx, ny = move_clipped(map_, pose.x, pose.y, mx * speed * dt, my * speed * dt)
        heading = math.atan2(my, mx) % (2.0 * math.pi)
    else:
        nx, ny = pose.x, pose.y
    out.rotation = math.degrees(abs(_wrap(heading - pose.heading)))
    out.distance = math.hypot(nx - pose.x, ny - pose.y)
    state.pose = Pose(nx, ny, heading)
    state.dash_active_remaining = max(0.0, state.dash_active_remaining - dt)

    if cmd.shoot_held:
        if state.shots_remaining_in_burst > 0:
            state.recharging = False
            cd["shoot"] = 0.0
            if state.shot_timer <= 1e-9:
                v = cfg.projectile_speed
                out.projectiles.append(Projectile(nx, ny, v * math.cos(cmd.aim), v * math.sin(cmd.aim),
                                                  cfg.projectile_damage, cfg.projectile_lifetime))
                out.shooting = True
                state.shots_remaining_in_burst -= 1
                state.shot_timer = cfg.fire_interval
                if state.shots_remaining_in_burst == 0:
                    cd["shoot"] = cfg.burst_recharge
                    state.recharging = True
        else:
            state.tries_shoot_on_cd += 1
            out.shoot_on_cd = True
    elif state.shots_remaining_in_burst < cfg.burst_size and not state.recharging:
        cd["shoot"] = cfg.burst_recharge
        state.recharging = True

    if cmd.bomb_pressed:
        if cd["bomb"] <= 1e-9:
            cell = bomb_landing(map_, state.pose, cmd.aim, cfg.bomb_range)
            fires.ignite(cell)
            cd["bomb"] = cfg.bomb_cooldown
            out.bomb_cell = cell
        else:
            state.tries_bomb_on_cd += 1
            out.bomb_on_cd = True
    return out


@dataclass
class Interactions:
    hits: int = 0
    kill: bool = False
    loss: str | None = None  # "collision" or "health"


def _segment_hits_circle(x0, y0, x1, y1, cx, cy, r) -> float | None:
    dx, dy = x1 - x0, y1 - y0
    L2 = dx * dx + dy * dy
    t = 0.0 if L2 == 0 else max(0.0, min(1.0, ((cx - x0) * dx + (cy - y0) * dy) / L2))
    px, py = x0 + t * dx, y0 + t * dy
    if (px - cx) ** 2 + (py - cy) ** 2 <= r * r:
        return t
    return None


def resolve_interactions(player: PlayerState, agent: AgentState, projectiles: list, fires: FireField,
                         dt: float, map_: MazeMap, cfg: PlayerConfig = PlayerConfig(),
                         agent_cfg: AgentConfig = AgentConfig()) -> Interactions:
    """Apply projectile hits, fire damage, kills and losses; mutates states and ``projectiles``."""
    out = Interactions()
    ax, ay = agent.pose.x, agent.pose.y
    survivors = []
    for pr in projectiles:
        x1, y1 = pr.x + pr.vx * dt, pr.y + pr.vy * dt
        t = _segment_hits_circle(pr.x, pr.y, x1, y1, ax, ay, cfg.hit_radius)
        if t is not None and line_of_sight(map_, Pose(pr.x, pr.y), Pose(pr.x + t * (x1 - pr.x), pr.y + t * (y1 - pr.y))):
            agent.health -= pr.damage
            player.score += cfg.s_hit
            player.hits += 1
            out.hits += 1
            continue
        if not line_of_sight(map_, Pose(pr.x, pr.y), Pose(x1, y1)):
            continue
        pr.x, pr.y = x1, y1
        pr.ttl -= dt
        if pr.ttl > 1e-9:
            survivors.append(pr)
    projectiles[:] = survivors

    if map_.cell_of(player.pose.x, player.pose.y) in fires:
        player.health -= cfg.fire_damage * dt
    if map_.cell_of(agent.pose.x, agent.pose.y) in fires:
        agent.health -= cfg.fire_damage * dt

    if agent.health <= 0:
        player.score += cfg.s_kill
        player.kills += 1
        out.kill = True
        agent.respawn(map_, agent_cfg)

    if player.pose.distance_to(agent.pose) <= cfg.collision_radius:
        out.loss = "collision"
    elif player.health <= 0:
        out.loss = "health"
    if out.loss:
        player.score -= cfg.s_loss
        player.losses += 1
        player.respawn(map_, cfg)
        agent.respawn(map_, agent_cfg)
        projectiles.clear()
    return out


# -- scripted bots -----------------------------------------------------------------


class PolicyKind(enum.Enum):
    AGGRESSIVE = "aggressive"
    KITER = "kiter"
    RANDOM = "random"


@dataclass
class Observation:
    """The fogged game view handed to a bot. ``agent_pose`` is None unless the agent is visible."""

    t: float
    map: MazeMap
    pose: Pose
    aim: float
    health: float
    fires: frozenset
    agent_pose: Pose | None
    dash_ready: bool
    bomb_ready: bool
    shots: int
    memory: dict = field(default_factory=dict)


def player_sees(map_: MazeMap, pose: Pose, aim: float, target: Pose, cfg: PlayerConfig = PlayerConfig()) -> bool:
    if pose.distance_to(target) <= cfg.peripheral_radius:
        return line_of_sight(map_, pose, target)
    return in_view_cone(Pose(pose.x, pose.y, aim), cfg.view_angle, cfg.view_radius, target, map_)


def observe(t: float, map_: MazeMap, player: PlayerState, agent: AgentState, fires: FireField,
            memory: dict, cfg: PlayerConfig = PlayerConfig()) -> Observation:
    visible = player_sees(map_, player.pose, player.aim, agent.pose, cfg)
    return Observation(
        t=t, map=map_, pose=player.pose, aim=player.aim, health=player.health, fires=fires.cells,
        agent_pose=agent.pose if visible else None,
        dash_ready=player.cooldowns["dash"] <= 1e-9, bomb_ready=player.cooldowns["bomb"] <= 1e-9,
        shots=player.shots_remaining_in_burst, memory=memory,
    )


def _toward(pose: Pose, x: float, y: float) -> tuple:
    dx, dy = x - pose.x, y - pose.y
    n = math.hypot(dx, dy)
    if n < 1e-6:
        return (0.0, 0.0)
    return (dx / n, dy / n)


def _route_step(obs: Observation, goal: Cell) -> tuple:
    """Unit direction toward the next cell on a fire-averse route to ``goal``."""
    map_ = obs.map
    here = map_.cell_of(obs.pose.x, obs.pose.y)
    mem = obs.memory
    key = (here, goal, obs.fires)
    if mem.get("route_key") != key:
        try:
            route = plan_path(map_, obs.fires, here, goal, 0.0).cells
        except Unreachable:
            route = (here,)
        mem["route_key"] = key
        mem["route"] = route
    route = mem["route"]
    nxt = route[1] if len(route) > 1 else route[0]
    return _toward(obs.pose, *map_.center(nxt))


def _roam(obs: Observation, rng: np.random.Generator) -> tuple:
    map_ = obs.map
    mem = obs.memory
    here = map_.cell_of(obs.pose.x, obs.pose.y)
    target = mem.get("roam")
    if target is None or target == here:
        cells = map_.open_cells
        target = cells[int(rng.integers(len(cells)))]
        while map_.grid_distance(here, target) <= 0:
            target = cells[int(rng.integers(len(cells)))]
        mem["roam"] = target
    return _route_step(obs, target)


def _remember(obs: Observation) -> None:
    if obs.agent_pose is not None:
        obs.memory["last_seen"] = (obs.agent_pose.x, obs.agent_pose.y)
        obs.memory["last_seen_t"] = obs.t


def _hunt(obs: Observation, rng: np.random.Generator) -> tuple:
    mem = obs.memory
    last = mem.get("last_seen")
    if last is not None and obs.t - mem.get("last_seen_t", -1e9) < 5.0:
        cell = obs.map.cell_of(*last)
        if cell != obs.map.cell_of(obs.pose.x, obs.pose.y):
            return _route_step(obs, cell)
        mem["last_seen"] = None
    return _roam(obs, rng)


def _aggressive(obs: Observation, rng: np.random.Generator) -> PlayerCommand:
    _remember(obs)
    if obs.agent_pose is None:
        move = _hunt(obs, rng)
        aim = math.atan2(move[1], move[0]) if move != (0.0, 0.0) else obs.aim
        return PlayerCommand(move, aim)
    a = obs.agent_pose
    aim = math.atan2(a.y - obs.pose.y, a.x - obs.pose.x)
    dist = obs.pose.distance_to(a)
    if dist > 3.0:
        move = _route_step(obs, obs.map.cell_of(a.x, a.y))
    elif dist < 1.5:
        away = _toward(obs.pose, a.x, a.y)
        move = (-away[0], -away[1])
    else:
        move = (0.0, 0.0)
    return PlayerCommand(move, aim, shoot_held=True, bomb_pressed=dist < 4.0 and obs.bomb_ready,
                         dash_pressed=dist < 1.5 and obs.dash_ready)


def _flee_step(obs: Observation, agent_cell: Cell) -> tuple:
    map_ = obs.map
    here = map_.cell_of(obs.pose.x, obs.pose.y)
    best, best_key = here, None
    for c in (here, *map_.neighbors(here)):
        if c in obs.fires:
            continue
        d = map_.grid_distance(agent_cell, c)
        key = (d, c != here)
        if best_key is None or key > best_key:
            best, best_key = c, key
    return _toward(obs.pose, *map_.center(best))


def _kiter(obs: Observation, rng: np.random.Generator, keep: float = 5.0, danger: float = 2.5) -> PlayerCommand:
    _remember(obs)
    if obs.agent_pose is None:
        move = _hunt(obs, rng)
        aim = math.atan2(move[1], move[0]) if move != (0.0, 0.0) else obs.aim
        return PlayerCommand(move, aim)
    a = obs.agent_pose
    aim = math.atan2(a.y - obs.pose.y, a.x - obs.pose.x)
    dist = obs.pose.distance_to(a)
    agent_cell = obs.map.cell_of(a.x, a.y)
    here = obs.map.cell_of(obs.pose.x, obs.pose.y)
    if dist < keep:
        move = _flee_step(obs, agent_cell)
    elif dist > keep + 2.0:
        move = _route_step(obs, agent_cell)
    else:
        move = (0.0, 0.0)
    bomb = obs.bomb_ready and dist < keep + 1.0 and obs.map.is_chokepoint(here)
    return PlayerCommand(move, aim, shoot_held=True, bomb_pressed=bomb,
                         dash_pressed=dist < danger and obs.dash_ready)


def _random(obs: Observation, rng: np.random.Generator) -> PlayerCommand:
    u = rng.random(5)
    if u[0] < 0.2:
        move = (0.0, 0.0)
    else:
        ang = 2.0 * math.pi * u[1]
        move = (math.cos(ang), math.sin(ang))
    bits = rng.random(3) < 0.5
    return PlayerCommand(move, 2.0 * math.pi * u[2], bool(bits[0]), bool(bits[1]), bool(bits[2]))


_POLICIES = {
    PolicyKind.AGGRESSIVE: _aggressive,
    PolicyKind.KITER: _kiter,
    PolicyKind.RANDOM: _random,
}


def scripted_policy(kind: PolicyKind | str, observation: Observation, rng: np.random.Generator) -> PlayerCommand:
    """Bot command for one tick. Bots keep their memory in ``observation.memory``."""
    return _POLICIES[PolicyKind(kind)](observation, rng)
