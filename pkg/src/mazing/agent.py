"""The frustration-driven opponent.

Frustration is a single scalar confined to the session's band. Every sensory,
motor and decision parameter is a deterministic function of it (see
:func:`derive_manifestations`); the focused / frustrated / rage regimes are not
coded explicitly, they fall out of those mappings.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .world import (
    FIRE_PENALTY,
    Cell,
    FireField,
    MazeMap,
    Path,
    Pose,
    Unreachable,
    in_view_cone,
    plan_path,
    walls_between,
)


class Mode(enum.Enum):
    SEARCH = "search"
    CHASE = "chase"


class Sense(enum.Enum):
    NONE = 0
    SEEN = 1
    HEARD = 2


@dataclass(frozen=True)
class FrustrationBand:
    f_min: float
    f_max: float

    def __post_init__(self):
        if not 0.0 <= self.f_min <= self.f_max <= 100.0:
            raise ValueError(f"invalid frustration band ({self.f_min}, {self.f_max})")

    @property
    def is_control(self) -> bool:
        return self.f_min == self.f_max == 0.0

    def clamp(self, f: float) -> float:
        return min(self.f_max, max(self.f_min, f))


CONTROL_BAND = FrustrationBand(0.0, 0.0)


@dataclass(frozen=True)
class FrustrationConfig:
    delta_path_longer: float = 2.0
    delta_path_shorter: float = -0.5
    delta_spotted: float = 1.0
    delta_lost_sight: float = 5.0
    delta_hit: float = 4.0
    decay_search: float = -1.0

    def __post_init__(self):
        if self.delta_path_longer <= 0:
            raise ValueError("delta_path_longer must be positive")
        if abs(self.delta_path_shorter) >= self.delta_path_longer:
            raise ValueError("|delta_path_shorter| must be smaller than delta_path_longer")
        if min(self.delta_spotted, self.delta_lost_sight, self.delta_hit) <= 0:
            raise ValueError("spotted, lost-sight and hit deltas must be positive")
        if self.decay_search >= 0:
            raise ValueError("decay_search must be negative")


@dataclass(frozen=True)
class ManifestationCurves:
    """Endpoints (at f=0, f=100) of each frustration-driven parameter."""

    fov_angle: tuple = (135.0, 45.0)
    fov_radius: tuple = (10.0, 15.0)
    hear_radius: tuple = (10.0, 6.0)
    hear_prob_base: tuple = (0.1, 0.5)
    move_speed: tuple = (1.0, 1.6)  # multiples of base_move_speed
    rot_speed: tuple = (1.0, 1.8)  # multiples of base_rot_speed
    search_turns: tuple = (6, 2)
    risk_factor: tuple = (0.0, 1.0)
    jitter_max: float = 90.0
    base_move_speed: float = 2.0  # m/s
    base_rot_speed: float = 360.0  # deg/s


@dataclass(frozen=True)
class ManifestationParams:
    fov_angle: float
    fov_radius: float
    hear_radius: float
    hear_prob_base: float
    move_speed: float
    rot_speed: float
    search_turns: int
    risk_factor: float
    jitter: float


def _lerp(ends, u: float) -> float:
    a, b = ends
    return a + (b - a) * u


def derive_manifestations(f: float, curves: ManifestationCurves = ManifestationCurves()) -> ManifestationParams:
    if not 0.0 <= f <= 100.0:
        raise ValueError(f"frustration {f} outside [0, 100]")
    u = f / 100.0
    return ManifestationParams(
        fov_angle=_lerp(curves.fov_angle, u),
        fov_radius=_lerp(curves.fov_radius, u),
        hear_radius=_lerp(curves.hear_radius, u),
        hear_prob_base=_lerp(curves.hear_prob_base, u),
        move_speed=curves.base_move_speed * _lerp(curves.move_speed, u),
        rot_speed=curves.base_rot_speed * _lerp(curves.rot_speed, u),
        search_turns=int(math.floor(_lerp(curves.search_turns, u) + 0.5)),
        risk_factor=_lerp(curves.risk_factor, u),
        jitter=curves.jitter_max * u * u,
    )


@dataclass(frozen=True)
class AgentConfig:
    max_health: float = 200.0
    hear_charge_rate: float = 0.1  # per second in range
    hear_charge_cap: float = 0.5
    hear_interval: float = 1.0
    risk_threshold: float = 1.5  # safe_len / risky_len above which the risky path is taken
    lose_time: float = 3.0
    fire_penalty: float = FIRE_PENALTY
    arrive_radius: float = 0.35


@dataclass
class Stimuli:
    path_change: int = 0  # +1 path got longer, -1 shorter
    spotted: bool = False
    lost_sight: bool = False
    hits: int = 0
    resting: bool = False


@dataclass
class AgentState:
    f: float
    pose: Pose
    health: float
    params: ManifestationParams
    mode: Mode = Mode.SEARCH
    current_goal: Cell | None = None
    last_path_len: float | None = None
    hear_charge: float = 0.0
    hear_timer: float = 0.0
    since_sensed: float = 0.0
    seeing: bool = False
    waypoints: list = field(default_factory=list)
    plan: Path | None = None
    plan_key: tuple | None = None
    risky: bool = False

    @classmethod
    def spawn(cls, map_: MazeMap, band: FrustrationBand, curves=ManifestationCurves(),
              cfg: AgentConfig = AgentConfig(), f: float | None = None) -> AgentState:
        f0 = band.f_min if f is None else band.clamp(f)
        return cls(f=f0, pose=map_.center_pose(map_.spawn_agent, math.pi),
                   health=cfg.max_health, params=derive_manifestations(f0, curves))

    def respawn(self, map_: MazeMap, cfg: AgentConfig = AgentConfig()) -> None:
        self.pose = map_.center_pose(map_.spawn_agent, math.pi)
        self.health = cfg.max_health
        self.mode = Mode.SEARCH
        self.current_goal = None
        self.last_path_len = None
        self.hear_charge = 0.0
        self.hear_timer = 0.0
        self.since_sensed = 0.0
        self.seeing = False
        self.waypoints = []
        self.plan = None
        self.plan_key = None
        self.risky = False


def update_frustration(state: AgentState, stimuli: Stimuli, dt: float,
                       cfg: FrustrationConfig, band: FrustrationBand) -> float:
    if band.is_control:
        return 0.0
    f = state.f
    if stimuli.path_change > 0:
        f += cfg.delta_path_longer * dt
    elif stimuli.path_change < 0:
        f += cfg.delta_path_shorter * dt
    if stimuli.spotted:
        f += cfg.delta_spotted
    if stimuli.lost_sight:
        f += cfg.delta_lost_sight
    f += cfg.delta_hit * stimuli.hits
    if stimuli.resting:
        f += cfg.decay_search * dt
    return band.clamp(f)


def hearing_probability(state: AgentState, walls: int) -> float:
    return min(1.0, (state.params.hear_prob_base + state.hear_charge) * 0.5 ** walls)


def sense_player(state: AgentState, player_pose: Pose, map_: MazeMap, rng: np.random.Generator,
                 dt: float, cfg: AgentConfig = AgentConfig()) -> Sense:
    p = state.params
    if in_view_cone(state.pose, p.fov_angle, p.fov_radius, player_pose, map_):
        return Sense.SEEN
    if state.pose.distance_to(player_pose) > p.hear_radius:
        state.hear_charge = 0.0
        state.hear_timer = 0.0
        return Sense.NONE
    state.hear_charge = min(cfg.hear_charge_cap, state.hear_charge + cfg.hear_charge_rate * dt)
    state.hear_timer += dt
    heard = False
    while state.hear_timer >= cfg.hear_interval - 1e-9:
        state.hear_timer -= cfg.hear_interval
        prob = hearing_probability(state, walls_between(map_, state.pose, player_pose))
        if rng.random() < prob:
            heard = True
    return Sense.HEARD if heard else Sense.NONE


@dataclass
class AgentCommand:
    goal: Cell | None
    path: Path | None
    target: tuple | None  # world point to steer toward
    risky: bool = False
    spotted: bool = False
    lost_sight: bool = False
    path_change: int = 0


def remaining_length(map_: MazeMap, pose: Pose, path: Path) -> float:
    """Metres left along ``path`` measured from the current pose."""
    cells = path.cells
    nxt = cells[1] if len(cells) > 1 else cells[0]
    cx, cy = map_.center(nxt)
    return math.hypot(cx - pose.x, cy - pose.y) + max(0, len(cells) - 2) * map_.cell_size


def choose_path(map_: MazeMap, fires, start: Cell, goal: Cell, risk_factor: float, health_frac: float,
                rng: np.random.Generator, cfg: AgentConfig = AgentConfig()) -> tuple[Path, bool]:
    """Pick between the fire-averse route and the one allowed by the current risk appetite."""
    safe = plan_path(map_, fires, start, goal, 0.0, cfg.fire_penalty)
    risk = risk_factor * health_frac
    if risk <= 0.0:
        return safe, False
    risky = plan_path(map_, fires, start, goal, min(1.0, risk), cfg.fire_penalty)
    if risky.cells == safe.cells:
        return safe, safe.fire_cells(_cells(fires)) > 0
    ratio = safe.steps / max(1, risky.steps)
    if ratio > cfg.risk_threshold or rng.random() < risk:
        return risky, True
    return safe, safe.fire_cells(_cells(fires)) > 0


def _cells(fires):
    return fires.cells if isinstance(fires, FireField) else frozenset(fires or ())


def _new_tour(state: AgentState, map_: MazeMap, rng: np.random.Generator) -> None:
    here = map_.cell_of(state.pose.x, state.pose.y)
    cells = [c for c in map_.open_cells if c != here and map_.grid_distance(here, c) > 0]
    n = max(1, state.params.search_turns)
    picks = rng.choice(len(cells), size=n, replace=len(cells) < n)
    state.waypoints = [cells[int(i)] for i in picks]


def agent_decide(state: AgentState, sensed: Sense, map_: MazeMap, fires, player_pose: Pose,
                 rng: np.random.Generator, dt: float, cfg: AgentConfig = AgentConfig()) -> AgentCommand:
    spotted = sensed is Sense.SEEN and not state.seeing
    state.seeing = sensed is Sense.SEEN
    lost = False
    here = map_.cell_of(state.pose.x, state.pose.y)
    prev_goal = state.current_goal
    prev_mode = state.mode

    if sensed is not Sense.NONE:
        state.mode = Mode.CHASE
        state.since_sensed = 0.0
        state.waypoints = []
        state.current_goal = map_.cell_of(player_pose.x, player_pose.y)
    elif state.mode is Mode.CHASE:
        state.since_sensed += dt
        if state.since_sensed >= cfg.lose_time - 1e-9:
            state.mode = Mode.SEARCH
            state.current_goal = None
            lost = True

    if state.mode is Mode.SEARCH:
        if state.current_goal is not None and here == state.current_goal:
            state.current_goal = None
        if state.current_goal is None:
            if not state.waypoints:
                _new_tour(state, map_, rng)
            state.current_goal = state.waypoints.pop(0)

    goal = state.current_goal
    key = (here, goal, _cells(fires))
    if state.plan is None or key != state.plan_key:
        try:
            state.plan, state.risky = choose_path(
                map_, fires, here, goal, state.params.risk_factor, state.health / cfg.max_health, rng, cfg)
        except Unreachable:
            state.current_goal = None
            state.waypoints = []
            state.plan = None
            state.plan_key = None
            return AgentCommand(None, None, None, False, spotted, lost, 0)
        state.plan_key = key

    path = state.plan
    length = remaining_length(map_, state.pose, path)
    change = 0
    comparable = state.last_path_len is not None and prev_mode is state.mode and (
        state.mode is Mode.CHASE or prev_goal == goal)
    if comparable:
        if length > state.last_path_len + 1e-6:
            change = 1
        elif length < state.last_path_len - 1e-6:
            change = -1
    state.last_path_len = length

    nxt = path.cells[1] if len(path.cells) > 1 else path.cells[0]
    return AgentCommand(goal, path, map_.center(nxt), state.risky, spotted, lost, change)


def _wrap(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def move_clipped(map_: MazeMap, x: float, y: float, dx: float, dy: float) -> tuple[float, float]:
    """Advance by (dx, dy) without entering a blocked cell, sliding along walls when possible."""

    def ok(nx: float, ny: float) -> bool:
        c0 = map_.cell_of(x, y)
        c1 = map_.cell_of(nx, ny)
        if map_.is_blocked(c1):
            return False
        if c0[0] != c1[0] and c0[1] != c1[1]:
            return not (map_.is_blocked((c1[0], c0[1])) or map_.is_blocked((c0[0], c1[1])))
        return True

    if ok(x + dx, y + dy):
        return x + dx, y + dy
    if dx and ok(x + dx, y):
        return x + dx, y
    if dy and ok(x, y + dy):
        return x, y + dy
    return x, y


def agent_step(state: AgentState, command: AgentCommand, dt: float, rng: np.random.Generator,
               map_: MazeMap, cfg: AgentConfig = AgentConfig()) -> float:
    """Turn, jitter and advance the agent; returns the distance travelled this tick."""
    p = state.params
    pose = state.pose
    heading = pose.heading
    advance = False
    if command.target is not None:
        tx, ty = command.target
        dist = math.hypot(tx - pose.x, ty - pose.y)
        if dist > cfg.arrive_radius or len(command.path.cells) > 1:
            err = _wrap(math.atan2(ty - pose.y, tx - pose.x) - heading)
            max_turn = math.radians(p.rot_speed) * dt
            heading += max(-max_turn, min(max_turn, err))
            # turning in place avoids orbiting a waypoint tighter than the turning radius
            advance = abs(_wrap(math.atan2(ty - pose.y, tx - pose.x) - heading)) <= math.pi / 2
    if p.jitter > 0.0:
        heading += math.radians(rng.normal(0.0, p.jitter * dt))
    heading %= 2.0 * math.pi
    x, y = pose.x, pose.y
    if advance:
        step = p.move_speed * dt
        x, y = move_clipped(map_, x, y, step * math.cos(heading), step * math.sin(heading))
    state.pose = Pose(x, y, heading)
    return math.hypot(x - pose.x, y - pose.y)
