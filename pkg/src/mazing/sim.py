"""Fixed-timestep session engine and study runner.

One tick runs, in order: bot policy, player update, agent sense/decide/step,
interactions, frustration update, telemetry emit. Everything random flows from
the session seed, so identical configs give bitwise-identical telemetry.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .agent import (
    AgentConfig,
    AgentState,
    FrustrationBand,
    FrustrationConfig,
    ManifestationCurves,
    Mode,
    Sense,
    Stimuli,
    agent_decide,
    agent_step,
    derive_manifestations,
    sense_player,
    update_frustration,
)
from .player import (
    PlayerConfig,
    PlayerState,
    PolicyKind,
    apply_command,
    observe,
    resolve_interactions,
    scripted_policy,
)
from .world import FireField, MazeMap, load_map


class Condition(enum.Enum):
    CONTROL = "control"
    BAND_25_50 = "25-50"
    BAND_50_75 = "50-75"
    BAND_75_100 = "75-100"

    @property
    def band(self) -> FrustrationBand:
        return _BANDS[self]


_BANDS = {
    Condition.CONTROL: FrustrationBand(0.0, 0.0),
    Condition.BAND_25_50: FrustrationBand(25.0, 50.0),
    Condition.BAND_50_75: FrustrationBand(50.0, 75.0),
    Condition.BAND_75_100: FrustrationBand(75.0, 100.0),
}

CONDITIONS = tuple(Condition)

AGENT_INTERNALS = (
    "Frustration", "Rotation Speed", "Risk-Taking Factor", "Movement Speed", "Hearing Radius",
    "Hearing Probability", "FoV Radius", "FoV Angle", "Number of Turns in Search",
)
AGENT_BEHAVIOUR = (
    "Search Mode", "Seeing Player", "Chasing Player", "Agent Health", "Agent Distance Travelled",
    "Taking Risky Path", "Agent Change in Rotation",
)
PLAYER_BEHAVIOUR = (
    "Player Distance Travelled", "Shooting", "Pressing Shoot on Cool-down", "Mouse Movement",
    "Player Health", "Dash Pressed", "Dash Mode", "Pressing Dash on Cool-down",
    "Player Change in Rotation", "Bomb Dropping", "Pressing Bomb on Cool-down",
)
CONTEXT = ("Score", "Agent Distance From Player", "Number of Fires")
GAME_FEATURES = AGENT_INTERNALS + AGENT_BEHAVIOUR + PLAYER_BEHAVIOUR + CONTEXT
assert len(GAME_FEATURES) == 30

TELEMETRY_HEADER = ("t", "participant", "session", "condition") + GAME_FEATURES

# Williams design: every condition once per row, first-order carry-over balanced.
LATIN_SQUARE = ((0, 1, 3, 2), (1, 2, 0, 3), (2, 3, 1, 0), (3, 0, 2, 1))

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def session_seed(base_seed: int, participant: int, session: int) -> int:
    return splitmix64(splitmix64(base_seed & _MASK64) ^ splitmix64((participant << 16) | session))


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GameConstants:
    frustration: FrustrationConfig = FrustrationConfig()
    curves: ManifestationCurves = ManifestationCurves()
    agent: AgentConfig = AgentConfig()
    player: PlayerConfig = PlayerConfig()


@dataclass(frozen=True)
class SessionConfig:
    condition: Condition = Condition.CONTROL
    seed: int = 0
    duration: float = 60.0
    tick_rate: int = 30
    policy: PolicyKind = PolicyKind.AGGRESSIVE
    map: str | None = None
    constants: GameConstants = GameConstants()
    participant: int = 0
    session: int = 0

    def validate(self) -> None:
        if not self.duration > 0:
            raise ConfigError("duration must be positive")
        if self.tick_rate < 10:
            raise ConfigError("tick_rate must be at least 10 Hz")
        if not 0 <= self.seed <= _MASK64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        Condition(self.condition)
        PolicyKind(self.policy)

    @property
    def n_frames(self) -> int:
        return int(round(self.duration * self.tick_rate))


@dataclass
class SessionResult:
    config: SessionConfig
    t: np.ndarray
    telemetry: np.ndarray  # (frames, 30) in GAME_FEATURES order
    events: list

    def column(self, name: str) -> np.ndarray:
        return self.telemetry[:, GAME_FEATURES.index(name)]

    def telemetry_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TELEMETRY_HEADER)
        cfg = self.config
        cond = Condition(cfg.condition).value
        for t, row in zip(self.t.tolist(), self.telemetry.tolist()):
            w.writerow([repr(t), cfg.participant, cfg.session, cond, *map(repr, row)])
        return buf.getvalue()

    def events_jsonl(self) -> str:
        return "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.events)

    def digest(self) -> str:
        h = hashlib.sha256(self.telemetry_csv().encode("utf-8"))
        h.update(self.events_jsonl().encode("utf-8"))
        return h.hexdigest()


_MAP_CACHE: dict = {}


def _get_map(path) -> MazeMap:
    key = None if path is None else str(path)
    if key not in _MAP_CACHE:
        _MAP_CACHE[key] = load_map(path)
    return _MAP_CACHE[key]


def run_session(cfg: SessionConfig, map_: MazeMap | None = None) -> SessionResult:
    cfg.validate()
    condition = Condition(cfg.condition)
    policy = PolicyKind(cfg.policy)
    map_ = map_ if map_ is not None else _get_map(cfg.map)
    k = cfg.constants
    band = condition.band
    dt = 1.0 / cfg.tick_rate
    ss = np.random.SeedSequence(cfg.seed)
    rng_policy, rng_agent = (np.random.Generator(np.random.PCG64(s)) for s in ss.spawn(2))

    player = PlayerState.spawn(map_, k.player)
    agent = AgentState.spawn(map_, band, k.curves, k.agent)
    fires = FireField()
    projectiles: list = []
    memory: dict = {}
    events: list = []
    n = cfg.n_frames
    out = np.zeros((n, len(GAME_FEATURES)))
    times = np.arange(n) / cfg.tick_rate

    def log(t, event, **payload):
        events.append({"t": round(t, 9), "event": event, "payload": payload})

    for i in range(n):
        t = (i + 1) * dt
        cmd = scripted_policy(policy, observe(i * dt, map_, player, agent, fires, memory, k.player), rng_policy)
        ptick = apply_command(player, cmd, dt, map_, fires, k.player)
        projectiles.extend(ptick.projectiles)
        if ptick.bomb_cell is not None:
            log(t, "bomb", cell=list(ptick.bomb_cell))
        if ptick.dash_started:
            log(t, "dash")

        sensed = sense_player(agent, player.pose, map_, rng_agent, dt, k.agent)
        mode_before = agent.mode
        command = agent_decide(agent, sensed, map_, fires, player.pose, rng_agent, dt, k.agent)
        if command.spotted:
            log(t, "spotted")
        if command.lost_sight:
            log(t, "lost_sight")
        if agent.mode is not mode_before:
            log(t, "mode", mode=agent.mode.value)
        heading0 = agent.pose.heading
        agent_dist = agent_step(agent, command, dt, rng_agent, map_, k.agent)
        agent_turn = math.degrees(abs((agent.pose.heading - heading0 + math.pi) % (2 * math.pi) - math.pi))
        seeing = sensed is Sense.SEEN
        chasing = agent.mode is Mode.CHASE
        risky = agent.risky

        res = resolve_interactions(player, agent, projectiles, fires, dt, map_, k.player, k.agent)
        for _ in range(res.hits):
            log(t, "hit", score=k.player.s_hit)
        if res.kill:
            log(t, "kill", score=k.player.s_kill)
        if res.loss:
            log(t, "loss", reason=res.loss, score=-k.player.s_loss)

        stim = Stimuli(
            path_change=command.path_change,
            spotted=command.spotted,
            lost_sight=command.lost_sight,
            hits=res.hits,
            resting=agent.mode is Mode.SEARCH,
        )
        agent.f = update_frustration(agent, stim, dt, k.frustration, band)
        agent.params = derive_manifestations(agent.f, k.curves)
        fires.advance(dt)

        p = agent.params
        out[i] = (
            agent.f, p.rot_speed, p.risk_factor, p.move_speed, p.hear_radius,
            p.hear_prob_base, p.fov_radius, p.fov_angle, p.search_turns,
            agent.mode is Mode.SEARCH, seeing, chasing, agent.health, agent_dist,
            risky, agent_turn,
            ptick.distance, ptick.shooting, ptick.shoot_on_cd, ptick.mouse,
            player.health, ptick.dash_pressed, player.dash_active_remaining > 1e-9 or ptick.dash_started,
            ptick.dash_on_cd, ptick.rotation, ptick.bomb_cell is not None, ptick.bomb_on_cd,
            player.score, player.pose.distance_to(agent.pose), len(fires),
        )
    return SessionResult(cfg, times, out, events)


def score_from_events(events: list, times: np.ndarray, dt: float) -> np.ndarray:
    """Cumulative score at each frame rebuilt from the event log alone."""
    score = np.zeros(len(times))
    deltas = np.zeros(len(times))
    for e in events:
        if "score" in e["payload"]:
            frame = int(round(e["t"] / dt)) - 1
            deltas[frame] += e["payload"]["score"]
    np.cumsum(deltas, out=score)
    return score


# -- study -------------------------------------------------------------------------


@dataclass(frozen=True)
class StudyConfig:
    participants: int = 20
    sessions_per: int = 4
    base_seed: int = 0
    duration: float = 60.0
    tick_rate: int = 30
    policies: tuple = (PolicyKind.AGGRESSIVE, PolicyKind.KITER)
    map: str | None = None
    constants: GameConstants = GameConstants()
    workers: int | None = None

    def validate(self) -> None:
        if self.participants < 2:
            raise ConfigError("a study needs at least two participants")
        if self.sessions_per < 1:
            raise ConfigError("sessions_per must be positive")
        if not self.policies:
            raise ConfigError("at least one policy is required")

    def session_configs(self) -> list[SessionConfig]:
        cfgs = []
        for p in range(1, self.participants + 1):
            order = LATIN_SQUARE[(p - 1) % len(LATIN_SQUARE)]
            policy = PolicyKind(self.policies[(p - 1) % len(self.policies)])
            for s in range(1, self.sessions_per + 1):
                cond = CONDITIONS[order[(s - 1) % len(order)]]
                cfgs.append(SessionConfig(
                    condition=cond, seed=session_seed(self.base_seed, p, s), duration=self.duration,
                    tick_rate=self.tick_rate, policy=policy, map=self.map, constants=self.constants,
                    participant=p, session=s,
                ))
        return cfgs


@dataclass
class StudyBundle:
    sessions: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.sessions)

    def digest(self) -> str:
        h = hashlib.sha256()
        for s in self.sessions:
            h.update(s.digest().encode("ascii"))
        return h.hexdigest()


def run_study(cfg: StudyConfig) -> StudyBundle:
    cfg.validate()
    cfgs = cfg.session_configs()
    workers = cfg.workers if cfg.workers is not None else (os.cpu_count() or 1)
    if workers > 1 and len(cfgs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(run_session, cfgs))
    else:
        results = [run_session(c) for c in cfgs]
    return StudyBundle(results)


def session_name(participant: int, session: int) -> str:
    return f"p{participant:02d}_s{session}"


def write_session(result: SessionResult, telemetry_dir: Path, events_dir: Path) -> tuple[Path, Path]:
    name = session_name(result.config.participant, result.config.session)
    tpath = Path(telemetry_dir) / f"{name}.csv"
    epath = Path(events_dir) / f"{name}.jsonl"
    tpath.write_text(result.telemetry_csv(), encoding="utf-8", newline="\n")
    epath.write_text(result.events_jsonl(), encoding="utf-8", newline="\n")
    return tpath, epath


@dataclass
class Telemetry:
    """Telemetry as read back from a session CSV."""

    participant: int
    session: int
    condition: Condition
    t: np.ndarray
    values: np.ndarray

    def column(self, name: str) -> np.ndarray:
        return self.values[:, GAME_FEATURES.index(name)]


def read_telemetry(path) -> Telemetry:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != TELEMETRY_HEADER:
            raise ValueError(f"{path}: unexpected telemetry header")
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: no telemetry frames")
    t = np.array([float(r[0]) for r in rows])
    values = np.array([[float(v) for v in r[4:]] for r in rows])
    return Telemetry(int(rows[0][1]), int(rows[0][2]), Condition(rows[0][3]), t, values)


def from_result(result: SessionResult) -> Telemetry:
    c = result.config
    return Telemetry(c.participant, c.session, Condition(c.condition), result.t, result.telemetry)


def with_overrides(cfg: SessionConfig, **kw) -> SessionConfig:
    return replace(cfg, **kw)
