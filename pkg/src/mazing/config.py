"""INI configuration: one section per module, keys named after the dataclass fields.

Example::

    [study]
    participants = 20
    sessions = 4
    seed = 0
    duration = 60
    policies = aggressive, kiter

    [frustration]
    delta_lost_sight = 5

    [manifestation]
    fov_angle = 135, 45

    [annotator]
    cues = Score:1, Chasing Player:0.5
    lag = 1
    noise_sd = 0.1

    [channels]
    kind = noise23
    gap_rate = 0

    [pipeline]
    w = 3
    l = 1

    [learn]
    C = 0.01
    max_pairs =
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .agent import AgentConfig, FrustrationConfig, ManifestationCurves
from .pipeline import PipelineConfig
from .player import PlayerConfig, PolicyKind
from .sim import ConfigError, GameConstants, StudyConfig
from .traces import AnnotatorModel


@dataclass(frozen=True)
class ChannelConfig:
    kind: str = "noise23"  # "noise23" or "none"
    gap_rate: float = 0.0  # expected gaps per second per channel

    def __post_init__(self):
        if self.kind not in ("noise23", "none"):
            raise ConfigError(f"unknown channel kind {self.kind!r}")
        if self.gap_rate < 0:
            raise ConfigError("gap_rate must be non-negative")


@dataclass(frozen=True)
class LearnConfig:
    C: float = 0.01
    gamma: float = 1.0
    max_pairs: int | None = None  # per-session cap on training comparisons
    tie_epsilon: float = 0.0
    scope: str = "within_session"


@dataclass(frozen=True)
class Config:
    study: StudyConfig = StudyConfig()
    annotator: AnnotatorModel = AnnotatorModel()
    channels: ChannelConfig = ChannelConfig()
    pipeline: PipelineConfig = PipelineConfig()
    learn: LearnConfig = LearnConfig()
    source: str = field(default="", compare=False)


def _convert(raw: str, default, key: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [s.strip() for s in raw.split(",") if s.strip()]
            kind = type(default[0]) if default else float
            return tuple(kind(s) for s in items)
        if default is None:
            if raw == "" or raw.lower() == "none":
                return None
            return int(raw)
        return raw
    except ValueError:
        raise ConfigError(f"invalid value {raw!r} for {key}") from None


def _apply(obj, section, name: str, skip=()):
    known = {f.name: f for f in dataclasses.fields(obj) if f.name not in skip}
    changes = {}
    for key, raw in section.items():
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in [{name}]")
        changes[key] = _convert(raw, getattr(obj, key), f"[{name}] {key}")
    try:
        return dataclasses.replace(obj, **changes)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[{name}]: {exc}") from None


def _parse_cues(raw: str) -> tuple:
    cues = []
    for item in raw.split(","):
        if not item.strip():
            continue
        name, sep, weight = item.rpartition(":")
        if not sep:
            raise ConfigError(f"cue {item.strip()!r} must look like 'Feature:weight'")
        try:
            cues.append((name.strip(), float(weight)))
        except ValueError:
            raise ConfigError(f"invalid cue weight in {item.strip()!r}") from None
    return tuple(cues)


_SECTIONS = ("study", "frustration", "manifestation", "agent", "player", "annotator", "channels",
             "pipeline", "learn")


def load_config(path=None) -> Config:
    cfg = Config()
    if path is None:
        return cfg
    p = Path(path)
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep key case (C)
    try:
        with open(p, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    for name in parser.sections():
        if name not in _SECTIONS:
            raise ConfigError(f"unknown section [{name}]")

    def section(name):
        return dict(parser[name]) if parser.has_section(name) else {}

    k = GameConstants()
    k = dataclasses.replace(
        k,
        frustration=_apply(FrustrationConfig(), section("frustration"), "frustration"),
        curves=_apply(ManifestationCurves(), section("manifestation"), "manifestation"),
        agent=_apply(AgentConfig(), section("agent"), "agent"),
        player=_apply(PlayerConfig(), section("player"), "player"),
    )
    st = section("study")
    study = StudyConfig(constants=k)
    aliases = {"sessions": "sessions_per", "seed": "base_seed"}
    st = {aliases.get(key, key): v for key, v in st.items()}
    policies = st.pop("policies", None)
    study_map = st.pop("map", None)
    study = _apply(study, st, "study", skip=("constants", "policies", "map", "workers"))
    if policies is not None:
        try:
            study = dataclasses.replace(study, policies=tuple(PolicyKind(s.strip()) for s in policies.split(",")))
        except ValueError as exc:
            raise ConfigError(f"[study] policies: {exc}") from None
    if study_map:
        mp = Path(study_map)
        study = dataclasses.replace(study, map=str(mp if mp.is_absolute() else p.parent / mp))
    try:
        study.validate()
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    an = section("annotator")
    cues = an.pop("cues", None)
    annotator = _apply(AnnotatorModel(), an, "annotator", skip=("cue_weights",))
    if cues is not None:
        try:
            annotator = dataclasses.replace(annotator, cue_weights=_parse_cues(cues))
        except ValueError as exc:
            raise ConfigError(f"[annotator] cues: {exc}") from None
    return Config(
        study=study,
        annotator=annotator,
        channels=_apply(ChannelConfig(), section("channels"), "channels"),
        pipeline=_apply(PipelineConfig(), section("pipeline"), "pipeline"),
        learn=_apply(LearnConfig(), section("learn"), "learn"),
        source=str(p),
    )
