from __future__ import annotations

import pytest

from mazing.config import Config, LearnConfig, load_config
from mazing.player import PolicyKind
from mazing.sim import ConfigError


def write(tmp_path, text):
    p = tmp_path / "c.ini"
    p.write_text(text)
    return p


def test_defaults():
    cfg = load_config(None)
    assert cfg == Config()
    assert cfg.study.participants == 20 and cfg.study.sessions_per == 4
    assert cfg.pipeline.w == 3 and cfg.pipeline.l == 1
    assert cfg.learn == LearnConfig()


def test_full_file(tmp_path):
    p = write(tmp_path, """
[study]
participants = 10
sessions = 2
seed = 42
policies = kiter
[frustration]
delta_lost_sight = 7
[manifestation]
fov_angle = 120, 40
[annotator]
cues = Score:2, Seeing Player:0.25
lag = 0.5
noise_sd = 0
[channels]
kind = none
[pipeline]
w = 5
[learn]
C = 0.1
max_pairs = 40
""")
    cfg = load_config(p)
    assert cfg.study.participants == 10 and cfg.study.sessions_per == 2 and cfg.study.base_seed == 42
    assert cfg.study.policies == (PolicyKind.KITER,)
    assert cfg.study.constants.frustration.delta_lost_sight == 7
    assert cfg.study.constants.curves.fov_angle == (120.0, 40.0)
    assert cfg.annotator.cue_weights == (("Score", 2.0), ("Seeing Player", 0.25))
    assert cfg.annotator.lag == 0.5 and cfg.annotator.noise_sd == 0
    assert cfg.channels.kind == "none"
    assert cfg.pipeline.w == 5
    assert cfg.learn.C == 0.1 and cfg.learn.max_pairs == 40


def test_relative_map_path(tmp_path):
    cfg = load_config(write(tmp_path, "[study]\nmap = maze.txt\n"))
    assert cfg.study.map == str(tmp_path / "maze.txt")


@pytest.mark.parametrize("text", [
    "[study]\nparticipants = x\n",
    "[study]\ncolour = blue\n",
    "[weather]\nrain = 1\n",
    "[study]\nparticipants = 1\n",
    "[study]\npolicies = dancing\n",
    "[annotator]\ncues = Score\n",
    "[annotator]\ncues = Hunger:1\n",
    "[annotator]\nlag = -1\n",
    "[pipeline]\nw = 0\n",
    "[channels]\nkind = video\n",
    "not an ini file",
])
def test_bad_files(tmp_path, text):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, text))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.ini")
