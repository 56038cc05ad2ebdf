from __future__ import annotations

import numpy as np
import pytest

from mazing.pipeline import WindowedDataset, process_session
from mazing.sim import StudyConfig, from_result, run_study
from mazing.traces import DEFAULT_ANNOTATOR, FACIAL_FEATURES, synthesize_noise_channels, synthesize_trace
from mazing.world import parse_map


def build_dataset(bundle, annotator=DEFAULT_ANNOTATOR, channels=True, gap_rate=0.0):
    sessions = []
    for res in bundle.sessions:
        tel = from_result(res)
        rng = np.random.default_rng([res.config.seed, 1])
        trace = synthesize_trace(tel, annotator, rng)
        chans = synthesize_noise_channels(FACIAL_FEATURES, res.config.duration, rng, gap_rate) if channels else []
        sessions.append(process_session(tel, trace, chans))
    return WindowedDataset.from_sessions(sessions)


@pytest.fixture(scope="session")
def study_bundle():
    return run_study(StudyConfig(participants=20, sessions_per=4, base_seed=2024))


@pytest.fixture(scope="session")
def study_dataset(study_bundle):
    return build_dataset(study_bundle)


@pytest.fixture
def small_map():
    return parse_map(
        "#######\n"
        "#P....#\n"
        "#.##..#\n"
        "#..#..#\n"
        "#....A#\n"
        "#######\n"
    )


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
