from __future__ import annotations

import math
from itertools import combinations

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from mazing.pipeline import (
    FeatureSet,
    PipelineConfig,
    PreferencePairs,
    Processing,
    Stream,
    WindowedDataset,
    align,
    dataset_pairs,
    lag_shift,
    pairwise_transform,
    process_session,
    window_count,
    windowize,
)
from mazing.sim import Condition, SessionConfig, from_result, run_session
from mazing.traces import DEFAULT_ANNOTATOR, FACIAL_FEATURES, ModalityChannel, synthesize_noise_channels, synthesize_trace


def stream(t, v, duration=None, gaps=()):
    t = np.asarray(t, dtype=float)
    return Stream(t, np.asarray(v, dtype=float), ("x",), duration if duration is not None else len(t), list(gaps))


def test_lag_zero_is_identity():
    s = stream(np.arange(5), np.arange(5))
    assert lag_shift(s, 0) is s


def test_lag_one_second():
    s = stream(np.arange(60), np.arange(60) * 10.0)
    out = lag_shift(s, 1)
    assert np.array_equal(out.t, np.arange(59))
    assert np.array_equal(out.values[:, 0], np.arange(1, 60) * 10.0)
    assert out.duration == 59
    assert window_count(out.duration, 3) == 19


def test_lag_longer_than_stream():
    out = lag_shift(stream([0, 1], [1, 2], duration=2), 5)
    assert len(out.t) == 0 and out.duration == 0


def test_window_mean_and_range():
    wf = windowize(stream([0, 1, 2], [1, 5, 3], duration=3), 3)
    assert wf.mu[0, 0] == 3 and wf.rng[0, 0] == 4


def test_constant_signal_zero_range():
    wf = windowize(stream(np.arange(0, 60, 0.1), np.full(600, 7.0), duration=60), 3)
    assert np.all(wf.rng == 0) and len(wf.index) == 20


def test_trailing_partial_window_dropped():
    assert len(windowize(stream(np.arange(59), np.arange(59), duration=59), 3).index) == 19


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=30, max_size=30), st.floats(0.1, 1e3), st.floats(-1e3, 1e3))
def test_window_stat_properties(vals, a, b):
    s = stream(np.arange(30) * 0.1, vals, duration=3.0)
    wf = windowize(s, 1.0)
    v = np.array(vals).reshape(3, 10)
    assert np.all(wf.mu[:, 0] >= v.min(1) - 1e-9) and np.all(wf.mu[:, 0] <= v.max(1) + 1e-9)
    assert np.all(wf.rng >= 0)
    wt = windowize(stream(np.arange(30) * 0.1, np.array(vals) + b, duration=3.0), 1.0)
    ws = windowize(stream(np.arange(30) * 0.1, np.array(vals) * a, duration=3.0), 1.0)
    assert np.allclose(wt.rng, wf.rng, atol=1e-6)
    assert np.allclose(ws.rng, a * wf.rng, rtol=1e-9, atol=1e-9)


def test_shift_by_w_shifts_index():
    t = np.arange(0, 60, 0.1)
    v = np.sin(t)
    base = windowize(stream(t, v, duration=60), 3)
    shifted = windowize(stream(t + 3, v, duration=63), 3)
    assert np.allclose(shifted.mu[1:21, 0], base.mu[:20, 0])


@settings(max_examples=40, deadline=None)
@given(st.floats(5.0, 200.0), st.sampled_from([1.0, 2.0, 3.0, 5.0]), st.sampled_from([0.0, 0.5, 1.0, 2.0]))
def test_row_count_formula(duration, w, l):
    duration = round(duration, 1)
    t = np.arange(int(round(duration * 10))) / 10
    s = stream(t, np.cos(t), duration=duration)
    wf = windowize(lag_shift(s, l), w)
    assert len(wf.index) == math.floor((duration - l) / w + 1e-9)
    assert not wf.missing.any()


def test_gap_spanning_two_windows_drops_two_rows():
    t = np.arange(0, 30, 0.1)
    tel = windowize(stream(t, t, duration=30), 3)
    tr = windowize(stream(t, t, duration=30), 3)
    keep = ~((t >= 12.2) & (t < 17.5))
    ch = windowize(Stream(t[keep], t[keep], ("Anger",), 30, [(12.2, 17.5)]), 3)
    sw = align(tel, tr, [ch])
    assert sw.dropped["missing"] == 2
    assert list(sw.rows["window"]) == [0, 1, 2, 3, 6, 7, 8, 9]
    assert len(align(tel, tr).rows) == 10


def test_align_rejects_mismatched_w():
    s = stream(np.arange(12), np.arange(12))
    with pytest.raises(ValueError):
        align(windowize(s, 3), windowize(s, 4))


def test_align_uses_min_count():
    a = windowize(stream(np.arange(12), np.arange(12)), 3)
    b = windowize(stream(np.arange(9), np.arange(9)), 3)
    assert len(align(a, b).rows) == 3


def test_spec_pair_example():
    X = np.arange(4, dtype=float)[:, None]
    pairs = pairwise_transform(X, [0.2, 0.5, 0.5, 0.9], np.zeros(4, dtype=int))
    assert len(pairs) == 10


def test_all_equal_target_no_pairs():
    pairs = pairwise_transform(np.eye(3), [1.0, 1.0, 1.0], np.zeros(3, dtype=int))
    assert len(pairs) == 0


def brute_pairs(X, y, blocks, eps):
    out = set()
    for i, j in combinations(range(len(y)), 2):
        if blocks[i] != blocks[j] or abs(y[i] - y[j]) <= eps:
            continue
        lam = 1 if y[i] > y[j] else -1
        out.add((tuple(X[i] - X[j]), lam))
        out.add((tuple(X[j] - X[i]), -lam))
    return out


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 12), st.integers(0, 10**6), st.sampled_from([0.0, 0.5]))
def test_pairs_match_brute_force(n, seed, eps):
    rng = np.random.default_rng(seed)
    X = rng.integers(-5, 5, size=(n, 3)).astype(float)
    y = rng.integers(0, 4, size=n).astype(float)
    blocks = rng.integers(0, 2, size=n)
    pairs = pairwise_transform(X, y, blocks, tie_epsilon=eps)
    got = {(tuple(d), int(l)) for d, l in zip(pairs.X, pairs.y)}
    assert got == brute_pairs(X, y, blocks, eps)
    assert len(pairs) % 2 == 0
    assert np.array_equal(pairs.X[0::2], -pairs.X[1::2])
    assert np.all(pairs.y[0::2] == 1) and np.all(pairs.y[1::2] == -1)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(-500, 500), min_size=2, max_size=15))
def test_pairs_invariant_under_monotone_transform(y):
    y = np.array(y) / 10.0
    X = np.arange(len(y), dtype=float)[:, None]
    blocks = np.zeros(len(y), dtype=int)
    a = pairwise_transform(X, y, blocks)
    b = pairwise_transform(X, np.exp(np.asarray(y, dtype=np.longdouble)), blocks)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)


@pytest.fixture(scope="module")
def one_session():
    res = run_session(SessionConfig(condition=Condition.BAND_50_75, seed=21, participant=1, session=1))
    tel = from_result(res)
    rng = np.random.default_rng(0)
    trace = synthesize_trace(tel, DEFAULT_ANNOTATOR, rng)
    chans = synthesize_noise_channels(FACIAL_FEATURES, 60, rng)
    return tel, trace, chans


def test_session_has_19_rows(one_session):
    tel, trace, chans = one_session
    sw = process_session(tel, trace, chans)
    assert len(sw.rows) == 19
    assert sw.dropped["missing"] == 0
    assert {"mu_Score", "rng_Score", "mu_annotation", "rng_Anger"} <= set(sw.rows.columns)


def test_session_w5_rows(one_session):
    tel, trace, chans = one_session
    assert len(process_session(tel, trace, chans, PipelineConfig(w=5)).rows) == 11


def test_telemetry_not_shifted(one_session):
    tel, trace, _ = one_session
    rows = process_session(tel, trace).rows
    assert rows["mu_Frustration"].iloc[0] == pytest.approx(tel.column("Frustration")[:90].mean())


def test_mismatched_ids_rejected(one_session):
    tel, trace, _ = one_session
    trace.participant, old = 9, trace.participant
    try:
        with pytest.raises(ValueError):
            process_session(tel, trace)
    finally:
        trace.participant = old


def test_invalid_config():
    for kw in ({"w": 0}, {"l": -1}, {"tie_epsilon": -1}):
        with pytest.raises(ValueError):
            PipelineConfig(**kw)


def test_dataset_counts(study_dataset):
    assert len(study_dataset) == 1520
    mm = dataset_pairs(study_dataset, FeatureSet.GAME, Processing.MM)
    assert len(mm) == 1520 * 18
    assert set(study_dataset.features) == set(FeatureSet.ALL.names)
    assert mm.X.shape[1] == 30
    assert dataset_pairs(study_dataset, FeatureSet.ALL, Processing.RR).X.shape[1] == 53


def test_pair_scopes(study_dataset):
    sub = WindowedDataset(study_dataset.frame[study_dataset.frame.participant <= 2].reset_index(drop=True))
    n_s = len(dataset_pairs(sub, FeatureSet.GAME, Processing.MM, scope="within_session"))
    n_p = len(dataset_pairs(sub, FeatureSet.GAME, Processing.MM, scope="within_participant"))
    n_g = len(dataset_pairs(sub, FeatureSet.GAME, Processing.MM, scope="global"))
    assert n_s < n_p < n_g
    with pytest.raises(ValueError):
        dataset_pairs(sub, FeatureSet.GAME, Processing.MM, scope="galaxy")


def test_dataset_csv_round_trip(tmp_path, study_dataset):
    sub = WindowedDataset(study_dataset.frame.head(50).copy())
    sub.to_csv(tmp_path / "d.csv")
    back = WindowedDataset.read_csv(tmp_path / "d.csv")
    pd.testing.assert_frame_equal(back.frame, sub.frame, check_dtype=False, check_exact=True)


def test_pairs_jsonl_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    X = rng.normal(size=(6, 4))
    pairs = pairwise_transform(X, rng.normal(size=6), np.array([1, 1, 1, 2, 2, 2]),
                               np.array([[1, 1]] * 3 + [[1, 2]] * 3))
    pairs.to_jsonl(tmp_path / "p.jsonl")
    back = PreferencePairs.read_jsonl(tmp_path / "p.jsonl")
    assert np.array_equal(back.X, pairs.X) and np.array_equal(back.y, pairs.y)
    assert np.array_equal(back.groups, pairs.groups)


def test_processing_columns():
    assert Processing.MR.input_prefix == "mu_" and Processing.MR.target_column == "rng_annotation"
    assert Processing.RM.input_prefix == "rng_" and Processing.RM.target_column == "mu_annotation"
    assert len(FeatureSet.FACIAL.names) == 23 and len(FeatureSet.ALL.names) == 53


def test_gap_channel_rows_removed():
    res = run_session(SessionConfig(condition=Condition.CONTROL, seed=2, duration=30, participant=1, session=1))
    tel = from_result(res)
    trace = synthesize_trace(tel, DEFAULT_ANNOTATOR, np.random.default_rng(0))
    t = np.arange(300) / 10
    keep = ~((t >= 12.5) & (t < 17.5))
    ch = ModalityChannel("Anger", t[keep], np.full(keep.sum(), 50.0), [(12.5, 17.5)])
    sw = process_session(tel, trace, [ch])
    # after the 1 s lag the gap covers [11.5, 16.5): windows 3, 4 and 5
    assert sw.dropped["missing"] == 3
    assert len(sw.rows) == 6
