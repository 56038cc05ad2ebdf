"""Windowed preprocessing and the pairwise preference transform.

Streams are lag-shifted (traces and channels only), cut into non-overlapping windows,
summarised by per-window mean and range, aligned on window index, and finally turned
into labelled difference vectors within each session.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .sim import GAME_FEATURES, Telemetry
from .traces import FACIAL_FEATURES, AnnotationTrace, ModalityChannel

EPS = 1e-9
TARGET = "annotation"
ID_COLUMNS = ("participant", "session", "condition", "window")


@dataclass(frozen=True)
class PipelineConfig:
    w: float = 3.0
    l: float = 1.0
    tie_epsilon: float = 0.0

    def __post_init__(self):
        if not self.w > 0:
            raise ValueError("window length w must be positive")
        if self.l < 0:
            raise ValueError("lag l must be non-negative")
        if self.tie_epsilon < 0:
            raise ValueError("tie_epsilon must be non-negative")


@dataclass
class Stream:
    """Sampled signal(s) on a shared clock; ``duration`` marks the end of valid content."""

    t: np.ndarray
    values: np.ndarray  # (n, k)
    names: tuple
    duration: float
    gaps: list = field(default_factory=list)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.values, dtype=float)
        self.names = tuple(self.names)
        self.values = v.reshape(len(self.t), len(self.names)) if v.ndim != 2 else v
        if self.values.shape[1] != len(self.names):
            raise ValueError("one name per value column is required")


def telemetry_stream(tel: Telemetry) -> Stream:
    dt = tel.t[1] - tel.t[0] if len(tel.t) > 1 else 0.0
    return Stream(tel.t, tel.values, GAME_FEATURES, float(tel.t[-1] + dt) if len(tel.t) else 0.0)


def trace_stream(trace: AnnotationTrace, duration: float) -> Stream:
    return Stream(trace.t, trace.values, (TARGET,), duration)


def channel_stream(ch: ModalityChannel, duration: float) -> Stream:
    return Stream(ch.t, ch.values, (ch.name,), duration, list(ch.gaps))


def lag_shift(stream: Stream, l: float) -> Stream:
    """Re-time the sample at t+l to t, discarding the first l seconds."""
    if l == 0:
        return stream
    if stream.duration <= l:
        return Stream(np.empty(0), np.empty((0, len(stream.names))), stream.names, 0.0, [])
    keep = stream.t >= l - EPS
    gaps = [(max(0.0, a - l), b - l) for a, b in stream.gaps if b - l > 0]
    return Stream(stream.t[keep] - l, stream.values[keep], stream.names, stream.duration - l, gaps)


@dataclass
class WindowFeatures:
    index: np.ndarray  # window indices k, covering [k*w, (k+1)*w)
    mu: np.ndarray  # (K, F)
    rng: np.ndarray  # (K, F)
    missing: np.ndarray  # (K,) bool
    names: tuple
    w: float


def window_count(duration: float, w: float) -> int:
    return max(0, int(math.floor((duration + EPS) / w)))


def windowize(stream: Stream, w: float) -> WindowFeatures:
    if not w > 0:
        raise ValueError("window length w must be positive")
    k = window_count(stream.duration, w)
    f = len(stream.names)
    mu = np.full((k, f), np.nan)
    rg = np.full((k, f), np.nan)
    missing = np.zeros(k, dtype=bool)
    if k:
        idx = np.floor((stream.t + EPS) / w).astype(np.int64)
        order = np.argsort(idx, kind="stable")
        idx_sorted = idx[order]
        bounds = np.searchsorted(idx_sorted, np.arange(k + 1))
        for j in range(k):
            rows = order[bounds[j]:bounds[j + 1]]
            if rows.size == 0:
                missing[j] = True
                continue
            block = stream.values[rows]
            mu[j] = block.mean(axis=0)
            rg[j] = block.max(axis=0) - block.min(axis=0)
        for a, b in stream.gaps:
            lo = int(math.floor((a + EPS) / w))
            hi = int(math.ceil((b - EPS) / w))
            missing[max(lo, 0):min(hi, k)] = True
    return WindowFeatures(np.arange(k), mu, rg, missing, stream.names, w)


@dataclass
class SessionWindows:
    participant: int
    session: int
    condition: str
    rows: pd.DataFrame
    dropped: dict


def align(telemetry: WindowFeatures, trace: WindowFeatures, channels=(), *, participant: int = 0,
          session: int = 0, condition: str = "") -> SessionWindows:
    """Join window streams on index; windows missing in any stream are dropped and counted."""
    streams = [telemetry, trace, *channels]
    if any(abs(s.w - telemetry.w) > EPS for s in streams):
        raise ValueError("all streams must be windowed with the same w")
    n = min(len(s.index) for s in streams)
    dropped = {"truncated": sum(len(s.index) for s in streams) - n * len(streams), "missing": 0}
    ok = np.ones(n, dtype=bool)
    for s in streams:
        ok &= ~s.missing[:n]
    dropped["missing"] = int(n - ok.sum())
    cols: dict = {
        "participant": np.full(n, participant, dtype=np.int64),
        "session": np.full(n, session, dtype=np.int64),
        "condition": np.full(n, condition, dtype=object),
        "window": np.arange(n, dtype=np.int64),
    }
    for s in streams:
        for i, name in enumerate(s.names):
            cols[f"mu_{name}"] = s.mu[:n, i]
            cols[f"rng_{name}"] = s.rng[:n, i]
    df = pd.DataFrame(cols)[ok].reset_index(drop=True)
    return SessionWindows(participant, session, condition, df, dropped)


def process_session(tel: Telemetry, trace: AnnotationTrace, channels=(),
                    cfg: PipelineConfig = PipelineConfig()) -> SessionWindows:
    if (trace.participant, trace.session) != (tel.participant, tel.session):
        raise ValueError(
            f"trace p{trace.participant} s{trace.session} does not match telemetry p{tel.participant} s{tel.session}")
    ts = telemetry_stream(tel)
    tw = windowize(ts, cfg.w)
    aw = windowize(lag_shift(trace_stream(trace, ts.duration), cfg.l), cfg.w)
    cw = [windowize(lag_shift(channel_stream(c, ts.duration), cfg.l), cfg.w) for c in channels]
    return align(tw, aw, cw, participant=tel.participant, session=tel.session, condition=tel.condition.value)


@dataclass
class WindowedDataset:
    frame: pd.DataFrame
    dropped: dict = field(default_factory=dict)

    @classmethod
    def from_sessions(cls, sessions) -> WindowedDataset:
        sessions = list(sessions)
        frame = pd.concat([s.rows for s in sessions], ignore_index=True) if sessions else pd.DataFrame()
        dropped = {"truncated": 0, "missing": 0}
        for s in sessions:
            for k, v in s.dropped.items():
                dropped[k] = dropped.get(k, 0) + v
        return cls(frame, dropped)

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def features(self) -> tuple:
        return tuple(c[3:] for c in self.frame.columns if c.startswith("mu_") and c != f"mu_{TARGET}")

    def to_csv(self, path) -> None:
        self.frame.to_csv(path, index=False, lineterminator="\n", float_format=None)

    @classmethod
    def read_csv(cls, path) -> WindowedDataset:
        frame = pd.read_csv(path, float_precision="round_trip", dtype={"condition": str}, keep_default_na=False)
        return cls(frame)


class FeatureSet(enum.Enum):
    GAME = "game"
    FACIAL = "facial"
    ALL = "all"

    @property
    def names(self) -> tuple:
        return {FeatureSet.GAME: GAME_FEATURES, FeatureSet.FACIAL: FACIAL_FEATURES,
                FeatureSet.ALL: GAME_FEATURES + FACIAL_FEATURES}[self]


class Processing(enum.Enum):
    """Input processing then target processing: m = window mean, r = window range."""

    MM = "mm"
    RR = "rr"
    RM = "rm"
    MR = "mr"

    @property
    def input_prefix(self) -> str:
        return "mu_" if self.value[0] == "m" else "rng_"

    @property
    def target_column(self) -> str:
        return ("mu_" if self.value[1] == "m" else "rng_") + TARGET


def feature_matrix(frame: pd.DataFrame, feature_set: FeatureSet, processing: Processing) -> np.ndarray:
    cols = [processing.input_prefix + n for n in FeatureSet(feature_set).names]
    missing = [c for c in cols if c not in frame.columns]
    if missing:
        raise KeyError(f"dataset lacks columns {missing[:3]}")
    return frame[cols].to_numpy(dtype=float)


@dataclass
class PreferencePairs:
    X: np.ndarray  # difference vectors
    y: np.ndarray  # labels in {+1, -1}
    groups: np.ndarray  # (participant, session) per pair
    scope: str = "within_session"

    def __len__(self) -> int:
        return len(self.y)

    def to_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for d, lab, g in zip(self.X.tolist(), self.y.tolist(), self.groups.tolist()):
                fh.write(json.dumps({"p": g[0], "s": g[1], "d": d, "label": lab}) + "\n")

    @classmethod
    def read_jsonl(cls, path) -> PreferencePairs:
        X, y, g = [], [], []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                rec = json.loads(line)
                X.append(rec["d"])
                y.append(rec["label"])
                g.append((rec["p"], rec["s"]))
        return cls(np.array(X, dtype=float), np.array(y, dtype=np.int8), np.array(g, dtype=np.int64).reshape(-1, 2))


def pair_indices(target: np.ndarray, blocks: np.ndarray, tie_epsilon: float = 0.0):
    """Ordered (winner, loser) index pairs for every non-tied pair in the same block."""
    target = np.asarray(target)
    win, lose = [], []
    for b in dict.fromkeys(blocks.tolist()):
        idx = np.flatnonzero(blocks == b)
        if idx.size < 2:
            continue
        i, j = np.triu_indices(idx.size, k=1)
        yi, yj = target[idx[i]], target[idx[j]]
        diff_gt = yi > yj
        keep = np.abs(yi - yj) > tie_epsilon if tie_epsilon > 0 else yi != yj
        ii, jj = idx[i][keep], idx[j][keep]
        g = diff_gt[keep]
        win.append(np.where(g, ii, jj))
        lose.append(np.where(g, jj, ii))
    if not win:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    return np.concatenate(win), np.concatenate(lose)


def session_blocks(frame: pd.DataFrame, scope: str = "within_session") -> np.ndarray:
    if scope == "within_session":
        return frame["participant"].to_numpy() * 1000 + frame["session"].to_numpy()
    if scope == "within_participant":
        return frame["participant"].to_numpy().copy()
    if scope == "global":
        return np.zeros(len(frame), dtype=np.int64)
    raise ValueError(f"unknown pair scope {scope!r}")


def pairwise_transform(X: np.ndarray, target, blocks, groups=None, tie_epsilon: float = 0.0,
                       scope: str = "within_session") -> PreferencePairs:
    """Emit (x_i - x_j, +1) and (x_j - x_i, -1) for each strict preference y_i > y_j."""
    X = np.asarray(X, dtype=float)
    blocks = np.asarray(blocks)
    win, lose = pair_indices(target, blocks, tie_epsilon)
    d = X[win] - X[lose]
    n = len(win)
    out = np.empty((2 * n, X.shape[1]))
    out[0::2] = d
    out[1::2] = -d
    y = np.empty(2 * n, dtype=np.int8)
    y[0::2] = 1
    y[1::2] = -1
    if groups is None:
        groups = np.stack([blocks, blocks], axis=1)
    g = np.repeat(np.asarray(groups)[win], 2, axis=0).reshape(-1, 2)
    return PreferencePairs(out, y, g, scope)


def dataset_pairs(ds: WindowedDataset, feature_set: FeatureSet, processing: Processing,
                  tie_epsilon: float = 0.0, scope: str = "within_session", transform=None) -> PreferencePairs:
    frame = ds.frame
    X = feature_matrix(frame, feature_set, processing)
    target = frame[processing.target_column].to_numpy(dtype=float)
    if transform is not None:
        target = transform(target)
    groups = frame[["participant", "session"]].to_numpy(dtype=np.int64)
    return pairwise_transform(X, target, session_blocks(frame, scope), groups, tie_epsilon, scope)


def write_pairs(path: Path, pairs: PreferencePairs) -> None:
    pairs.to_jsonl(path)
