"""Annotation traces and side-modality channels: synthesis, file ingest and export."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .sim import GAME_FEATURES, Telemetry

TRACE_RATE = 10  # Hz

EMOTIONS = ("Anger", "Contempt", "Disgust", "Fear", "Joy", "Sadness", "Surprise")
DIMENSIONS = ("Valence", "Attention", "Engagement")
ACTION_UNITS = (
    "ChinRaise", "BrowRaise", "Smirk", "InnerBrowRaise", "LipSuck", "NoseWrinkle", "EyeClosure",
    "LipPucker", "UpperLipRaise", "LipPress", "BrowFurrow", "Smile", "MouthOpen",
)
FACIAL_FEATURES = EMOTIONS + DIMENSIONS + ACTION_UNITS
assert len(FACIAL_FEATURES) == 23


class IngestError(ValueError):
    """File content rejected during ingest; ``code`` is one of the class constants."""

    NON_MONOTONIC_TIME = "NON_MONOTONIC_TIME"
    OUT_OF_RANGE = "OUT_OF_RANGE"
    MALFORMED_ROW = "MALFORMED_ROW"

    def __init__(self, code: str, line: int, message: str, path=None):
        where = f"{path}:{line}" if path is not None else f"line {line}"
        super().__init__(f"{code} at {where}: {message}")
        self.code = code
        self.line = line
        self.path = path


def _check_increasing(t: np.ndarray) -> None:
    if t.size > 1 and not np.all(np.diff(t) > 0):
        raise ValueError("timestamps must be strictly increasing")


@dataclass
class AnnotationTrace:
    t: np.ndarray
    values: np.ndarray
    participant: int = 0
    session: int = 0

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.t.shape != self.values.shape or self.t.ndim != 1:
            raise ValueError("t and values must be 1-D arrays of equal length")
        _check_increasing(self.t)

    def __len__(self) -> int:
        return len(self.t)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, AnnotationTrace)
            and (self.participant, self.session) == (other.participant, other.session)
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.values, other.values)
        )


@dataclass
class ModalityChannel:
    name: str
    t: np.ndarray
    values: np.ndarray
    gaps: list = field(default_factory=list)  # [(start, end)] in seconds, sorted

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.t.shape != self.values.shape or self.t.ndim != 1:
            raise ValueError("t and values must be 1-D arrays of equal length")
        _check_increasing(self.t)
        if self.values.size and (self.values.min() < 0 or self.values.max() > 100):
            raise ValueError(f"channel {self.name!r} has values outside [0, 100]")
        self.gaps = [(float(a), float(b)) for a, b in self.gaps]
        for (a0, b0), (a1, _) in zip(self.gaps, self.gaps[1:]):
            if a1 < b0:
                raise ValueError(f"channel {self.name!r} has overlapping gaps")
        for a, b in self.gaps:
            if not b > a:
                raise ValueError(f"channel {self.name!r} has an empty gap interval")

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ModalityChannel)
            and self.name == other.name
            and self.gaps == other.gaps
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True)
class AnnotatorModel:
    """Synthetic annotator: a lagged, smoothed weighted sum of telemetry cues plus drift and noise.

    With ``relative_noise`` the noise SD is ``noise_sd`` times the SD of the session's cue signal.
    """

    cue_weights: tuple = (("Score", 1.0), ("Chasing Player", 0.5))
    lag: float = 1.0
    noise_sd: float = 0.1
    smoothing: float = 0.0
    drift: float = 0.0
    relative_noise: bool = True

    def __post_init__(self):
        weights = self.cue_weights.items() if isinstance(self.cue_weights, dict) else self.cue_weights
        object.__setattr__(self, "cue_weights", tuple((str(k), float(v)) for k, v in weights))
        for name, _ in self.cue_weights:
            if name not in GAME_FEATURES:
                raise ValueError(f"unknown cue feature {name!r}")
        if self.lag < 0:
            raise ValueError("lag must be non-negative")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be non-negative")
        if self.smoothing < 0:
            raise ValueError("smoothing must be non-negative")


DEFAULT_ANNOTATOR = AnnotatorModel()
IDENTITY_ANNOTATOR = AnnotatorModel(cue_weights=(("Frustration", 1.0),), lag=1.0, noise_sd=0.0)


def cue_signal(telemetry: Telemetry, model: AnnotatorModel) -> np.ndarray:
    sig = np.zeros(len(telemetry.t))
    for name, w in model.cue_weights:
        sig += w * telemetry.column(name)
    return sig


def synthesize_trace(telemetry: Telemetry, model: AnnotatorModel, rng: np.random.Generator,
                     rate: int = TRACE_RATE) -> AnnotationTrace:
    """Sample the annotator at ``rate`` Hz; each sample averages the frames it covers."""
    n = len(telemetry.t)
    if n < 2:
        raise ValueError("telemetry must contain at least two frames")
    tick_rate = round(1.0 / (telemetry.t[1] - telemetry.t[0]))
    per = tick_rate / rate
    if abs(per - round(per)) > 1e-9 or per < 1:
        raise ValueError(f"tick rate {tick_rate} Hz is not a multiple of the trace rate {rate} Hz")
    per = int(round(per))

    cue = cue_signal(telemetry, model)
    shift = int(round(model.lag * tick_rate))
    lagged = np.empty_like(cue)
    if shift >= n:
        lagged[:] = cue[0]
    elif shift > 0:
        lagged[:shift] = cue[0]
        lagged[shift:] = cue[:-shift]
    else:
        lagged[:] = cue
    if model.smoothing > 0:
        a = 1.0 - math.exp(-1.0 / (tick_rate * model.smoothing))
        out = np.empty_like(lagged)
        acc = lagged[0]
        for i, v in enumerate(lagged):
            acc += a * (v - acc)
            out[i] = acc
        lagged = out

    k = n // per
    values = lagged[: k * per].reshape(k, per).mean(axis=1)
    t_ms = np.arange(k, dtype=np.int64) * (1000 // rate)
    t = t_ms / 1000.0
    values = values + model.drift * t
    sd = model.noise_sd * (float(np.std(cue)) if model.relative_noise else 1.0)
    if sd > 0:
        values = values + rng.normal(0.0, sd, size=k)
    return AnnotationTrace(t, values, telemetry.participant, telemetry.session)


def synthesize_noise_channels(names, duration: float, rng: np.random.Generator, gap_rate: float = 0.0,
                              rate: int = TRACE_RATE, time_constant: float = 2.0, spread: float = 15.0,
                              gap_length: tuple = (0.5, 3.0)) -> list[ModalityChannel]:
    """Uninformative bounded channels: clipped AR(1) noise around 50 with Poisson-placed gaps.

    ``gap_rate`` is the expected number of gaps per second; samples inside gaps are removed.
    """
    if not duration > 0:
        raise ValueError("duration must be positive")
    k = int(round(duration * rate))
    t = np.arange(k, dtype=np.int64) * (1000 // rate) / 1000.0
    phi = math.exp(-1.0 / (rate * time_constant))
    innov = spread * math.sqrt(1.0 - phi * phi)
    channels = []
    for name in names:
        eps = rng.normal(size=k)
        x = np.empty(k)
        level = 50.0 + spread * eps[0]
        for i in range(k):
            if i:
                level = 50.0 + phi * (level - 50.0) + innov * eps[i]
            x[i] = level
        np.clip(x, 0.0, 100.0, out=x)
        gaps = []
        if gap_rate > 0:
            n_gaps = rng.poisson(gap_rate * duration)
            starts = np.sort(rng.uniform(0.0, duration, size=n_gaps))
            lengths = rng.uniform(*gap_length, size=n_gaps)
            for a, ln in zip(starts, lengths):
                a = round(float(a), 3)
                b = round(min(duration, a + float(ln)), 3)
                if b <= a:
                    continue
                if gaps and a <= gaps[-1][1]:
                    gaps[-1] = (gaps[-1][0], max(gaps[-1][1], b))
                else:
                    gaps.append((a, b))
        keep = np.ones(k, dtype=bool)
        for a, b in gaps:
            keep &= ~((t >= a) & (t < b))
        channels.append(ModalityChannel(name, t[keep], x[keep], gaps))
    return channels


# -- files -------------------------------------------------------------------------

_HEADER = "t_ms,value"


def _fmt_ms(t: float) -> str:
    ms = t * 1000.0
    r = round(ms)
    return str(int(r)) if abs(ms - r) < 1e-6 else repr(ms)


def _write(path, meta: list[str], t: np.ndarray, values: np.ndarray) -> None:
    lines = [f"# {m}" for m in meta] + [_HEADER]
    lines += [f"{_fmt_ms(a)},{b!r}" for a, b in zip(t.tolist(), values.tolist())]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def export_trace(trace: AnnotationTrace, path) -> None:
    _write(path, [f"participant: {trace.participant}", f"session: {trace.session}"], trace.t, trace.values)


def export_channel(channel: ModalityChannel, path) -> None:
    meta = [f"name: {channel.name}"] + [f"gap: {_fmt_ms(a)},{_fmt_ms(b)}" for a, b in channel.gaps]
    _write(path, meta, channel.t, channel.values)


def _parse(path, check_range: bool):
    meta: dict = {}
    gaps = []
    rows = []
    header_seen = False
    prev = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].partition(":")
                key, val = key.strip(), val.strip()
                if key == "gap":
                    try:
                        a, b = (float(v) for v in val.split(","))
                    except ValueError:
                        raise IngestError(IngestError.MALFORMED_ROW, lineno, f"bad gap {val!r}", path) from None
                    gaps.append((a, b, lineno))
                elif key:
                    meta[key] = val
                continue
            if not header_seen:
                if line.replace(" ", "") != _HEADER:
                    raise IngestError(IngestError.MALFORMED_ROW, lineno, f"expected header {_HEADER!r}", path)
                header_seen = True
                continue
            parts = line.split(",")
            try:
                if len(parts) != 2:
                    raise ValueError
                t_ms, v = float(parts[0]), float(parts[1])
                if not (math.isfinite(t_ms) and math.isfinite(v)):
                    raise ValueError
            except ValueError:
                raise IngestError(IngestError.MALFORMED_ROW, lineno, f"cannot parse {line!r}", path) from None
            if prev is not None and t_ms <= prev:
                raise IngestError(IngestError.NON_MONOTONIC_TIME, lineno, f"t_ms {parts[0]} after {prev:g}", path)
            if check_range and not 0.0 <= v <= 100.0:
                raise IngestError(IngestError.OUT_OF_RANGE, lineno, f"value {v!r} outside [0, 100]", path)
            prev = t_ms
            rows.append((t_ms, v))
    if not rows:
        warnings.warn(f"{path}: no samples", stacklevel=3)
    t_ms = np.array([r[0] for r in rows], dtype=float)
    origin = t_ms[0] if rows else 0.0
    t = (t_ms - origin) / 1000.0
    v = np.array([r[1] for r in rows], dtype=float)
    gaps = [((a - origin) / 1000.0, (b - origin) / 1000.0, ln) for a, b, ln in gaps]
    return meta, t, v, gaps


def ingest_trace(path) -> AnnotationTrace:
    meta, t, v, _ = _parse(path, check_range=False)
    return AnnotationTrace(t, v, int(meta.get("participant", 0)), int(meta.get("session", 0)))


def ingest_channel(path) -> ModalityChannel:
    meta, t, v, gaps = _parse(path, check_range=True)
    prev_end = None
    for a, b, ln in gaps:
        if not b > a or (prev_end is not None and a < prev_end):
            raise IngestError(IngestError.MALFORMED_ROW, ln, "gap intervals must be ordered and disjoint", path)
        prev_end = b
    name = meta.get("name", Path(path).stem)
    return ModalityChannel(name, t, v, [(a, b) for a, b, _ in gaps])
