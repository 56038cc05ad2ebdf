"""Kendall tau-b with tiered p-values, Bonferroni thresholds and two-sample tests."""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.special import stdtr

from ._backend import count_inversions
from .traces import ACTION_UNITS, DIMENSIONS, EMOTIONS

EXACT_MAX_N = 10  # exact permutation p-value up to this many observations
CORRECTED_MAX_N = 30  # continuity-corrected normal approximation up to here, plain normal above


class UndefinedStatistic(ValueError):
    """The statistic has no value for this input (too few points or zero variance)."""


class KendallCounts(NamedTuple):
    s: int  # concordant minus discordant
    n0: int  # all pairs
    n1: int  # pairs tied in x
    n2: int  # pairs tied in y
    n3: int  # pairs tied in both
    x_ties: tuple
    y_ties: tuple


class KendallResult(NamedTuple):
    tau: float
    p: float


def _tie_groups(sorted_vals: np.ndarray) -> tuple:
    if sorted_vals.size == 0:
        return ()
    breaks = np.flatnonzero(sorted_vals[1:] != sorted_vals[:-1]) + 1
    sizes = np.diff(np.concatenate(([0], breaks, [sorted_vals.size])))
    return tuple(int(t) for t in sizes if t > 1)


def _pairs(groups) -> int:
    return sum(t * (t - 1) // 2 for t in groups)


def _as_values(v) -> np.ndarray:
    a = np.asarray(v)
    # only order matters, so extended-precision input is kept as is
    return (a if a.dtype.kind == "f" else a.astype(float)).ravel()


def _as_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x, y = _as_values(x), _as_values(y)
    if x.size != y.size:
        raise ValueError("x and y must have equal length")
    if np.isnan(x).any() or np.isnan(y).any():
        raise ValueError("NaN values are not allowed")
    return x, y


def kendall_counts(x, y) -> KendallCounts:
    """Pair counts in O(n log n): sort by (x, y), then count y inversions."""
    x, y = _as_pair(x, y)
    n = x.size
    order = np.lexsort((y, x))
    xs, ys = x[order], y[order]
    x_ties = _tie_groups(xs)
    joint = np.flatnonzero((xs[1:] != xs[:-1]) | (ys[1:] != ys[:-1])) + 1
    jsizes = np.diff(np.concatenate(([0], joint, [n])))
    n3 = sum(int(t) * (int(t) - 1) // 2 for t in jsizes)
    y_ties = _tie_groups(np.sort(y))
    n0 = n * (n - 1) // 2
    n1, n2 = _pairs(x_ties), _pairs(y_ties)
    ranks = np.unique(ys, return_inverse=True)[1].ravel().astype(np.float64)
    discordant = int(count_inversions(np.ascontiguousarray(ranks)))
    s = n0 - n1 - n2 + n3 - 2 * discordant
    return KendallCounts(s, n0, n1, n2, n3, x_ties, y_ties)


def _variance_s(n: int, x_ties, y_ties) -> float:
    v0 = n * (n - 1) * (2 * n + 5)
    vt = sum(t * (t - 1) * (2 * t + 5) for t in x_ties)
    vu = sum(u * (u - 1) * (2 * u + 5) for u in y_ties)
    t2 = sum(t * (t - 1) for t in x_ties)
    u2 = sum(u * (u - 1) for u in y_ties)
    t3 = sum(t * (t - 1) * (t - 2) for t in x_ties)
    u3 = sum(u * (u - 1) * (u - 2) for u in y_ties)
    var = (v0 - vt - vu) / 18.0
    if n > 2:
        var += t3 * u3 / (9.0 * n * (n - 1) * (n - 2))
    var += t2 * u2 / (2.0 * n * (n - 1))
    return var


@lru_cache(maxsize=None)
def _mahonian(n: int) -> tuple:
    """Number of permutations of n items with k inversions, k = 0..n(n-1)/2."""
    counts = [1]
    for m in range(2, n + 1):
        nxt = [0] * (len(counts) + m - 1)
        for k, c in enumerate(counts):
            for j in range(m):
                nxt[k + j] += c
        counts = nxt
    return tuple(counts)


@lru_cache(maxsize=2)
def _permutations(n: int) -> np.ndarray:
    """All n! permutations as an (n!, n) int8 array, built by insertion."""
    perms = np.zeros((1, 1), dtype=np.int8)
    for m in range(2, n + 1):
        k = perms.shape[0]
        out = np.empty((k * m, m), dtype=np.int8)
        for pos in range(m):
            block = out[pos * k:(pos + 1) * k]
            block[:, :pos] = perms[:, :pos]
            block[:, pos] = m - 1
            block[:, pos + 1:] = perms[:, pos:]
        perms = out
    return perms if n > 0 else np.zeros((1, 0), dtype=np.int8)


def exact_p(x, y, s_obs: int | None = None) -> float:
    """Two-sided P(|S| >= |S_obs|) over all n! pairings of y with x, ties kept."""
    x, y = _as_pair(x, y)
    n = x.size
    if s_obs is None:
        s_obs = kendall_counts(x, y).s
    target = abs(s_obs)
    if len(np.unique(x)) == n and len(np.unique(y)) == n:
        dist = _mahonian(n)
        n0 = n * (n - 1) // 2
        hits = sum(c for k, c in enumerate(dist) if abs(n0 - 2 * k) >= target)
        return hits / math.factorial(n)
    perms = _permutations(n)
    ry = np.searchsorted(np.unique(y), y).astype(np.int16)
    yp = ry[perms]
    s = np.zeros(perms.shape[0], dtype=np.int32)
    for i in range(n):
        for j in range(i + 1, n):
            sx = int(np.sign(x[i] - x[j]))
            if sx:
                s += sx * np.sign(yp[:, i] - yp[:, j]).astype(np.int32)
    return int(np.count_nonzero(np.abs(s) >= target)) / perms.shape[0]


def kendall_tau(x, y) -> KendallResult:
    """Tie-adjusted tau-b and its two-sided p-value."""
    x, y = _as_pair(x, y)
    n = x.size
    if n < 2:
        raise UndefinedStatistic("Kendall tau needs at least two observations")
    c = kendall_counts(x, y)
    denom = (c.n0 - c.n1) * (c.n0 - c.n2)
    if denom == 0:
        raise UndefinedStatistic("Kendall tau is undefined when either sequence is constant")
    tau = c.s / math.sqrt(denom)
    tau = min(1.0, max(-1.0, tau))
    if n <= EXACT_MAX_N:
        p = exact_p(x, y, c.s)
    else:
        var = _variance_s(n, c.x_ties, c.y_ties)
        num = abs(c.s)
        if n <= CORRECTED_MAX_N:
            num = max(0.0, num - 1.0)
        p = math.erfc(num / math.sqrt(var) / math.sqrt(2.0))
    return KendallResult(tau, min(1.0, p))


def bonferroni_threshold(alpha: float, m: int) -> float:
    if m < 1:
        raise ValueError("number of comparisons must be at least 1")
    return alpha / m


# -- two-sample tests ----------------------------------------------------------------


class TestResult(NamedTuple):
    statistic: float
    p: float


def t_test_two_tailed(a, b) -> TestResult:
    """Student's two-sample t-test with pooled variance."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = a.size, b.size
    if na < 2 or nb < 2:
        raise ValueError("each sample needs at least two values")
    df = na + nb - 2
    sp2 = (((a - a.mean()) ** 2).sum() + ((b - b.mean()) ** 2).sum()) / df
    if sp2 == 0:
        raise UndefinedStatistic("pooled variance is zero")
    t = (a.mean() - b.mean()) / math.sqrt(sp2 * (1.0 / na + 1.0 / nb))
    p = 2.0 * float(stdtr(df, -abs(t)))
    return TestResult(float(t), min(1.0, p))


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size)
    sv = values[order]
    i = 0
    while i < sv.size:
        j = i
        while j + 1 < sv.size and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


MW_EXACT_MAX_N = 12


def mann_whitney_u(a, b) -> TestResult:
    """U of the first sample and its two-sided p-value (exact for small samples)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = a.size, b.size
    if na < 2 or nb < 2:
        raise ValueError("each sample needs at least two values")
    pooled = np.concatenate([a, b])
    ranks = _midranks(pooled)
    u = float(ranks[:na].sum() - na * (na + 1) / 2.0)
    mean = na * nb / 2.0
    dev = abs(u - mean)
    n = na + nb
    if n <= MW_EXACT_MAX_N:
        total = hits = 0
        for idx in itertools.combinations(range(n), na):
            ui = ranks[list(idx)].sum() - na * (na + 1) / 2.0
            total += 1
            if abs(ui - mean) >= dev - 1e-9:
                hits += 1
        return TestResult(u, hits / total)
    _, counts = np.unique(pooled, return_counts=True)
    tie = float((counts ** 3 - counts).sum())
    var = na * nb / 12.0 * ((n + 1) - tie / (n * (n - 1)))
    if var <= 0:
        return TestResult(u, 1.0)
    z = max(0.0, dev - 0.5) / math.sqrt(var)
    return TestResult(u, min(1.0, math.erfc(z / math.sqrt(2.0))))


# -- correlation report ------------------------------------------------------------

TABLE_GROUPS = (
    ("Agent model", ("Frustration",)),
    ("Agent behaviour", ("Search Mode", "Seeing Player", "Chasing Player", "Agent Distance Travelled",
                         "Rotation Speed", "Movement Speed", "Agent Change in Rotation", "Taking Risky Path",
                         "Number of Turns in Search")),
    ("Agent sensory system", ("Agent Health", "Hearing Probability", "FoV Radius", "Risk-Taking Factor",
                              "Hearing Radius", "FoV Angle")),
    ("Player behaviour", ("Shooting", "Pressing Shoot on Cool-down", "Player Distance Travelled",
                          "Mouse Movement", "Player Change in Rotation", "Player Health",
                          "Pressing Bomb on Cool-down", "Dash Pressed", "Dash Mode", "Bomb Dropping",
                          "Pressing Dash on Cool-down")),
    ("General gameplay", ("Score", "Agent Distance From Player", "Number of Fires")),
    ("Basic emotions", EMOTIONS),
    ("Affective dimensions", DIMENSIONS),
    ("Facial action units", ACTION_UNITS),
)


@dataclass(frozen=True)
class CorrelationResult:
    feature: str
    processing: str  # "mu" or "rng"
    tau: float
    p: float
    significant_05: bool
    significant_01: bool


def correlation_report(frame, features, target: str = "annotation",
                       alpha_levels: tuple = (0.05, 0.01)) -> list[CorrelationResult]:
    """Kendall tau of every feature against the same-processed target, Bonferroni-flagged over features."""
    if len(frame) == 0:
        raise ValueError("dataset is empty")
    features = tuple(features)
    m = len(features)
    t05, t01 = (bonferroni_threshold(a, m) for a in alpha_levels)
    out = []
    for proc in ("mu", "rng"):
        y = frame[f"{proc}_{target}"].to_numpy(dtype=float)
        for name in features:
            x = frame[f"{proc}_{name}"].to_numpy(dtype=float)
            try:
                tau, p = kendall_tau(x, y)
            except UndefinedStatistic:
                tau, p = math.nan, math.nan
            sig = not math.isnan(p)
            out.append(CorrelationResult(name, proc, tau, p, sig and p < t05, sig and p < t01))
    return out


def report_csv(results) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["feature", "processing", "tau", "p", "significant_05", "significant_01"])
    for r in results:
        w.writerow([r.feature, r.processing, repr(r.tau), repr(r.p), int(r.significant_05), int(r.significant_01)])
    return buf.getvalue()


def _cell(r: CorrelationResult | None) -> str:
    if r is None or math.isnan(r.tau):
        return "n/a"
    mark = "**" if r.significant_01 else ("*" if r.significant_05 else "")
    return f"{r.tau:+.3f}{mark}"


def report_table(results) -> str:
    """Plain-text table grouped like the feature taxonomy; * p<.05 and ** p<.01 after correction."""
    by = {(r.feature, r.processing): r for r in results}
    names = list(dict.fromkeys(r.feature for r in results))
    grouped = []
    seen = set()
    for label, feats in TABLE_GROUPS:
        present = [f for f in names if f in feats]
        present.sort(key=lambda f: (math.isnan(by[(f, "mu")].tau), -by[(f, "mu")].tau))
        if present:
            grouped.append((label, present))
            seen.update(present)
    rest = [f for f in names if f not in seen]
    if rest:
        grouped.append(("Other", rest))
    wg = max([len(g) for g, _ in grouped] + [5])
    wf = max([len(f) for f in names] + [7])
    lines = [f"{'Group':<{wg}}  {'Feature':<{wf}}  {'tau(mu)':>9}  {'tau(rng)':>9}"]
    lines.append("-" * len(lines[0]))
    for label, feats in grouped:
        for i, f in enumerate(feats):
            lines.append(f"{label if i == 0 else '':<{wg}}  {f:<{wf}}  {_cell(by.get((f, 'mu'))):>9}  "
                         f"{_cell(by.get((f, 'rng'))):>9}")
    return "\n".join(lines) + "\n"
