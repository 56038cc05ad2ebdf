"""Cross-participant validation, hyperparameter grids and model comparison."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import stdtrit

from ..pipeline import (
    FeatureSet,
    PreferencePairs,
    Processing,
    WindowedDataset,
    feature_matrix,
    pairwise_transform,
    session_blocks,
)
from ..stats import bonferroni_threshold, mann_whitney_u, t_test_two_tailed, UndefinedStatistic
from .svm import Kernel, SvmHyperparams, fit_scale, pair_accuracy, train_svm

N_FOLDS = 10
GRID = tuple(10.0 ** k for k in range(-3, 4))
# Best RBF setting reported for the human-study game-feature mean->mean model; kept for reference only.
REFERENCE_BEST_RBF_GAME_MM = SvmHyperparams(C=0.1, kernel=Kernel.RBF, gamma=0.5)


class FoldError(ValueError):
    pass


def participant_folds(participants, k: int = N_FOLDS) -> list[tuple]:
    """Split sorted participant ids into k contiguous, equal-size test groups."""
    ids = sorted(set(int(p) for p in participants))
    if len(ids) < k or len(ids) % k:
        raise FoldError(f"{len(ids)} participants cannot be split into {k} equal test groups")
    size = len(ids) // k
    return [tuple(ids[i * size:(i + 1) * size]) for i in range(k)]


def _subsample(pairs: PreferencePairs, max_pairs: int | None, rng: np.random.Generator) -> PreferencePairs:
    """Keep at most ``max_pairs`` mirrored comparisons per session (both orientations kept together)."""
    if max_pairs is None:
        return pairs
    g = pairs.groups[0::2]
    keep = []
    for key in dict.fromkeys(map(tuple, g.tolist())):
        idx = np.flatnonzero((g[:, 0] == key[0]) & (g[:, 1] == key[1]))
        if idx.size > max_pairs:
            idx = np.sort(rng.choice(idx, size=max_pairs, replace=False))
        keep.append(idx)
    sel = np.concatenate(keep) if keep else np.empty(0, dtype=np.int64)
    rows = np.stack([2 * sel, 2 * sel + 1], axis=1).ravel()
    return PreferencePairs(pairs.X[rows], pairs.y[rows], pairs.groups[rows], pairs.scope)


def _pairs(frame, feature_set, processing, tie_epsilon, scope, transform):
    X = feature_matrix(frame, feature_set, processing)
    target = frame[processing.target_column].to_numpy(dtype=float)
    if transform is not None:
        target = transform(target)
    groups = frame[["participant", "session"]].to_numpy(dtype=np.int64)
    return X, pairwise_transform(X, target, session_blocks(frame, scope), groups, tie_epsilon, scope)


@dataclass
class EvalReport:
    feature_set: FeatureSet
    processing: Processing
    hp: SvmHyperparams
    accuracies: np.ndarray
    train_pairs: list = field(default_factory=list)
    test_pairs: list = field(default_factory=list)
    max_pairs: int | None = None
    converged: bool = True
    max_kkt_residual: float = 0.0

    @property
    def scored(self) -> np.ndarray:
        """Fold accuracies of folds that had at least one test pair."""
        a = np.asarray(self.accuracies, dtype=float)
        return a[np.isfinite(a)]

    @property
    def mean(self) -> float:
        a = self.scored
        return float(np.mean(a)) if a.size else math.nan

    @property
    def max(self) -> float:
        a = self.scored
        return float(np.max(a)) if a.size else math.nan

    @property
    def ci95(self) -> float:
        a = self.scored
        k = a.size
        if k < 2:
            return math.nan
        return float(stdtrit(k - 1, 0.975) * np.std(a, ddof=1) / math.sqrt(k))

    @property
    def name(self) -> str:
        h = self.hp
        kern = "linear" if h.kernel is Kernel.LINEAR else f"rbf(g={h.gamma:g})"
        return f"{self.feature_set.value}:{self.processing.value}:{kern}:C={h.C:g}"

    def summary(self) -> dict:
        return {
            "feature_set": self.feature_set.value,
            "processing": self.processing.value,
            "kernel": self.hp.kernel.value,
            "C": self.hp.C,
            "gamma": self.hp.gamma if self.hp.kernel is Kernel.RBF else None,
            "mean": self.mean,
            "max": self.max,
            "ci95": self.ci95,
            "folds": len(self.accuracies),
            "scored_folds": int(self.scored.size),
            "max_pairs_per_session": self.max_pairs,
            "converged": self.converged,
            "max_kkt_residual": self.max_kkt_residual,
        }

    def folds_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["fold", "accuracy", "train_pairs", "test_pairs"])
        for i, acc in enumerate(self.accuracies.tolist()):
            w.writerow([i, repr(acc), self.train_pairs[i], self.test_pairs[i]])
        return buf.getvalue()

    def summary_jsonl(self) -> str:
        return json.dumps(self.summary(), sort_keys=True) + "\n"


def cross_validate(ds: WindowedDataset, feature_set: FeatureSet, processing: Processing,
                   hp: SvmHyperparams = SvmHyperparams(), *, k: int = N_FOLDS, max_pairs: int | None = None,
                   tie_epsilon: float = 0.0, scope: str = "within_session", seed: int = 0,
                   transform=None) -> EvalReport:
    """Leave-participant-group-out validation; pairs never cross the train/test split."""
    feature_set, processing = FeatureSet(feature_set), Processing(processing)
    frame = ds.frame
    folds = participant_folds(frame["participant"].unique(), k)
    parts = frame["participant"].to_numpy()
    accs, ntr, nte = [], [], []
    converged, resid = True, 0.0
    for f, test_ids in enumerate(folds):
        test_mask = np.isin(parts, test_ids)
        train = frame[~test_mask].reset_index(drop=True)
        test = frame[test_mask].reset_index(drop=True)
        Xtr, ptr = _pairs(train, feature_set, processing, tie_epsilon, scope, transform)
        _, pte = _pairs(test, feature_set, processing, tie_epsilon, scope, transform)
        ptr = _subsample(ptr, max_pairs, np.random.default_rng([seed, f]))
        model = train_svm(ptr.X, ptr.y, hp, scale=fit_scale(Xtr))
        converged &= model.converged
        resid = max(resid, model.kkt_residual)
        accs.append(pair_accuracy(model, pte.X, pte.y))
        ntr.append(len(ptr))
        nte.append(len(pte))
    return EvalReport(feature_set, processing, hp, np.array(accs), ntr, nte, max_pairs, converged, resid)


@dataclass
class GridResult:
    best: EvalReport
    table: list  # (C, gamma or None, mean accuracy) in evaluation order

    @property
    def best_hp(self) -> SvmHyperparams:
        return self.best.hp


def grid_search(ds: WindowedDataset, feature_set: FeatureSet, processing: Processing,
                kernel: Kernel = Kernel.LINEAR, Cs=GRID, gammas=GRID, **cv) -> GridResult:
    """Exhaustive grid; strict improvement required, so ties keep the smaller C, then smaller gamma."""
    kernel = Kernel(kernel)
    best = None
    table = []
    for C in sorted(Cs):
        for g in (sorted(gammas) if kernel is Kernel.RBF else (None,)):
            hp = SvmHyperparams(C=C, kernel=kernel, gamma=1.0 if g is None else g)
            rep = cross_validate(ds, feature_set, processing, hp, **cv)
            table.append((C, g, rep.mean))
            if best is None or rep.mean > best.mean or (math.isnan(best.mean) and not math.isnan(rep.mean)):
                best = rep
    return GridResult(best, table)


@dataclass(frozen=True)
class ComparisonCell:
    a: str
    b: str
    t: float
    p_t: float
    u: float
    p_u: float
    threshold: float

    @property
    def significant_t(self) -> bool:
        return self.p_t < self.threshold

    @property
    def significant_u(self) -> bool:
        return self.p_u < self.threshold


def _t_test(a: np.ndarray, b: np.ndarray):
    try:
        return t_test_two_tailed(a, b)
    except UndefinedStatistic:
        # both samples constant: identical means are indistinguishable, different ones are separated
        same = float(np.mean(a)) == float(np.mean(b))
        return (0.0, 1.0) if same else (math.copysign(math.inf, np.mean(a) - np.mean(b)), 0.0)


def model_comparison(reports, alpha: float = 0.05) -> list[ComparisonCell]:
    """All unordered report pairs, flagged at alpha / (k - 1) for k compared models."""
    reports = list(reports)
    if len(reports) < 2:
        raise ValueError("at least two reports are required")
    folds = {len(r.accuracies) for r in reports}
    if len(folds) != 1:
        raise ValueError("reports must have the same number of folds")
    thr = bonferroni_threshold(alpha, len(reports) - 1)
    cells = []
    for i in range(len(reports)):
        for j in range(i + 1, len(reports)):
            a, b = reports[i].scored, reports[j].scored
            t, pt = _t_test(a, b)
            u, pu = mann_whitney_u(a, b)
            cells.append(ComparisonCell(reports[i].name, reports[j].name, float(t), float(pt), u, pu, thr))
    return cells


def compare_pair(a: EvalReport, b: EvalReport, m: int) -> ComparisonCell:
    """One comparison flagged at 0.05 / m."""
    t, pt = _t_test(a.scored, b.scored)
    u, pu = mann_whitney_u(a.scored, b.scored)
    return ComparisonCell(a.name, b.name, float(t), float(pt), u, pu, bonferroni_threshold(0.05, m))
