from __future__ import annotations

import json

import numpy as np
import pytest
from scipy import stats as sps

import mazing.learn.validation as validation
from mazing.learn.svm import Kernel, SvmHyperparams
from mazing.learn.validation import (
    GRID,
    REFERENCE_BEST_RBF_GAME_MM,
    EvalReport,
    FoldError,
    compare_pair,
    cross_validate,
    grid_search,
    model_comparison,
    participant_folds,
)
from mazing.pipeline import FeatureSet, Processing, WindowedDataset, dataset_pairs
from mazing.sim import StudyConfig, run_study

from conftest import build_dataset


@pytest.fixture(scope="module")
def small_dataset():
    return build_dataset(run_study(StudyConfig(participants=10, sessions_per=1, base_seed=5, duration=20)))


def report(accs, C=1.0, hp=None):
    hp = hp or SvmHyperparams(C=C)
    return EvalReport(FeatureSet.GAME, Processing.MM, hp, np.asarray(accs, dtype=float),
                      [0] * len(accs), [0] * len(accs))


def test_folds_cover_each_participant_once():
    folds = participant_folds(range(1, 21))
    assert len(folds) == 10 and all(len(f) == 2 for f in folds)
    flat = [p for f in folds for p in f]
    assert sorted(flat) == list(range(1, 21))


def test_fold_grouping_error():
    with pytest.raises(FoldError):
        participant_folds(range(15))
    with pytest.raises(FoldError):
        participant_folds(range(5))


def test_pairs_never_cross_partitions(study_dataset):
    rep = cross_validate(study_dataset, FeatureSet.GAME, Processing.MM, SvmHyperparams(C=0.01))
    frame = study_dataset.frame
    for fold, test_ids in enumerate(participant_folds(frame["participant"].unique())):
        test = WindowedDataset(frame[frame.participant.isin(test_ids)].reset_index(drop=True))
        train = WindowedDataset(frame[~frame.participant.isin(test_ids)].reset_index(drop=True))
        assert rep.test_pairs[fold] == len(dataset_pairs(test, FeatureSet.GAME, Processing.MM))
        assert rep.train_pairs[fold] == len(dataset_pairs(train, FeatureSet.GAME, Processing.MM))
    assert sum(rep.test_pairs) == len(dataset_pairs(study_dataset, FeatureSet.GAME, Processing.MM))
    assert np.all((rep.accuracies >= 0) & (rep.accuracies <= 1))
    assert rep.mean > 0.65


def test_subsampling_recorded_and_mirrored(small_dataset):
    rep = cross_validate(small_dataset, FeatureSet.GAME, Processing.MM, SvmHyperparams(C=0.1), max_pairs=5)
    assert rep.max_pairs == 5
    assert all(n <= 2 * 5 * 9 for n in rep.train_pairs)
    assert json.loads(rep.summary_jsonl())["max_pairs_per_session"] == 5
    pairs = dataset_pairs(small_dataset, FeatureSet.GAME, Processing.MM)
    sub = validation._subsample(pairs, 3, np.random.default_rng(0))
    assert np.array_equal(sub.X[0::2], -sub.X[1::2])


def test_report_fields():
    r = report([0.6, 0.7, 0.8, 0.7])
    assert r.mean == pytest.approx(0.7) and r.max == 0.8
    assert r.ci95 == pytest.approx(sps.t.ppf(0.975, 3) * np.std(r.accuracies, ddof=1) / 2)
    assert r.folds_csv().splitlines()[0] == "fold,accuracy,train_pairs,test_pairs"
    assert len(r.folds_csv().splitlines()) == 5
    assert json.loads(r.summary_jsonl())["mean"] == pytest.approx(0.7)


def test_linear_grid_has_seven_cells(small_dataset):
    res = grid_search(small_dataset, FeatureSet.GAME, Processing.MM, Kernel.LINEAR, Cs=GRID[:3])
    assert len(res.table) == 3
    assert len(GRID) == 7 and GRID[0] == pytest.approx(1e-3) and GRID[-1] == pytest.approx(1e3)
    assert res.best.mean == max(m for _, _, m in res.table)


def test_rbf_grid_size(small_dataset, monkeypatch):
    calls = []

    def fake_cv(ds, fs, proc, hp, **kw):
        calls.append((hp.C, hp.gamma))
        return report([0.5] * 10, hp=hp)

    monkeypatch.setattr(validation, "cross_validate", fake_cv)
    res = grid_search(small_dataset, FeatureSet.GAME, Processing.MM, Kernel.RBF)
    assert len(calls) == 49 and len(res.table) == 49
    # all ties: smallest C then smallest gamma wins
    assert (res.best_hp.C, res.best_hp.gamma) == (min(GRID), min(GRID))
    linear = grid_search(small_dataset, FeatureSet.GAME, Processing.MM, Kernel.LINEAR)
    assert len(linear.table) == 7


def test_grid_tie_break(monkeypatch, small_dataset):
    score = {0.01: 0.6, 0.1: 0.7, 1.0: 0.7}

    def fake_cv(ds, fs, proc, hp, **kw):
        return report([score[hp.C]] * 10, C=hp.C)

    monkeypatch.setattr(validation, "cross_validate", fake_cv)
    res = grid_search(small_dataset, FeatureSet.GAME, Processing.MM, Kernel.LINEAR, Cs=[1.0, 0.1, 0.01])
    assert res.best_hp.C == 0.1


def test_rbf_cross_validation_runs(small_dataset):
    rep = cross_validate(small_dataset, FeatureSet.GAME, Processing.MM,
                         SvmHyperparams(C=1.0, kernel=Kernel.RBF, gamma=0.1), max_pairs=10)
    assert len(rep.accuracies) == 10 and rep.converged


def test_reference_constant():
    assert REFERENCE_BEST_RBF_GAME_MM == SvmHyperparams(C=0.1, kernel=Kernel.RBF, gamma=0.5)


def test_self_comparison_not_significant():
    r = report([0.6, 0.7, 0.65, 0.8, 0.7, 0.66, 0.72, 0.69, 0.71, 0.74])
    (cell,) = model_comparison([r, r])
    assert cell.p_t == 1.0 and cell.p_u == 1.0
    assert not cell.significant_t and not cell.significant_u


def test_twelve_reports_sixty_six_cells():
    rng = np.random.default_rng(0)
    reps = [report(rng.uniform(0.4, 0.9, 10), C=float(i + 1)) for i in range(12)]
    cells = model_comparison(reps)
    assert len(cells) == 66
    assert all(c.threshold == pytest.approx(0.05 / 11) for c in cells)


def test_comparison_validation():
    with pytest.raises(ValueError):
        model_comparison([report([0.5] * 10)])
    with pytest.raises(ValueError):
        model_comparison([report([0.5] * 10), report([0.5] * 5)])


def test_constant_fold_accuracies():
    a, b = report([0.5] * 10), report([0.9] * 10)
    (cell,) = model_comparison([a, b])
    assert cell.significant_t and cell.p_t == 0.0


def test_game_beats_facial(study_dataset):
    game = cross_validate(study_dataset, FeatureSet.GAME, Processing.MM, SvmHyperparams(C=0.01))
    facial = cross_validate(study_dataset, FeatureSet.FACIAL, Processing.MM, SvmHyperparams(C=0.01))
    assert 0.45 <= facial.mean <= 0.55
    cell = compare_pair(game, facial, 11)
    assert cell.significant_t and cell.significant_u


def test_unscored_folds_are_skipped():
    r = report([0.6, float("nan"), 0.8])
    assert r.mean == pytest.approx(0.7) and r.max == 0.8
    assert r.scored.size == 2
    assert json.loads(r.summary_jsonl())["scored_folds"] == 2
