#!/usr/bin/env python3
"""
Testes da busca de hiperparâmetros: espaços, amostrador TPE, poda pela
mediana, execução do estudo e objetivo de validação cruzada.
"""
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np
import optuna
import pytest
from scipy import stats

root_dir = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, root_dir)

from core.dataset import CauseTaxonomy, Dataset, VARecord
from core.errors import AllTrialsPrunedError, ConfigError, VaForgeError
from core.features import FeatureMatrix
from hpo.sampler import TpeSampler
from hpo.search_space import ParamKind, ParamSpec, load_search_space, parse_search_space
from hpo.study import (
    Direction, PrunerConfig, StudyConfig, TrialRecord, TrialState, best_trial, cv_objective,
    read_study_log, run_study, should_prune, write_study_log,
)
from learners.base import LearnerSpec

LOG_SPACE = [{"name": "lr", "kind": "log_uniform", "lo": 1e-4, "hi": 1.0}]
OPTIMUM = 1e-2


def _categorical_objective(config, reporter):
    score = {"a": 0.3, "b": 0.7}[config["choice"]]
    reporter.report(score)
    return score


def _log_distance_objective(config, reporter):
    score = -abs(math.log10(config["lr"]) - math.log10(OPTIMUM))
    reporter.report(score)
    return score


def _mixed_objective(config, reporter):
    score = -abs(config["x"] - 0.3) - (0.0 if config["c"] == "good" else 0.5)
    for step in range(3):
        reporter.report(score + 0.01 * step)
    return score


def _frozen(space, config, value):
    return optuna.trial.create_trial(
        params={spec.name: spec.to_optuna(config[spec.name]) for spec in space},
        distributions={spec.name: spec.to_distribution() for spec in space},
        value=value,
    )


def _completed(trial_id, interim, final=None):
    final = interim[-1] if final is None else final
    return TrialRecord(trial_id, {}, list(interim), final, TrialState.COMPLETE)


@pytest.mark.parametrize("preset", ["plm", "gbdt", "mlp", "logreg", "knn"])
def test_presets_sample_inside_bounds(preset):
    space = load_search_space(preset)
    rng = np.random.default_rng(0)
    for _ in range(10_000 // len(space)):
        for spec in space:
            assert spec.contains(spec.sample_uniform(rng))


def test_categorical_values_only():
    spec = ParamSpec(name="batch", kind="categorical", values=[8, 16, 32])
    rng = np.random.default_rng(1)
    assert {spec.sample_uniform(rng) for _ in range(500)} == {8, 16, 32}


def test_log_uniform_is_uniform_in_log_space():
    spec = ParamSpec(name="lr", kind="log_uniform", lo=5e-6, hi=4e-5)
    rng = np.random.default_rng(2)
    logs = np.log([spec.sample_uniform(rng) for _ in range(10_000)])
    lo, hi = math.log(5e-6), math.log(4e-5)
    result = stats.kstest(logs, stats.uniform(loc=lo, scale=hi - lo).cdf)
    # valor crítico de KS para alpha = 0.001
    assert result.statistic < 1.95 / math.sqrt(len(logs))


def test_integer_grid():
    spec = ParamSpec(name="max_iter", kind="integer", lo=800, hi=3000, step=200)
    assert spec.from_internal(5000) == 3000
    assert spec.from_internal(-1) == 800
    assert spec.from_internal(1010) == 1000
    assert spec.contains(1200) and not spec.contains(1250)


def test_search_space_validation():
    with pytest.raises(ConfigError):
        parse_search_space([{"name": "x", "kind": "uniform", "lo": 1.0, "hi": 1.0}])
    with pytest.raises(ConfigError):
        parse_search_space([{"name": "x", "kind": "log_uniform", "lo": 0.0, "hi": 1.0}])
    with pytest.raises(ConfigError):
        parse_search_space([{"name": "x", "kind": "categorical", "values": []}])
    with pytest.raises(ConfigError):
        parse_search_space([{"name": "x", "kind": "uniform", "lo": 0, "hi": 1}] * 2)
    with pytest.raises(ConfigError):
        parse_search_space([])
    with pytest.raises(ConfigError):
        load_search_space("transformers")
    space = load_search_space([{"name": "x", "kind": "uniform", "lo": 0, "hi": 1}])
    assert space[0].kind is ParamKind.UNIFORM


def test_list_valued_categories():
    spec = load_search_space("mlp")[0]
    assert spec.index_of((100, 50)) == 2
    assert spec.to_internal([100]) == 1.0


def test_sampler_is_uniform_during_startup_and_deterministic():
    space = parse_search_space(LOG_SPACE)
    sampler = TpeSampler(space, seed=3, n_startup=10)
    first = sampler.propose([], trial_number=0)
    assert first == sampler.propose([], trial_number=0)
    assert first != sampler.propose([], trial_number=1)


def test_tpe_suggestions_stay_in_bounds():
    space = parse_search_space([
        {"name": "x", "kind": "uniform", "lo": 0.0, "hi": 1.0},
        {"name": "n", "kind": "integer", "lo": 1, "hi": 30},
        {"name": "c", "kind": "categorical", "values": ["good", "bad"]},
    ])
    rng = np.random.default_rng(4)
    history = [_frozen(space, {spec.name: spec.sample_uniform(rng) for spec in space}, float(rng.random()))
               for _ in range(12)]
    sampler = TpeSampler(space, seed=0, n_startup=5)
    for number in range(12, 40):
        config = sampler.propose(history, number)
        assert all(spec.contains(config[spec.name]) for spec in space)


def test_tpe_prefers_the_good_region():
    space = parse_search_space([{"name": "x", "kind": "uniform", "lo": 0.0, "hi": 1.0}])
    history = [_frozen(space, {"x": x}, -abs(x - 0.2)) for x in np.linspace(0.0, 1.0, 21)]
    sampler = TpeSampler(space, seed=1, n_startup=5)
    draws = [sampler.propose(history, number)["x"] for number in range(21, 61)]
    assert abs(float(np.median(draws)) - 0.2) < 0.15


def test_list_valued_categories_go_through_optuna():
    space = load_search_space("mlp")
    distribution = space[0].to_distribution()
    assert distribution.choices == (0, 1, 2)
    assert space[0].from_optuna(2) == [100, 50]
    assert space[3].to_distribution().high == 3000

    def objective(config, reporter):
        reporter.report(float(len(config["hidden_layer_sizes"])))
        return float(len(config["hidden_layer_sizes"]))

    best, trials = run_study(objective, space, StudyConfig(n_trials=6, seed=0, n_startup=6))
    assert len(best["hidden_layer_sizes"]) == 2
    assert all(t.config["hidden_layer_sizes"] in ([50, 50], [100], [100, 50]) for t in trials)


def test_sampler_rejects_bad_settings():
    space = parse_search_space(LOG_SPACE)
    with pytest.raises(ConfigError):
        TpeSampler(space, gamma=1.5)
    with pytest.raises(ConfigError):
        TpeSampler(space, n_candidates=0)
    with pytest.raises(ConfigError):
        TpeSampler([])


def test_trial_record_invariants():
    with pytest.raises(VaForgeError):
        TrialRecord(0, {}, [], None, TrialState.COMPLETE)
    with pytest.raises(VaForgeError):
        TrialRecord(0, {}, [0.1], 0.5, TrialState.PRUNED)
    assert TrialRecord(0, {}, [0.1, 0.2], None, "pruned").step == 2


def test_should_prune_below_median_after_warmup():
    pruner = PrunerConfig(warmup_steps=2, startup_trials=5)
    history = [_completed(i, [0.5, 0.5, s]) for i, s in enumerate([0.5, 0.6, 0.7, 0.8, 0.9])]
    trial = TrialRecord(10, {}, [0.9, 0.9, 0.6])
    assert should_prune(trial, history, pruner)
    assert not should_prune(TrialRecord(10, {}, [0.0, 0.0]), history, pruner)
    assert not should_prune(TrialRecord(11, {}, [0.9, 0.9, 0.95]), history, pruner)
    assert should_prune(TrialRecord(12, {}, [0.0, 0.0, 0.95]), history, pruner, Direction.MINIMIZE)


def test_should_prune_startup_guard():
    pruner = PrunerConfig(warmup_steps=0, startup_trials=5)
    history = [_completed(i, [0.9]) for i in range(4)]
    assert not should_prune(TrialRecord(9, {}, [0.0]), history, pruner)
    history.append(_completed(4, [0.9]))
    assert should_prune(TrialRecord(9, {}, [0.0]), history, pruner)


def test_median_includes_pruned_trials_at_the_same_step():
    pruner = PrunerConfig(warmup_steps=0, startup_trials=2)
    history = [_completed(0, [0.8, 0.8]), _completed(1, [0.8, 0.8])]
    history += [TrialRecord(i, {}, [0.1], None, TrialState.PRUNED) for i in range(2, 7)]
    # mediana de [0.8, 0.8, 0.1 x5] = 0.1
    assert not should_prune(TrialRecord(9, {}, [0.5]), history, pruner)
    assert should_prune(TrialRecord(9, {}, [0.05]), history, pruner)
    # podados sem score no passo 2 ficam de fora
    assert should_prune(TrialRecord(9, {}, [0.5, 0.5]), history, pruner)
    # podados não contam para startup_trials
    assert not should_prune(TrialRecord(9, {}, [0.05]), history[2:], PrunerConfig(warmup_steps=0, startup_trials=1))


def test_best_trial_ignores_pruned_and_failed():
    trials = [
        TrialRecord(0, {"v": 0}, [0.9], None, TrialState.PRUNED),
        _completed(1, [0.4]),
        TrialRecord(2, {"v": 2}, [], None, TrialState.FAILED, "boom"),
        _completed(3, [0.6]),
    ]
    assert best_trial(trials).trial_id == 3
    assert best_trial(trials, Direction.MINIMIZE).trial_id == 1
    with pytest.raises(AllTrialsPrunedError):
        best_trial(trials[:1] + trials[2:3])


def test_run_study_finds_dominant_category():
    space = parse_search_space([{"name": "choice", "kind": "categorical", "values": ["a", "b"]}])
    study = StudyConfig(n_trials=10, seed=5, n_startup=3)
    best, trials = run_study(_categorical_objective, space, study)
    assert best == {"choice": "b"}
    assert len(trials) == 10
    assert [t.trial_id for t in trials] == list(range(10))


def test_run_study_log_uniform_reaches_optimum():
    space = parse_search_space(LOG_SPACE)
    hits = 0
    for seed in range(100):
        best, _ = run_study(_log_distance_objective, space, StudyConfig(n_trials=30, seed=seed))
        hits += abs(math.log10(best["lr"]) - math.log10(OPTIMUM)) <= 1.0
    assert hits >= 95


def test_run_study_accepts_other_optuna_samplers():
    space = parse_search_space(LOG_SPACE)
    best, trials = run_study(_log_distance_objective, space, StudyConfig(n_trials=5),
                             sampler=optuna.samplers.RandomSampler(seed=0))
    assert len(trials) == 5
    assert all(space[0].contains(t.config["lr"]) for t in trials)
    assert best in [t.config for t in trials]


def test_prune_everything_after_startup():
    def prune_after_three(trial, history, pruner, direction):
        return sum(t.state is TrialState.COMPLETE for t in history) >= 3

    space = parse_search_space(LOG_SPACE)
    best, trials = run_study(_log_distance_objective, space, StudyConfig(n_trials=8, seed=1),
                             prune_fn=prune_after_three)
    assert [t.state for t in trials[:3]] == [TrialState.COMPLETE] * 3
    assert all(t.state is TrialState.PRUNED and t.final_score is None for t in trials[3:])
    assert all(t.step == 1 for t in trials[3:])
    assert best in [t.config for t in trials[:3]]


def test_all_trials_pruned_raises():
    space = parse_search_space(LOG_SPACE)
    with pytest.raises(AllTrialsPrunedError):
        run_study(_log_distance_objective, space, StudyConfig(n_trials=3),
                  prune_fn=lambda trial, history, pruner, direction: True)


def test_failed_trials_are_recorded():
    def explode(config, reporter):
        raise RuntimeError("boom")

    space = parse_search_space(LOG_SPACE)
    with pytest.raises(AllTrialsPrunedError):
        run_study(explode, space, StudyConfig(n_trials=2))

    def not_finite_below_optimum(config, reporter):
        return 1.0 if config["lr"] >= OPTIMUM else float("nan")

    _, trials = run_study(not_finite_below_optimum, space, StudyConfig(n_trials=12, n_startup=12))
    for trial in trials:
        if trial.config["lr"] >= OPTIMUM:
            assert trial.state is TrialState.COMPLETE
        else:
            assert trial.state is TrialState.FAILED and "finito" in trial.error


def test_study_is_reproducible():
    space = parse_search_space([
        {"name": "x", "kind": "uniform", "lo": 0.0, "hi": 1.0},
        {"name": "c", "kind": "categorical", "values": ["good", "bad"]},
    ])
    study = StudyConfig(n_trials=16, seed=7, n_startup=4,
                        pruner=PrunerConfig(warmup_steps=1, startup_trials=3))
    first = run_study(_mixed_objective, space, study)
    second = run_study(_mixed_objective, space, study)
    assert first[0] == second[0]
    assert [t.to_dict() for t in first[1]] == [t.to_dict() for t in second[1]]


def test_study_log_round_trip():
    space = parse_search_space(LOG_SPACE)
    _, trials = run_study(_log_distance_objective, space, StudyConfig(n_trials=4))
    with tempfile.TemporaryDirectory() as tmp:
        path = write_study_log(trials, Path(tmp) / "study_log.jsonl")
        loaded = read_study_log(path)
    assert [t.to_dict() for t in loaded] == [t.to_dict() for t in trials]


def _leaky_dataset(n_per_class=10):
    classes = ("A", "B", "C")
    records = [VARecord(id=f"{c}{i:02d}", cause_level3=c) for c in classes for i in range(n_per_class)]
    ds = Dataset(tuple(records), CauseTaxonomy(level3=classes))
    values = np.array([[1.0 if ds.label_of(rid) == c else 0.0 for c in classes] for rid in ds.ids])
    return ds, FeatureMatrix(tuple(ds.ids), ("leak_A", "leak_B", "leak_C"), values)


def _noise_dataset(n_per_class=40, seed=0):
    classes = ("A", "B", "C")
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.repeat(classes, n_per_class))
    records = [VARecord(id=f"r{i:03d}", cause_level3=str(c)) for i, c in enumerate(labels)]
    ds = Dataset(tuple(records), CauseTaxonomy(level3=classes))
    values = rng.normal(size=(len(records), 5))
    return ds, FeatureMatrix(tuple(ds.ids), tuple(f"x{j}" for j in range(5)), values)


class _Collector:
    def __init__(self):
        self.scores = []

    def report(self, score):
        self.scores.append(score)


def test_cv_objective_with_leaked_label_is_perfect():
    ds, features = _leaky_dataset()
    objective = cv_objective(LearnerSpec(kind="knn"), ds, features, k=5, seed=0)
    reporter = _Collector()
    assert objective({"n_neighbors": 1}, reporter) == 1.0
    assert reporter.scores == [1.0] * 5
    assert objective({"n_neighbors": 3}) == objective({"n_neighbors": 3})


def test_cv_objective_on_random_labels_stays_at_chance():
    ds, features = _noise_dataset()
    objective = cv_objective(LearnerSpec(kind="knn"), ds, features, k=5, seed=0)
    score = objective({"n_neighbors": 5})
    chance = 1 / 3
    band = 4 * math.sqrt(chance * (1 - chance) / len(ds.ids))
    assert abs(score - chance) < band


def test_cv_objective_rejects_unknown_hyperparameters():
    ds, features = _leaky_dataset()
    objective = cv_objective(LearnerSpec(kind="knn"), ds, features, k=5)
    with pytest.raises(ValueError):
        objective({"depth": 2})


def test_cv_objective_inside_study():
    ds, features = _leaky_dataset()
    objective = cv_objective(LearnerSpec(kind="logreg"), ds, features, k=5)
    space = load_search_space("logreg")
    best, trials = run_study(objective, space, StudyConfig(n_trials=3))
    assert set(best) == {"l2", "learning_rate"}
    assert all(t.state is not TrialState.FAILED for t in trials)


def test_study_does_not_depend_on_worker_count():
    ds, features = _noise_dataset(n_per_class=20, seed=3)
    space = load_search_space("knn")
    study = StudyConfig(n_trials=8, seed=2, n_startup=3, pruner=PrunerConfig(warmup_steps=1, startup_trials=2))
    logs = []
    for workers in (1, 4):
        objective = cv_objective(LearnerSpec(kind="knn"), ds, features, k=5, seed=1, n_jobs=workers)
        best, trials = run_study(objective, space, study)
        logs.append((best, [t.to_dict() for t in trials]))
    assert logs[0] == logs[1]


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
