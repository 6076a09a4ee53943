import math

import numpy as np
import pytest

from controllers.cnf import GeneratorSpec, generate_random_3sat, write_dimacs
from controllers.errors import InstanceSetMismatchError, ModelError
from controllers.features import NUM_BASE_FEATURES, FeatureVector
from controllers.model import ClassModels, PipelineConfig, SplitMode
from controllers.portfolio import (
    ChargeMode,
    PortfolioConfig,
    RaceInstance,
    RacerView,
    Strategy,
    baseline_cost,
    decide_race,
    normalized_cost,
    pair_runs,
    portfolio_experiment,
    portfolio_report,
    race,
    racer_view,
    random_outcomes,
    write_outcomes,
    write_portfolio_table,
)
from controllers.probe import ProbeConfig, WindowMode, WindowPolicy
from controllers.runs import InstanceRun, run_instance
from controllers.solver import SolverConfig, Verdict, solve

FEATURES = FeatureVector(tuple(0.0 for _ in range(NUM_BASE_FEATURES)))


def view(full, probe=100, finished=False):
    if finished:
        return RacerView(full, full, None)
    return RacerView(full, probe, FEATURES)


def synthetic_instances(rng, count):
    instances = []
    for i in range(count):
        cost_a, cost_b = (int(x) for x in np.exp(rng.uniform(7, 11, size=2)))
        fa = rng.normal(size=NUM_BASE_FEATURES)
        fb = rng.normal(size=NUM_BASE_FEATURES)
        fa[0], fb[0] = math.log(cost_a) + rng.normal(scale=0.2), math.log(cost_b) + rng.normal(scale=0.2)
        instances.append(RaceInstance(
            f"i{i:03d}", i % 2 == 0,
            RacerView(cost_a, 500, FeatureVector(tuple(float(v) for v in fa))),
            RacerView(cost_b, 500, FeatureVector(tuple(float(v) for v in fb))),
        ))
    return instances


# ============== SINGLE RACES ==============

def test_best_keeps_the_cheaper_full_run():
    outcome = decide_race("x", True, view(1000), view(4000), Strategy.BEST)
    assert (outcome.kept, outcome.kept_total_cost, outcome.charged_cost) == ("A", 1000, 1000)


def test_lmp_keeps_the_lower_prediction():
    a, b = view(5000, probe=300), view(3000, probe=400)
    on = decide_race("x", True, a, b, Strategy.LMP_TWO_MODELS, ChargeMode.ON, math.log(2000), math.log(1500))
    assert on.kept == "B"
    assert on.charged_cost == 300 + 400 + (3000 - 400)
    off = decide_race("x", True, a, b, Strategy.LMP_TWO_MODELS, ChargeMode.OFF, math.log(2000), math.log(1500))
    assert off.charged_cost == 3000


def test_prediction_ties_keep_a():
    outcome = decide_race("x", False, view(900), view(100), Strategy.LMP_ORACLE, ChargeMode.OFF, 5.0, 5.0)
    assert outcome.kept == "A"


def test_solver_finishing_in_probe_short_circuits():
    a, b = view(300, finished=True), view(8000, probe=500)
    on = decide_race("x", True, a, b, Strategy.LMP_ORACLE, ChargeMode.ON)
    assert (on.kept, on.short_circuit, on.charged_cost) == ("A", True, 600)
    off = decide_race("x", True, a, b, Strategy.LMP_ORACLE, ChargeMode.OFF)
    assert off.charged_cost == 300
    quick = decide_race("x", True, view(800, probe=500), view(120, finished=True), Strategy.LMP_TWO_MODELS)
    assert (quick.kept, quick.charged_cost) == ("B", 240)


def test_race_argument_errors():
    with pytest.raises(ModelError):
        decide_race("x", True, view(10), view(20), Strategy.LMP_ORACLE)
    with pytest.raises(ValueError):
        decide_race("x", True, view(10), view(20), Strategy.RANDOM_BASELINE, coin="C")


def test_racer_view_from_a_probed_run(tmp_path):
    formula = generate_random_3sat(GeneratorSpec(num_vars=150, ratio=4.26, seed=3))
    path = write_dimacs(str(tmp_path / "f.cnf"), formula)
    probe = ProbeConfig(policy=WindowPolicy(mode=WindowMode.WITH_RESTARTS, wait_floor=3, size_floor=5))
    run = run_instance(("f", path), SolverConfig(restart_base=10, conflict_budget=40), probe)
    probed = racer_view(run, close=8, key=1)
    assert probed.probe_cost == 8 and probed.full_cost == run.total_conflicts
    assert not probed.finished_in_probe
    done = racer_view(InstanceRun("g", Verdict.SAT, 5, 0, run.initial), close=8, key=1)
    assert done.finished_in_probe and done.probe_cost == 5


def test_race_on_an_instance_file(tmp_path):
    formula = generate_random_3sat(GeneratorSpec(num_vars=40, ratio=4.26, seed=8))
    path = write_dimacs(str(tmp_path / "g.cnf"), formula)
    solver_a, solver_b = SolverConfig(restart_factor=1.5), SolverConfig(restart_factor=1.2)
    costs = [solve(formula, s).total_conflicts for s in (solver_a, solver_b)]
    outcome = race(("g", path), solver_a, solver_b, Strategy.BEST, ClassModels(), ClassModels())
    assert outcome.kept_total_cost == min(costs)
    coin = race(("g", path), solver_a, solver_b, Strategy.RANDOM_BASELINE, ClassModels(), ClassModels(), coin_seed=3)
    assert coin.kept in ("A", "B")


# ============== PAIRING ==============

def _run(instance_id, verdict, conflicts):
    return InstanceRun(instance_id, verdict, conflicts, 0, None)


def test_pair_runs_excludes_budget_hits_and_checks_sets():
    probe = ProbeConfig()
    runs_a = [_run("a", Verdict.SAT, 10), _run("b", Verdict.BUDGET_EXHAUSTED, 99), _run("c", Verdict.UNSAT, 7)]
    runs_b = [_run("c", Verdict.UNSAT, 9), _run("a", Verdict.SAT, 12), _run("b", Verdict.UNSAT, 50)]
    paired = pair_runs(runs_a, runs_b, SolverConfig(), SolverConfig(restart_factor=1.2), probe)
    assert [p.instance_id for p in paired] == ["a", "c"]
    assert paired[0].a.finished_in_probe and paired[0].b.full_cost == 12
    with pytest.raises(InstanceSetMismatchError):
        pair_runs(runs_a, runs_b[:2], SolverConfig(), SolverConfig(), probe)
    with pytest.raises(InstanceSetMismatchError):
        pair_runs([_run("a", Verdict.SAT, 1)], [_run("a", Verdict.UNSAT, 1)], SolverConfig(), SolverConfig(), probe)


# ============== NORMALIZED COSTS ==============

def test_identical_solvers_give_unit_best():
    instances = [RaceInstance(f"i{i}", True, view(c), view(c)) for i, c in enumerate((100, 2500, 7, 31000))]
    outcomes = [decide_race(i.instance_id, True, i.a, i.b, Strategy.BEST) for i in instances]
    assert normalized_cost(outcomes, instances) == 1.0


def test_random_baseline_averages_to_one():
    rng = np.random.Generator(np.random.PCG64(1))
    instances = synthetic_instances(rng, 100)
    base = baseline_cost(instances)
    means = [sum(o.charged_cost for o in random_outcomes(instances, seed)) / base for seed in range(100)]
    assert abs(np.mean(means) - 1.0) <= 0.05


def test_random_pick_follows_the_seeded_generator():
    rng = np.random.Generator(np.random.PCG64(3))
    instances = synthetic_instances(rng, 50)
    picks = [o.kept for o in random_outcomes(instances, 11)]
    assert picks == [o.kept for o in random_outcomes(instances, 11)]
    assert picks == ["AB"[c] for c in np.random.default_rng(11).integers(2, size=50)]
    assert picks != [o.kept for o in random_outcomes(instances, 12)]


def test_normalized_cost_rejects_other_instance_sets():
    instances = [RaceInstance("a", True, view(10), view(20)), RaceInstance("b", True, view(10), view(20))]
    outcomes = [decide_race("a", True, view(10), view(20), Strategy.BEST)]
    with pytest.raises(InstanceSetMismatchError):
        normalized_cost(outcomes, instances)


# ============== EXPERIMENT ==============

def test_portfolio_experiment_orders_strategies(tmp_path):
    rng = np.random.Generator(np.random.PCG64(2))
    instances = synthetic_instances(rng, 100)
    config = PortfolioConfig(pipeline=PipelineConfig(split=SplitMode.TWO_MODELS), folds=5, random_seeds=20)
    result = portfolio_experiment(instances, config)
    rows = portfolio_report(result, "synthetic")
    assert [(r.cls, r.charge) for r in rows] == [
        ("sat", ChargeMode.ON), ("sat", ChargeMode.OFF), ("unsat", ChargeMode.ON), ("unsat", ChargeMode.OFF)]
    for row in rows:
        assert row.best < 1.0
        assert row.instances == 50
        if row.charge is ChargeMode.OFF:
            assert row.best <= row.lmp_oracle and row.best <= row.lmp_two_models
            assert row.lmp_two_models < 1.0
        assert abs(row.random_mean - 1.0) <= 0.1

    again = portfolio_report(portfolio_experiment(instances, config), "synthetic")
    assert again == rows

    table = write_portfolio_table(str(tmp_path / "portfolio.csv"), rows, "fp")
    assert len(open(table).read().splitlines()) == 2 + len(rows)
    outcomes = write_outcomes(str(tmp_path / "outcomes.csv"), result, "fp")
    assert len(open(outcomes).read().splitlines()) == 2 + 2 * 4 * 100


def test_folds_without_a_model_predict_the_training_mean():
    rng = np.random.Generator(np.random.PCG64(3))
    instances = synthetic_instances(rng, 8)
    config = PortfolioConfig(folds=2, random_seeds=5)
    result = portfolio_experiment(instances, config)
    two_models = result.outcomes[(ChargeMode.OFF, Strategy.LMP_TWO_MODELS)]
    assert len(two_models) == 8
    for outcome in two_models:
        assert not outcome.short_circuit
        assert outcome.pred_a is not None and outcome.pred_b is not None
