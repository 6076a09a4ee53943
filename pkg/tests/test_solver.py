import io
import itertools

import numpy as np
import pytest
from pydantic import ValidationError

from controllers.cnf import CnfFormula, GeneratorSpec, generate_random_3sat
from controllers.solver import (
    TRACE_COLUMNS,
    ConflictEvent,
    EventTraceWriter,
    SolverConfig,
    SolverObserver,
    Verdict,
    decision_level_depth,
    restart_schedule,
    solve,
    trail_depth,
)
from tests.oracles import dpll_sat, satisfies, truth_table_sat


class Recorder(SolverObserver):
    def __init__(self):
        self.events = []
        self.restarts = []
        self.finished = None

    def on_restart(self, restart_index, limit):
        self.restarts.append((restart_index, limit))

    def on_conflict(self, event):
        self.events.append(event)

    def on_finish(self, result):
        self.finished = result


def pigeonhole(pigeons, holes):
    var = lambda p, h: p * holes + h + 1
    clauses = [tuple(var(p, h) for h in range(holes)) for p in range(pigeons)]
    for h in range(holes):
        for p, q in itertools.combinations(range(pigeons), 2):
            clauses.append((-var(p, h), -var(q, h)))
    return CnfFormula(pigeons * holes, tuple(clauses))


def random_instances(count, lo, hi, seed):
    rng = np.random.Generator(np.random.PCG64(seed))
    for i in range(count):
        n = int(rng.integers(lo, hi + 1))
        ratio = float(rng.uniform(3.0, 6.0))
        yield generate_random_3sat(GeneratorSpec(num_vars=n, ratio=ratio, seed=seed * 100_000 + i))


def test_restart_schedule_factor_1_5():
    config = SolverConfig(restart_base=100, restart_factor=1.5)
    assert [restart_schedule(config, k) for k in range(1, 9)] == [100, 150, 225, 337, 506, 759, 1139, 1708]


def test_restart_schedule_factor_1_2():
    config = SolverConfig(restart_base=100, restart_factor=1.2)
    assert [restart_schedule(config, k) for k in range(1, 5)] == [100, 120, 144, 172]


@pytest.mark.parametrize("factor", [1.01, 1.2, 1.5, 3.0])
def test_restart_schedule_first_is_base(factor):
    assert restart_schedule(SolverConfig(restart_base=77, restart_factor=factor), 1) == 77


def test_restart_schedule_rejects_zero_index():
    with pytest.raises(ValueError):
        restart_schedule(SolverConfig(), 0)


def test_config_validation():
    with pytest.raises(ValidationError):
        SolverConfig(restart_factor=1.0)
    with pytest.raises(ValidationError):
        SolverConfig(conflict_budget=0)


def test_contradictory_units():
    result = solve(CnfFormula(1, ((1,), (-1,))), SolverConfig())
    assert result.verdict is Verdict.UNSAT
    assert result.total_conflicts <= 1


def test_single_clause_sat():
    result = solve(CnfFormula(2, ((1, 2),)), SolverConfig())
    assert result.verdict is Verdict.SAT
    assert satisfies([(1, 2)], result.literal_model())


def test_empty_and_trivially_unsat_formulas():
    assert solve(CnfFormula(3, ()), SolverConfig()).verdict is Verdict.SAT
    assert solve(CnfFormula(3, ((1, 2),), trivially_unsat=True), SolverConfig()).verdict is Verdict.UNSAT


def test_pigeonhole_unsat():
    recorder = Recorder()
    result = solve(pigeonhole(5, 4), SolverConfig(), [recorder])
    assert result.verdict is Verdict.UNSAT
    assert result.total_conflicts == len(recorder.events)
    assert recorder.finished == result


def test_budget_exhausted():
    result = solve(pigeonhole(8, 7), SolverConfig(conflict_budget=10))
    assert result.verdict is Verdict.BUDGET_EXHAUSTED
    assert result.total_conflicts == 10
    assert result.model is None


def test_small_instances_match_truth_table():
    for formula in random_instances(200, 3, 12, seed=1):
        result = solve(formula, SolverConfig())
        assert (result.verdict is Verdict.SAT) == truth_table_sat(formula.num_vars, formula.clauses)
        if result.verdict is Verdict.SAT:
            assert satisfies(formula.clauses, result.literal_model())


def test_random_instances_match_dpll():
    for formula in random_instances(100, 20, 50, seed=2):
        result = solve(formula, SolverConfig())
        assert result.verdict is not Verdict.BUDGET_EXHAUSTED
        assert (result.verdict is Verdict.SAT) == dpll_sat(formula.num_vars, formula.clauses)
        if result.verdict is Verdict.SAT:
            assert satisfies(formula.clauses, result.literal_model())


@pytest.mark.slow
def test_thousand_random_instances_match_dpll():
    for formula in random_instances(1000, 20, 50, seed=3):
        result = solve(formula, SolverConfig())
        assert (result.verdict is Verdict.SAT) == dpll_sat(formula.num_vars, formula.clauses)
        if result.verdict is Verdict.SAT:
            assert satisfies(formula.clauses, result.literal_model())


def test_without_restarts_still_correct():
    config = SolverConfig(restarts_enabled=False)
    for formula in random_instances(50, 20, 40, seed=4):
        result = solve(formula, config)
        assert result.restarts_used == 0
        assert (result.verdict is Verdict.SAT) == dpll_sat(formula.num_vars, formula.clauses)


def test_event_stream_invariants():
    formula = generate_random_3sat(GeneratorSpec(num_vars=80, ratio=4.26, seed=9))
    recorder = Recorder()
    result = solve(formula, SolverConfig(), [recorder])
    events = recorder.events
    assert [e.conflict_index for e in events] == list(range(1, result.total_conflicts + 1))
    for e in events:
        assert e.decision_level_at_conflict >= 1
        assert 0 <= e.backjump_target_level < e.decision_level_at_conflict
        assert e.backjump_size >= 1
        assert e.trail_size_after_backjump <= e.trail_size_at_conflict
        assert e.learnt_clause_size >= 1 and e.conflict_clause_size >= 1
        assert decision_level_depth(e) <= trail_depth(e) <= formula.num_vars
        assert e.num_binary_clauses + e.num_ternary_clauses <= e.current_num_clauses
        assert e.current_num_clauses >= formula.num_clauses
        assert 1 <= e.restart_index <= result.restarts_used + 1


def test_restart_announcements_follow_schedule():
    formula = generate_random_3sat(GeneratorSpec(num_vars=120, ratio=4.26, seed=21))
    config = SolverConfig()
    recorder = Recorder()
    result = solve(formula, config, [recorder])
    assert [k for k, _ in recorder.restarts] == list(range(1, result.restarts_used + 2))
    assert all(limit == restart_schedule(config, k) for k, limit in recorder.restarts)


def test_no_restart_mode_announces_budget_once():
    recorder = Recorder()
    solve(pigeonhole(5, 4), SolverConfig(restarts_enabled=False, conflict_budget=5000), [recorder])
    assert recorder.restarts == [(1, 5000)]


def test_determinism():
    formula = generate_random_3sat(GeneratorSpec(num_vars=100, ratio=4.26, seed=5))
    first, second = Recorder(), Recorder()
    a = solve(formula, SolverConfig(), [first])
    b = solve(formula, SolverConfig(), [second])
    assert a == b
    assert first.events == second.events


def test_depth_helpers():
    event = ConflictEvent(
        conflict_index=1, decision_level_at_conflict=5, trail_size_at_conflict=17, backjump_target_level=2,
        trail_size_after_backjump=9, learnt_clause_size=3, conflict_clause_size=3, current_num_clauses=10,
        restart_index=1,
    )
    assert trail_depth(event) == 17
    assert decision_level_depth(event) == 5
    assert event.backjump_size == 3


def test_event_trace_writer():
    stream = io.StringIO()
    result = solve(pigeonhole(5, 4), SolverConfig(), [EventTraceWriter(stream)])
    lines = stream.getvalue().splitlines()
    assert lines[0].split(",") == list(TRACE_COLUMNS)
    assert len(lines) == result.total_conflicts + 1


def test_restarts_end_exactly_at_their_limit():
    config = SolverConfig(restart_base=10, restart_factor=1.5, conflict_budget=300)
    recorder = Recorder()
    solve(pigeonhole(7, 6), config, [recorder])
    bounds = list(itertools.accumulate(restart_schedule(config, k) for k in range(1, 30)))
    for e in recorder.events:
        k = e.restart_index
        assert (bounds[k - 2] if k > 1 else 0) < e.conflict_index <= bounds[k - 1]
