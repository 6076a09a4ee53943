"""
Two-solver portfolio: both solvers run to the end of their first observation
window, the cost models pick one, the other is terminated.

Races are simulated from full runs by conflict counting, so they are
deterministic. Costs are conflicts; tables are normalized by the expected
cost of picking a solver uniformly at random.
"""

import enum
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from controllers.errors import InstanceSetMismatchError, ModelError, TooFewExamplesError
from controllers.evaluation import stratified_folds, write_table
from controllers.features import FeatureVector, LabeledExample, build_features, log_cost
from controllers.model import ClassModels, PipelineConfig, SplitMode, train_class_models
from controllers.probe import ProbeConfig, WindowMode, WindowPolicy, first_window_close
from controllers.runs import InstanceRun, run_instance
from controllers.solver import SolverConfig

logger = logging.getLogger(__name__)

SOLVERS = ("A", "B")


class Strategy(str, enum.Enum):
    BEST = "best"
    LMP_ORACLE = "lmp_oracle"
    LMP_TWO_MODELS = "lmp_two_models"
    RANDOM_BASELINE = "random"


class ChargeMode(str, enum.Enum):
    ON = "on"
    OFF = "off"
    BOTH = "both"

    def modes(self) -> tuple["ChargeMode", ...]:
        return (ChargeMode.ON, ChargeMode.OFF) if self is ChargeMode.BOTH else (self,)


class PredictionTarget(str, enum.Enum):
    FULL = "full"
    REMAINING = "remaining"


class PortfolioConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    probe: ProbeConfig = ProbeConfig(policy=WindowPolicy(mode=WindowMode.WITH_RESTARTS))
    pipeline: PipelineConfig = PipelineConfig(split=SplitMode.TWO_MODELS)
    charge: ChargeMode = ChargeMode.BOTH
    target: PredictionTarget = PredictionTarget.FULL
    folds: int = Field(default=10, ge=2)
    seed: int = Field(default=25, ge=0, description="Fold and coin seed")
    random_seeds: int = Field(default=100, ge=1, description="Seeds averaged for the random baseline")


def first_window_key(probe: ProbeConfig) -> int:
    return 1 if probe.policy.mode is WindowMode.WITH_RESTARTS else probe.window_keys()[0]


@dataclass(frozen=True)
class RacerView:
    """What one solver contributes to a race on one instance."""
    full_cost: int
    probe_cost: int
    features: Optional[FeatureVector]

    @property
    def finished_in_probe(self) -> bool:
        return self.features is None


def racer_view(run: InstanceRun, close: int, key: int) -> RacerView:
    snapshot = next((s for s in run.snapshots if s.key == key), None)
    if run.total_conflicts <= close or snapshot is None:
        return RacerView(run.total_conflicts, run.total_conflicts, None)
    return RacerView(run.total_conflicts, close, build_features(run.initial, snapshot))


@dataclass(frozen=True)
class RaceOutcome:
    instance_id: str
    satisfiable: bool
    strategy: Strategy
    kept: str
    probe_cost_a: int
    probe_cost_b: int
    kept_total_cost: int
    charged_cost: int
    short_circuit: bool = False
    pred_a: Optional[float] = None
    pred_b: Optional[float] = None


def decide_race(instance_id: str, satisfiable: bool, a: RacerView, b: RacerView, strategy: Strategy,
                charge: ChargeMode = ChargeMode.ON, pred_a: Optional[float] = None,
                pred_b: Optional[float] = None, coin: Optional[str] = None) -> RaceOutcome:
    """
    BEST keeps the cheaper full run, RANDOM_BASELINE keeps `coin`; both are
    charged the kept full cost. LMP strategies keep the lower prediction
    (ties to A) and, with charging on, pay both probes plus the kept solver's
    remaining cost. A solver finishing inside its probe phase is kept outright.
    """
    views = {"A": a, "B": b}

    def outcome(kept: str, charged: int, short: bool = False) -> RaceOutcome:
        return RaceOutcome(instance_id, satisfiable, strategy, kept, a.probe_cost, b.probe_cost,
                           views[kept].full_cost, charged, short, pred_a, pred_b)

    if strategy is Strategy.BEST:
        kept = "A" if a.full_cost <= b.full_cost else "B"
        return outcome(kept, views[kept].full_cost)
    if strategy is Strategy.RANDOM_BASELINE:
        if coin not in SOLVERS:
            raise ValueError("random strategy needs a coin of 'A' or 'B'")
        return outcome(coin, views[coin].full_cost)

    finished = [name for name in SOLVERS if views[name].finished_in_probe]
    if finished:
        kept = min(finished, key=lambda name: (views[name].full_cost, name))
        other = "B" if kept == "A" else "A"
        cost = views[kept].full_cost
        if charge is ChargeMode.ON:
            # the other solver ran alongside until the keeper finished or its own probe ended
            return outcome(kept, cost + min(cost, views[other].probe_cost), short=True)
        return outcome(kept, cost, short=True)

    if pred_a is None or pred_b is None:
        raise ModelError(f"{instance_id}: predictions for both solvers are required")
    kept = "A" if pred_a <= pred_b else "B"
    if charge is ChargeMode.ON:
        charged = a.probe_cost + b.probe_cost + (views[kept].full_cost - views[kept].probe_cost)
    else:
        charged = views[kept].full_cost
    return outcome(kept, charged)


def _prediction(models: ClassModels, view: RacerView, strategy: Strategy, satisfiable: bool,
                fallback: Optional[float] = None) -> Optional[float]:
    if view.features is None:
        return None
    mode = SplitMode.ORACLE if strategy is Strategy.LMP_ORACLE else SplitMode.TWO_MODELS
    try:
        return models.predict(view.features, mode, satisfiable=satisfiable)
    except TooFewExamplesError:
        if fallback is None:
            raise
        logger.warning("no model for this fold; predicting the training mean %.3f", fallback)
        return fallback


def race(instance: tuple[str, str], solver_a: SolverConfig, solver_b: SolverConfig, strategy: Strategy,
         models_a: ClassModels, models_b: ClassModels, config: PortfolioConfig = PortfolioConfig(),
         satisfiable: Optional[bool] = None, coin_seed: int = 25) -> RaceOutcome:
    """Run both solvers on one instance and settle the race under `strategy`."""
    key = first_window_key(config.probe)
    runs = [run_instance(instance, s, config.probe) for s in (solver_a, solver_b)]
    views = [racer_view(run, first_window_close(s, config.probe), key)
             for run, s in zip(runs, (solver_a, solver_b))]
    if satisfiable is None:
        satisfiable = runs[0].satisfiable if runs[0].solved else bool(runs[1].satisfiable)
    charge = config.charge.modes()[0]
    if strategy in (Strategy.LMP_ORACLE, Strategy.LMP_TWO_MODELS):
        return decide_race(instance[0], satisfiable, views[0], views[1], strategy, charge,
                           _prediction(models_a, views[0], strategy, satisfiable),
                           _prediction(models_b, views[1], strategy, satisfiable))
    coin = SOLVERS[int(np.random.default_rng(coin_seed).integers(len(SOLVERS)))]
    return decide_race(instance[0], satisfiable, views[0], views[1], strategy, charge, coin=coin)


# ============== EXPERIMENT ==============

@dataclass(frozen=True)
class RaceInstance:
    instance_id: str
    satisfiable: bool
    a: RacerView
    b: RacerView


def pair_runs(runs_a: Sequence[InstanceRun], runs_b: Sequence[InstanceRun],
              solver_a: SolverConfig, solver_b: SolverConfig,
              probe: ProbeConfig) -> list[RaceInstance]:
    """Race instances solved by both solvers, in runs_a order."""
    by_id = {run.instance_id: run for run in runs_b}
    if set(by_id) != {run.instance_id for run in runs_a}:
        raise InstanceSetMismatchError("solver A and solver B were run on different instance sets")
    key = first_window_key(probe)
    close_a = first_window_close(solver_a, probe)
    close_b = first_window_close(solver_b, probe)
    paired, skipped = [], 0
    for run_a in runs_a:
        run_b = by_id[run_a.instance_id]
        if not (run_a.solved and run_b.solved):
            skipped += 1
            continue
        if run_a.satisfiable != run_b.satisfiable:
            raise InstanceSetMismatchError(f"{run_a.instance_id}: solvers disagree on satisfiability")
        paired.append(RaceInstance(run_a.instance_id, run_a.satisfiable,
                                   racer_view(run_a, close_a, key), racer_view(run_b, close_b, key)))
    if skipped:
        logger.warning("%d instance(s) excluded: conflict budget hit by at least one solver", skipped)
    return paired


def _label(view: RacerView, target: PredictionTarget) -> float:
    if target is PredictionTarget.REMAINING:
        return log_cost(view.full_cost - view.probe_cost)
    return log_cost(view.full_cost)


def _train_solver(instances: Sequence[RaceInstance], which: str,
                  config: PortfolioConfig) -> tuple[ClassModels, Optional[float]]:
    """Class models for one solver plus the mean training label, used when no model could be trained."""
    examples = []
    for inst in instances:
        view = inst.a if which == "A" else inst.b
        if view.features is not None:
            examples.append(LabeledExample(inst.instance_id, inst.satisfiable, view.features,
                                           _label(view, config.target)))
    mean = float(np.mean([e.label for e in examples])) if examples else None
    return train_class_models(examples, config.pipeline), mean


LMP_STRATEGIES = (Strategy.LMP_ORACLE, Strategy.LMP_TWO_MODELS)


@dataclass(frozen=True)
class PortfolioResult:
    instances: tuple[RaceInstance, ...]
    # (charge mode, strategy) -> outcomes in instance order
    outcomes: dict[tuple[ChargeMode, Strategy], tuple[RaceOutcome, ...]]
    random_costs: tuple[tuple[int, ...], ...]  # per seed, per instance


def random_outcomes(instances: Sequence[RaceInstance], seed: int) -> list[RaceOutcome]:
    coins = np.random.default_rng(seed).integers(len(SOLVERS), size=len(instances))
    return [
        decide_race(inst.instance_id, inst.satisfiable, inst.a, inst.b, Strategy.RANDOM_BASELINE,
                    coin=SOLVERS[int(c)])
        for inst, c in zip(instances, coins)
    ]


def portfolio_experiment(instances: Sequence[RaceInstance],
                         config: PortfolioConfig = PortfolioConfig()) -> PortfolioResult:
    """
    Cross-validated races: per fold, sat and unsat models are trained for each
    solver on the training instances and race the held-out instances.
    """
    instances = list(instances)
    assignment = stratified_folds([inst.satisfiable for inst in instances], config.folds, config.seed)
    preds: dict[tuple[str, Strategy], list[Optional[float]]] = {
        (name, s): [None] * len(instances) for name in SOLVERS for s in LMP_STRATEGIES
    }
    for fold in range(config.folds):
        train_set = [inst for inst, f in zip(instances, assignment) if f != fold]
        (models_a, mean_a), (models_b, mean_b) = (_train_solver(train_set, name, config) for name in SOLVERS)
        for i, inst in enumerate(instances):
            if assignment[i] != fold:
                continue
            for strategy in LMP_STRATEGIES:
                preds[("A", strategy)][i] = _prediction(models_a, inst.a, strategy, inst.satisfiable, mean_a)
                preds[("B", strategy)][i] = _prediction(models_b, inst.b, strategy, inst.satisfiable, mean_b)

    outcomes = {}
    for charge in config.charge.modes():
        outcomes[(charge, Strategy.BEST)] = tuple(
            decide_race(inst.instance_id, inst.satisfiable, inst.a, inst.b, Strategy.BEST, charge)
            for inst in instances)
        for strategy in LMP_STRATEGIES:
            outcomes[(charge, strategy)] = tuple(
                decide_race(inst.instance_id, inst.satisfiable, inst.a, inst.b, strategy, charge,
                            preds[("A", strategy)][i], preds[("B", strategy)][i])
                for i, inst in enumerate(instances))
        outcomes[(charge, Strategy.RANDOM_BASELINE)] = tuple(random_outcomes(instances, config.seed))

    random_costs = tuple(
        tuple(o.charged_cost for o in random_outcomes(instances, config.seed + s))
        for s in range(config.random_seeds)
    )
    return PortfolioResult(tuple(instances), outcomes, random_costs)


# ============== REPORT ==============

def baseline_cost(instances: Sequence[RaceInstance]) -> float:
    """Expected total cost of a uniform random pick: per-instance mean of both full costs, summed."""
    return float(sum((inst.a.full_cost + inst.b.full_cost) / 2 for inst in instances))


def normalized_cost(outcomes: Sequence[RaceOutcome], instances: Sequence[RaceInstance]) -> float:
    if [o.instance_id for o in outcomes] != [inst.instance_id for inst in instances]:
        raise InstanceSetMismatchError("strategy outcomes cover a different instance set")
    base = baseline_cost(instances)
    return sum(o.charged_cost for o in outcomes) / base if base else 1.0


@dataclass(frozen=True)
class PortfolioRow:
    dataset: str
    cls: str
    charge: ChargeMode
    instances: int
    best: float
    lmp_oracle: float
    lmp_two_models: float
    random_seeded: float
    random_mean: float
    baseline_cost: float
    short_circuits: int


def portfolio_report(result: PortfolioResult, dataset: str = "rand") -> list[PortfolioRow]:
    rows = []
    charges = sorted({charge for charge, _ in result.outcomes}, key=lambda c: c.value, reverse=True)
    for cls in ("sat", "unsat"):
        wanted = [i for i, inst in enumerate(result.instances) if inst.satisfiable == (cls == "sat")]
        if not wanted:
            continue
        subset = [result.instances[i] for i in wanted]
        base = baseline_cost(subset)
        random_mean = float(np.mean([
            sum(costs[i] for i in wanted) / base if base else 1.0 for costs in result.random_costs
        ]))
        for charge in charges:
            picked = {s: [result.outcomes[(charge, s)][i] for i in wanted] for s in Strategy}
            rows.append(PortfolioRow(
                dataset=dataset,
                cls=cls,
                charge=charge,
                instances=len(subset),
                best=normalized_cost(picked[Strategy.BEST], subset),
                lmp_oracle=normalized_cost(picked[Strategy.LMP_ORACLE], subset),
                lmp_two_models=normalized_cost(picked[Strategy.LMP_TWO_MODELS], subset),
                random_seeded=normalized_cost(picked[Strategy.RANDOM_BASELINE], subset),
                random_mean=random_mean,
                baseline_cost=base,
                short_circuits=sum(o.short_circuit for o in picked[Strategy.LMP_TWO_MODELS]),
            ))
    return rows


PORTFOLIO_COLUMNS = ("dataset", "class", "charge_probes", "instances", "best", "lmp_oracle",
                     "lmp_two_models", "random_seeded", "random_mean", "baseline_cost", "short_circuits")
OUTCOME_COLUMNS = ("instance_id", "class", "charge_probes", "strategy", "kept", "probe_cost_a",
                   "probe_cost_b", "kept_total_cost", "charged_cost", "short_circuit", "pred_a", "pred_b")


def write_portfolio_table(path: str, rows: Sequence[PortfolioRow], fingerprint: str) -> str:
    return write_table(path, PORTFOLIO_COLUMNS, [
        (r.dataset, r.cls, r.charge.value, r.instances, r.best, r.lmp_oracle, r.lmp_two_models,
         r.random_seeded, r.random_mean, r.baseline_cost, r.short_circuits)
        for r in rows
    ], fingerprint)


def write_outcomes(path: str, result: PortfolioResult, fingerprint: str) -> str:
    rows = []
    for (charge, strategy), outcomes in result.outcomes.items():
        for o in outcomes:
            rows.append((o.instance_id, "sat" if o.satisfiable else "unsat", charge.value, strategy.value,
                         o.kept, o.probe_cost_a, o.probe_cost_b, o.kept_total_cost, o.charged_cost,
                         o.short_circuit, "" if o.pred_a is None else o.pred_a,
                         "" if o.pred_b is None else o.pred_b))
    return write_table(path, OUTCOME_COLUMNS, rows, fingerprint)
