"""
Full solver runs with the search probe attached, one per instance, in
parallel across instances.
"""

import logging
from dataclasses import dataclass
from functools import partial
from multiprocessing import Pool
from typing import Callable, Iterable, Optional, Sequence

from tqdm import tqdm

from controllers.cnf import FormulaStats, read_dimacs
from controllers.features import Dataset, FeatureVector, LabeledExample, build_features, log_cost
from controllers.probe import ProbeConfig, SearchProbe, WindowSnapshot, probe_fingerprint
from controllers.settings import canonical_payload
from controllers.solver import SolverConfig, Verdict, solve

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class InstanceRun:
    instance_id: str
    verdict: Verdict
    total_conflicts: int
    restarts_used: int
    initial: FormulaStats
    snapshots: tuple[WindowSnapshot, ...] = ()

    @property
    def solved(self) -> bool:
        return self.verdict is not Verdict.BUDGET_EXHAUSTED

    @property
    def satisfiable(self) -> Optional[bool]:
        return None if not self.solved else self.verdict is Verdict.SAT

    @property
    def label(self) -> float:
        return log_cost(self.total_conflicts)

    def feature_vectors(self) -> list[FeatureVector]:
        """One base vector per closed window, in window-key order."""
        ordered = sorted(self.snapshots, key=lambda s: s.key)
        return [build_features(self.initial, snapshot) for snapshot in ordered]

    def examples(self) -> list[LabeledExample]:
        if not self.solved:
            return []
        ordered = sorted(self.snapshots, key=lambda s: s.key)
        return [
            LabeledExample(self.instance_id, self.satisfiable, vector, self.label, window=s.key)
            for s, vector in zip(ordered, self.feature_vectors())
        ]


def run_instance(task: tuple[str, str], solver_config: SolverConfig,
                 probe_config: ProbeConfig) -> InstanceRun:
    instance_id, path = task
    formula = read_dimacs(path)
    probe = SearchProbe(formula, probe_config)
    result = solve(formula, solver_config, [probe])
    return InstanceRun(
        instance_id=instance_id,
        verdict=result.verdict,
        total_conflicts=result.total_conflicts,
        restarts_used=result.restarts_used,
        initial=probe.initial,
        snapshots=tuple(probe.snapshots),
    )


def parallel_map(fn: Callable, items: Sequence, jobs: int = 1, desc: str = "") -> list:
    """Order-preserving map with a progress bar; jobs > 1 uses a process pool."""
    bar = tqdm(total=len(items), desc=desc, unit="inst", leave=False)
    try:
        if jobs <= 1 or len(items) <= 1:
            results = []
            for item in items:
                results.append(fn(item))
                bar.update()
            return results
        with Pool(processes=jobs) as pool:
            results = []
            for result in pool.imap(fn, items):
                results.append(result)
                bar.update()
            return results
    finally:
        bar.close()


def run_ensemble(instances: Iterable[tuple[str, str]], solver_config: SolverConfig,
                 probe_config: ProbeConfig, jobs: int = 1, desc: str = "probe") -> list[InstanceRun]:
    tasks = list(instances)
    worker = partial(run_instance, solver_config=solver_config, probe_config=probe_config)
    runs = parallel_map(worker, tasks, jobs=jobs, desc=desc)
    logger.info("%s: %d instances, %d solved", desc, len(runs), sum(r.solved for r in runs))
    return runs


def runs_to_dataset(runs: Sequence[InstanceRun], solver_config: SolverConfig,
                    probe_config: ProbeConfig) -> Dataset:
    exhausted = [run.instance_id for run in runs if not run.solved]
    if exhausted:
        logger.warning("%d instance(s) hit the conflict budget and are excluded", len(exhausted))
    examples = tuple(example for run in runs for example in run.examples())
    return Dataset(
        fingerprint=probe_fingerprint(solver_config, probe_config),
        probe_description=canonical_payload(probe_config),
        examples=examples,
        instances=len(runs),
        budget_exhausted=len(exhausted),
    )
