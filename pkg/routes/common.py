"""
Options and settings shared by the subcommands.
"""

import logging
from typing import Any, Optional

import click
from pydantic import BaseModel, ConfigDict, Field

from controllers.features import Dataset, dataset_read, merge_datasets
from controllers.model import PipelineConfig, SplitMode
from controllers.probe import ProbeConfig, WindowMode, WindowPolicy
from controllers.settings import DEFAULT_JOBS, stable_fingerprint
from controllers.solver import SolverConfig

logger = logging.getLogger(__name__)

_SOLVER_DEFAULTS = SolverConfig()
_POLICY_DEFAULTS = WindowPolicy()
_PIPELINE_DEFAULTS = PipelineConfig()


class RunConfig(BaseModel):
    """Every setting of one invocation. Paths, jobs and log level are not part of the fingerprint."""
    model_config = ConfigDict(frozen=True)

    command: str
    solver: Optional[SolverConfig] = None
    probe: Optional[ProbeConfig] = None
    pipeline: Optional[PipelineConfig] = None
    params: dict[str, Any] = Field(default_factory=dict)
    paths: dict[str, str] = Field(default_factory=dict)
    jobs: int = 1
    log_level: str = "INFO"

    @property
    def fingerprint(self) -> str:
        return stable_fingerprint(self.model_dump(mode="json", exclude={"paths", "jobs", "log_level"}))


# ============== OPTION GROUPS ==============

def _apply(options):
    def decorator(fn):
        for option in reversed(options):
            fn = option(fn)
        return fn
    return decorator


def solver_options(fn):
    """--restart-base, --restart-factor, --restarts/--no-restarts, --budget, decays, --solver-seed."""
    return _apply([
        click.option("--restart-base", type=click.IntRange(min=1), default=_SOLVER_DEFAULTS.restart_base,
                     show_default=True, help="Conflicts allowed in the first restart."),
        click.option("--restart-factor", type=float, default=_SOLVER_DEFAULTS.restart_factor,
                     show_default=True, help="Geometric growth of the restart limit."),
        click.option("--restarts/--no-restarts", "restarts_enabled", default=True, show_default=True,
                     help="Run with the geometric restart schedule or without restarts."),
        click.option("--budget", "conflict_budget", type=click.IntRange(min=1),
                     default=_SOLVER_DEFAULTS.conflict_budget, show_default=True,
                     help="Give up (UNKNOWN) after this many conflicts."),
        click.option("--var-decay", type=float, default=_SOLVER_DEFAULTS.var_decay, show_default=True),
        click.option("--clause-decay", type=float, default=_SOLVER_DEFAULTS.clause_decay, show_default=True),
        click.option("--solver-seed", type=click.IntRange(min=0), default=_SOLVER_DEFAULTS.seed,
                     show_default=True, help="Branching tie-break seed."),
    ])(fn)


def solver_config(kwargs: dict, **override) -> SolverConfig:
    values = dict(
        restart_base=kwargs.pop("restart_base"),
        restart_factor=kwargs.pop("restart_factor"),
        restarts_enabled=kwargs.pop("restarts_enabled"),
        conflict_budget=kwargs.pop("conflict_budget"),
        var_decay=kwargs.pop("var_decay"),
        clause_decay=kwargs.pop("clause_decay"),
        seed=kwargs.pop("solver_seed"),
    )
    values.update(override)
    return SolverConfig(**values)


def probe_options(fn):
    """Window policy and no-restart query points."""
    return _apply([
        click.option("--window-mode", type=click.Choice(["auto", "no_restarts", "with_restarts"]),
                     default="auto", show_default=True,
                     help="auto: with_restarts when the solver restarts, else no_restarts."),
        click.option("--wait", "fixed_wait", type=click.IntRange(min=0), default=_POLICY_DEFAULTS.fixed_wait,
                     show_default=True, help="No-restart mode: conflicts skipped before the window."),
        click.option("--size", "fixed_size", type=click.IntRange(min=1), default=_POLICY_DEFAULTS.fixed_size,
                     show_default=True, help="No-restart mode: window length in conflicts."),
        click.option("--wait-floor", type=click.IntRange(min=0), default=_POLICY_DEFAULTS.wait_floor,
                     show_default=True, help="Restart mode: wait = max(floor, frac * limit)."),
        click.option("--wait-frac", type=float, default=_POLICY_DEFAULTS.wait_frac, show_default=True),
        click.option("--size-floor", type=click.IntRange(min=1), default=_POLICY_DEFAULTS.size_floor,
                     show_default=True, help="Restart mode: size = max(floor, frac * limit)."),
        click.option("--size-frac", type=float, default=_POLICY_DEFAULTS.size_frac, show_default=True),
        click.option("--query-point", "query_points", type=click.IntRange(min=1), multiple=True,
                     help="No-restart mode: backtrack count at which a window closes (repeatable)."),
    ])(fn)


def probe_config(kwargs: dict, solver: SolverConfig) -> ProbeConfig:
    mode = kwargs.pop("window_mode")
    if mode == "auto":
        mode = WindowMode.WITH_RESTARTS if solver.restarts_enabled else WindowMode.NO_RESTARTS
    elif mode == WindowMode.WITH_RESTARTS.value and not solver.restarts_enabled:
        raise click.BadParameter("with_restarts windows need --restarts", param_hint="--window-mode")
    policy = WindowPolicy(
        mode=WindowMode(mode),
        fixed_wait=kwargs.pop("fixed_wait"),
        fixed_size=kwargs.pop("fixed_size"),
        wait_floor=kwargs.pop("wait_floor"),
        wait_frac=kwargs.pop("wait_frac"),
        size_floor=kwargs.pop("size_floor"),
        size_frac=kwargs.pop("size_frac"),
    )
    return ProbeConfig(policy=policy, query_points=tuple(kwargs.pop("query_points")))


def pipeline_options(fn):
    return _apply([
        click.option("--lambda", "lams", default=str(_PIPELINE_DEFAULTS.lam), show_default=True,
                     help="Ridge penalty; a comma list runs a grid where supported."),
        click.option("--collinear-threshold", type=float, default=_PIPELINE_DEFAULTS.collinear_threshold,
                     show_default=True, help="|Pearson r| at which the later feature is dropped."),
        click.option("--max-train", type=click.IntRange(min=10), default=_PIPELINE_DEFAULTS.max_train,
                     show_default=True, help="Training-set cap."),
        click.option("--aic-penalty", type=float, default=_PIPELINE_DEFAULTS.aic_penalty, show_default=True),
    ])(fn)


def parse_lambdas(text: str) -> list[float]:
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise click.BadParameter(f"not a comma list of numbers: {text!r}", param_hint="--lambda") from None
    if not values or any(v < 0 for v in values):
        raise click.BadParameter("need one or more values >= 0", param_hint="--lambda")
    return values


def pipeline_config(kwargs: dict, split: SplitMode = SplitMode.ORACLE, seed: int = 0) -> tuple[PipelineConfig, list[float]]:
    lams = parse_lambdas(kwargs.pop("lams"))
    config = PipelineConfig(
        lam=lams[0],
        collinear_threshold=kwargs.pop("collinear_threshold"),
        max_train=kwargs.pop("max_train"),
        aic_penalty=kwargs.pop("aic_penalty"),
        split=split,
        seed=seed,
    )
    return config, lams


def jobs_option(fn):
    return click.option("--jobs", type=click.IntRange(min=1), default=DEFAULT_JOBS, envvar="LMP_JOBS",
                        show_default=True, help="Instances processed in parallel.")(fn)


def log_run(run: RunConfig) -> RunConfig:
    logger.info("%s: run fingerprint %s", run.command, run.fingerprint)
    logger.debug("%s settings: %s", run.command, run.model_dump_json())
    return run


def read_datasets(paths, expected_fingerprint: Optional[str] = None) -> Dataset:
    """Read one or more dataset files; several are merged and must share a fingerprint."""
    datasets = [dataset_read(path, expected_fingerprint=expected_fingerprint) for path in paths]
    if len(datasets) == 1:
        return datasets[0]
    merged = merge_datasets(datasets)
    logger.info("merged %d datasets: %d examples from %d instances",
                len(datasets), len(merged.examples), merged.instances)
    return merged
