import logging
import os

import click

from controllers.ensemble import load_instances
from controllers.evaluation import write_text
from controllers.model import SplitMode
from controllers.portfolio import (
    ChargeMode,
    PortfolioConfig,
    PredictionTarget,
    pair_runs,
    portfolio_experiment,
    portfolio_report,
    write_outcomes,
    write_portfolio_table,
)
from controllers.runs import run_ensemble
from routes.common import (
    RunConfig,
    jobs_option,
    log_run,
    pipeline_config,
    pipeline_options,
    probe_config,
    probe_options,
    solver_config,
    solver_options,
)

logger = logging.getLogger(__name__)


@click.command("portfolio")
@click.option("--instances", "instances_path", type=click.Path(exists=True), required=True,
              help="Ensemble manifest (or its directory) or a directory of .cnf files.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True, help="Report directory.")
@click.option("--factor-a", type=float, default=1.5, show_default=True, help="Restart factor of solver A.")
@click.option("--factor-b", type=float, default=1.2, show_default=True, help="Restart factor of solver B.")
@click.option("--charge-probes", "charge", type=click.Choice([c.value for c in ChargeMode]),
              default=ChargeMode.BOTH.value, show_default=True,
              help="Charge LMP strategies for both probe phases (on), not (off), or report both.")
@click.option("--target", type=click.Choice([t.value for t in PredictionTarget]),
              default=PredictionTarget.FULL.value, show_default=True,
              help="Models predict the full-run cost or the cost remaining after the probe.")
@click.option("--folds", type=click.IntRange(min=2), default=10, show_default=True)
@click.option("--seed", type=click.IntRange(min=0), default=25, show_default=True, help="Fold and coin seed.")
@click.option("--random-seeds", type=click.IntRange(min=1), default=100, show_default=True,
              help="Seeds averaged for the random baseline.")
@click.option("--dataset-name", default="rand", show_default=True, help="Row label in the table.")
@solver_options
@probe_options
@pipeline_options
@jobs_option
def portfolio_command(instances_path, out_dir, factor_a, factor_b, charge, target, folds, seed,
                      random_seeds, dataset_name, jobs, **kwargs):
    """
    Race two restart configurations on an ensemble and report the
    normalized total cost of each selection strategy.
    """
    solver_a = solver_config(dict(kwargs), restart_factor=factor_a)
    solver_b = solver_config(kwargs, restart_factor=factor_b)
    probe = probe_config(kwargs, solver_a)
    pipeline, lams = pipeline_config(kwargs, SplitMode.TWO_MODELS, seed)
    if len(lams) > 1:
        raise click.BadParameter("portfolio takes a single value", param_hint="--lambda")
    config = PortfolioConfig(probe=probe, pipeline=pipeline, charge=ChargeMode(charge),
                             target=PredictionTarget(target), folds=folds, seed=seed, random_seeds=random_seeds)
    run = log_run(RunConfig(
        command="portfolio",
        solver=solver_a,
        probe=probe,
        pipeline=pipeline,
        params={"solver_b": solver_b.model_dump(mode="json"), "portfolio": config.model_dump(mode="json"),
                "dataset_name": dataset_name},
        paths={"instances": instances_path, "out": out_dir},
        jobs=jobs,
    ))

    instances, _ = load_instances(instances_path)
    logger.info("racing restart factors %g and %g on %d instances", factor_a, factor_b, len(instances))
    runs_a = run_ensemble(instances, solver_a, probe, jobs=jobs, desc="solver A")
    runs_b = run_ensemble(instances, solver_b, probe, jobs=jobs, desc="solver B")
    paired = pair_runs(runs_a, runs_b, solver_a, solver_b, probe)
    result = portfolio_experiment(paired, config)
    rows = portfolio_report(result, dataset_name)
    logger.info("%d paired instances, %d table rows", len(paired), len(rows))

    os.makedirs(out_dir, exist_ok=True)
    write_portfolio_table(os.path.join(out_dir, "portfolio.csv"), rows, run.fingerprint)
    write_outcomes(os.path.join(out_dir, "outcomes.csv"), result, run.fingerprint)
    write_text(os.path.join(out_dir, "summary.txt"), [
        f"{r.dataset}/{r.cls} charge={r.charge.value} n={r.instances}: best {r.best:.3f} "
        f"lmp_oracle {r.lmp_oracle:.3f} lmp_two_models {r.lmp_two_models:.3f} random {r.random_mean:.3f} "
        f"short_circuits {r.short_circuits}"
        for r in rows
    ], run.fingerprint)
    click.echo(f"reports {out_dir} rows {len(rows)} fingerprint {run.fingerprint}")
