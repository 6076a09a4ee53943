import logging

import click

from controllers.ensemble import load_instances
from controllers.features import dataset_write
from controllers.runs import run_ensemble, runs_to_dataset
from routes.common import (
    RunConfig,
    jobs_option,
    log_run,
    probe_config,
    probe_options,
    solver_config,
    solver_options,
)

logger = logging.getLogger(__name__)


@click.command("probe")
@click.option("--instances", "instances_path", type=click.Path(exists=True), required=True,
              help="Ensemble manifest (or its directory), a directory of .cnf files, or one .cnf file.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True, help="Dataset CSV to write.")
@solver_options
@probe_options
@jobs_option
def probe_command(instances_path, out_path, jobs, **kwargs):
    """
    Solve every instance with the probe attached and write the labelled
    feature dataset (one row per instance and closed window).
    """
    solver = solver_config(kwargs)
    probe = probe_config(kwargs, solver)
    log_run(RunConfig(command="probe", solver=solver, probe=probe,
                      paths={"instances": instances_path, "out": out_path}, jobs=jobs))

    instances, _ = load_instances(instances_path)
    logger.info("probing %d instances with %s windows", len(instances), probe.policy.mode.value)
    runs = run_ensemble(instances, solver, probe, jobs=jobs)
    dataset = runs_to_dataset(runs, solver, probe)
    dataset_write(out_path, dataset)
    click.echo(f"dataset {out_path} rows {len(dataset.examples)} instances {dataset.instances} "
               f"budget_exhausted {dataset.budget_exhausted} fingerprint {dataset.fingerprint}")
