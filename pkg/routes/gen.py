import logging
import os

import click

from controllers.ensemble import MANIFEST_NAME, EnsembleSpec, generate_ensemble
from routes.common import RunConfig, jobs_option, log_run, solver_config, solver_options

logger = logging.getLogger(__name__)


@click.command("gen")
@click.option("--vars", "num_vars", type=click.IntRange(min=3), required=True, help="Variables per instance.")
@click.option("--ratio", type=click.FloatRange(min=0, min_open=True), required=True,
              help="Clauses per variable (clauses = round(ratio * vars)).")
@click.option("--count", type=click.IntRange(min=1), required=True, help="Members to write.")
@click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True, help="Ensemble seed.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True, help="Output directory.")
@click.option("--prefix", default="rand3", show_default=True, help="Instance file name prefix.")
@click.option("--keep", type=click.Choice(["any", "sat", "unsat"]), default="any", show_default=True,
              help="Keep only members with this label (implies --label).")
@click.option("--label/--no-label", default=True, show_default=True,
              help="Solve every member to record its satisfiability in the manifest.")
@solver_options
@jobs_option
def gen_command(num_vars, ratio, count, seed, out_dir, prefix, keep, label, jobs, **kwargs):
    """
    Generate a seeded uniform random 3-SAT ensemble plus its JSON manifest.
    """
    solver = solver_config(kwargs)
    if keep != "any" and not label:
        raise click.UsageError("--keep sat|unsat needs --label")
    spec = EnsembleSpec(num_vars=num_vars, ratio=ratio, count=count, seed=seed, keep=keep, prefix=prefix)
    log_run(RunConfig(command="gen", solver=solver if label else None,
                      params=spec.model_dump(mode="json"), paths={"out": out_dir}, jobs=jobs))

    if not label:
        logger.info("writing unlabelled members; the manifest will carry no sat/unsat labels")
    manifest = generate_ensemble(spec, out_dir, solver if label else None, jobs=jobs)
    click.echo(f"manifest {os.path.join(out_dir, MANIFEST_NAME)} members {len(manifest.members)} "
               f"fingerprint {manifest.fingerprint}")
