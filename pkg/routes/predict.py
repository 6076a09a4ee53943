import logging
import math
import os

import click

from controllers.cnf import read_dimacs
from controllers.errors import FingerprintMismatchError
from controllers.features import build_features
from controllers.model import ClassModels, SplitMode
from controllers.probe import SearchProbe, probe_fingerprint, window_close
from controllers.solver import Verdict, solve
from routes.common import RunConfig, log_run, probe_config, probe_options, solver_config, solver_options

logger = logging.getLogger(__name__)


@click.command("predict")
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), required=True,
              help="Model JSON written by 'train'.")
@click.option("--cnf", "cnf_path", type=click.Path(exists=True, dir_okay=False), required=True,
              help="DIMACS CNF instance.")
@click.option("--mode", type=click.Choice([m.value for m in SplitMode]), default=None,
              help="How class models are combined; default: the model's training split.")
@click.option("--sat/--unsat", "satisfiable", default=None,
              help="Known satisfiability, needed by the oracle mode.")
@solver_options
@probe_options
def predict_command(model_path, cnf_path, mode, satisfiable, **kwargs):
    """
    Run the solver until the model's observation window closes and predict
    the full-run cost (natural log of conflicts).
    """
    solver = solver_config(kwargs)
    probe = probe_config(kwargs, solver)
    log_run(RunConfig(command="predict", solver=solver, probe=probe, params={"mode": mode},
                      paths={"model": model_path, "cnf": cnf_path}))

    bundle = ClassModels.load(model_path)
    expected = probe_fingerprint(solver, probe)
    if bundle.fingerprint != expected:
        raise FingerprintMismatchError(
            f"model was trained for probe fingerprint {bundle.fingerprint}, these settings give {expected}")
    split = SplitMode(mode) if mode else bundle.split
    if split is SplitMode.ORACLE and satisfiable is None:
        raise click.UsageError("oracle mode needs --sat or --unsat")

    close = window_close(solver, probe, bundle.window)
    formula = read_dimacs(cnf_path)
    search = SearchProbe(formula, probe)
    # the budget stops the solver right after the window closes
    result = solve(formula, solver.model_copy(update={"conflict_budget": close}), [search])

    instance_id = os.path.splitext(os.path.basename(cnf_path))[0]
    click.echo(f"instance {instance_id}")
    click.echo(f"window {bundle.window} closes_at {close}")
    snapshot = search.snapshot_for(bundle.window)
    if result.verdict is not Verdict.BUDGET_EXHAUSTED or snapshot is None:
        logger.info("%s finished before its window closed; no prediction", instance_id)
        click.echo(f"solved {result.verdict.value} conflicts {result.total_conflicts}")
        return
    predicted = bundle.predict(build_features(formula, snapshot), split, satisfiable=satisfiable)
    click.echo(f"predicted_log_conflicts {predicted:.6f}")
    click.echo(f"predicted_conflicts {math.exp(predicted):.1f}")
