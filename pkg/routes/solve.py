import logging

import click

from controllers.cnf import read_dimacs
from controllers.solver import EventTraceWriter, Verdict, solve
from routes.common import RunConfig, log_run, solver_config, solver_options

logger = logging.getLogger(__name__)

STATUS_LINES = {
    Verdict.SAT: "s SATISFIABLE",
    Verdict.UNSAT: "s UNSATISFIABLE",
    Verdict.BUDGET_EXHAUSTED: "s UNKNOWN",
}
# literals per 'v' line
MODEL_LINE_WIDTH = 20


@click.command("solve")
@click.option("--cnf", "cnf_path", type=click.Path(exists=True, dir_okay=False), required=True,
              help="DIMACS CNF instance.")
@click.option("--trace", "trace_path", type=click.Path(dir_okay=False), default=None,
              help="Write one CSV row per conflict event to this file.")
@click.option("--model/--no-model", "print_model", default=True, show_default=True,
              help="Print the satisfying assignment as 'v' lines.")
@solver_options
def solve_command(cnf_path, trace_path, print_model, **kwargs):
    """
    Solve one instance; SAT-competition style output ('c', 's', 'v' lines).
    """
    config = solver_config(kwargs)
    log_run(RunConfig(command="solve", solver=config, paths={"cnf": cnf_path}))
    formula = read_dimacs(cnf_path)

    if trace_path:
        with open(trace_path, "w", encoding="utf-8", newline="") as trace:
            result = solve(formula, config, [EventTraceWriter(trace)])
    else:
        result = solve(formula, config)

    logger.info("%s: %s after %d conflicts", cnf_path, result.verdict.value, result.total_conflicts)
    click.echo(f"c instance {cnf_path}")
    click.echo(f"c variables {formula.num_vars} clauses {formula.num_clauses}")
    click.echo(f"c conflicts {result.total_conflicts}")
    click.echo(f"c restarts {result.restarts_used}")
    click.echo(f"c decisions {result.decisions}")
    click.echo(f"c propagations {result.propagations}")
    click.echo(STATUS_LINES[result.verdict])
    if print_model and result.verdict is Verdict.SAT:
        literals = [str(lit) for lit in result.literal_model()] + ["0"]
        for start in range(0, len(literals), MODEL_LINE_WIDTH):
            click.echo("v " + " ".join(literals[start:start + MODEL_LINE_WIDTH]))
