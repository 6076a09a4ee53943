import logging

import click

from controllers.evaluation import (
    DEFAULT_FACTORS,
    chained_restart_experiment,
    cross_validate,
    lambda_grid,
    query_point_sweep,
    write_chained_reports,
    write_cv_reports,
    write_sweep_reports,
)
from controllers.model import SplitMode
from routes.common import RunConfig, log_run, pipeline_config, pipeline_options, read_datasets

logger = logging.getLogger(__name__)


@click.command("evaluate")
@click.option("--dataset", "dataset_paths", type=click.Path(exists=True, dir_okay=False), required=True,
              multiple=True, help="Dataset CSV written by 'probe' (repeatable; several are merged).")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True, help="Report directory.")
@click.option("--experiment", type=click.Choice(["cv", "sweep", "chained"]), default="cv", show_default=True,
              help="cv: one window; sweep: every query point; chained: plain vs chained per window ordinal.")
@click.option("--window", type=int, default=None, help="cv only: window key to evaluate; default: the first.")
@click.option("--split", "splits", type=click.Choice([m.value for m in SplitMode]), multiple=True,
              help="Model split(s) to compare (repeatable); default: oracle.")
@click.option("--folds", type=click.IntRange(min=2), default=10, show_default=True)
@click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True, help="Fold seed.")
@click.option("--factor", type=click.FloatRange(min=1), default=2.0, show_default=True,
              help="chained only: error factor reported per window ordinal.")
@click.option("--gnuplot/--no-gnuplot", default=False, show_default=True,
              help="Also write whitespace-separated .dat files for plotting.")
@pipeline_options
def evaluate_command(dataset_paths, out_dir, experiment, window, splits, folds, seed, factor, gnuplot, **kwargs):
    """
    Cross-validated evaluation of the cost models on a probe dataset.
    """
    splits = [SplitMode(s) for s in splits] or [SplitMode.ORACLE]
    pipeline, lams = pipeline_config(kwargs, splits[0], seed)
    dataset = read_datasets(dataset_paths)
    run = log_run(RunConfig(
        command="evaluate",
        pipeline=pipeline,
        params={"dataset": dataset.fingerprint, "experiment": experiment, "window": window,
                "splits": [s.value for s in splits], "lambdas": lams, "folds": folds, "seed": seed,
                "factor": factor},
        paths={"dataset": ",".join(dataset_paths), "out": out_dir},
    ))

    logger.info("%s experiment on %d examples from %d file(s)",
                experiment, len(dataset.examples), len(dataset_paths))
    if experiment == "sweep":
        results = query_point_sweep(dataset, pipeline, folds, seed)
        paths = write_sweep_reports(out_dir, results, run.fingerprint, gnuplot)
    elif experiment == "chained":
        rows = chained_restart_experiment(dataset, pipeline, folds, seed, factor)
        paths = write_chained_reports(out_dir, rows, run.fingerprint, gnuplot)
    else:
        windows = dataset.windows()
        if not windows:
            raise click.UsageError(f"{', '.join(dataset_paths)}: no examples")
        key = windows[0] if window is None else window
        if key not in windows:
            raise click.BadParameter(f"dataset windows are {list(windows)}", param_hint="--window")
        examples = dataset.at_window(key)
        reports, summary = [], []
        for split in splits:
            config = pipeline.model_copy(update={"split": split})
            if len(lams) > 1:
                best, grid = lambda_grid(examples, config, lams, folds, seed)
                reports.extend((f"cv_lambda_{lam:g}", report) for lam, report in zip(lams, grid))
                summary.append(f"{split.value}: best lambda {best:g}")
            else:
                reports.append(("cv", cross_validate(examples, config, folds, seed, DEFAULT_FACTORS)))
        summary.append(f"window {key}: excluded {dataset.excluded_at(key)} solved before close, "
                       f"{dataset.budget_exhausted} over budget")
        paths = write_cv_reports(out_dir, reports, run.fingerprint, gnuplot, summary)

    logger.info("wrote %d report files to %s", len(paths), out_dir)
    click.echo(f"reports {out_dir} files {len(paths)} fingerprint {run.fingerprint}")
