import logging

import click

from controllers.errors import TooFewExamplesError
from controllers.model import SplitMode, train_class_models
from controllers.probe import probe_fingerprint
from routes.common import (
    RunConfig,
    log_run,
    pipeline_config,
    pipeline_options,
    probe_config,
    probe_options,
    read_datasets,
    solver_config,
    solver_options,
)

logger = logging.getLogger(__name__)


@click.command("train")
@click.option("--dataset", "dataset_paths", type=click.Path(exists=True, dir_okay=False), required=True,
              multiple=True, help="Dataset CSV written by 'probe' (repeatable; several are merged).")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True, help="Model JSON to write.")
@click.option("--window", type=int, default=None,
              help="Window key to train on (query point or window ordinal); default: the first.")
@click.option("--split", type=click.Choice([m.value for m in SplitMode]), default=SplitMode.ORACLE.value,
              show_default=True, help="single: one model; oracle/two_models: sat and unsat models.")
@click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True,
              help="Seed for subsampling above --max-train.")
@click.option("--weights/--no-weights", "show_weights", default=False, show_default=True,
              help="Also print each model's weights on the unstandardized features.")
@solver_options
@probe_options
@pipeline_options
def train_command(dataset_paths, out_path, window, split, seed, show_weights, **kwargs):
    """
    Train cost models on datasets produced with the same solver and probe settings.
    """
    solver = solver_config(kwargs)
    probe = probe_config(kwargs, solver)
    pipeline, lams = pipeline_config(kwargs, SplitMode(split), seed)
    if len(lams) > 1:
        raise click.BadParameter("train takes a single value; use 'evaluate' for a grid", param_hint="--lambda")
    log_run(RunConfig(command="train", solver=solver, probe=probe, pipeline=pipeline,
                      params={"window": window}, paths={"dataset": ",".join(dataset_paths), "out": out_path}))

    expected = probe_fingerprint(solver, probe)
    dataset = read_datasets(dataset_paths, expected_fingerprint=expected)
    windows = dataset.windows()
    if not windows:
        raise click.UsageError(f"{', '.join(dataset_paths)}: no examples")
    key = windows[0] if window is None else window
    if key not in windows:
        raise click.BadParameter(f"dataset windows are {list(windows)}", param_hint="--window")

    examples = dataset.at_window(key)
    logger.info("training %s models on %d examples at window %d", split, len(examples), key)
    bundle = train_class_models(examples, pipeline, fingerprint=expected, window=key)
    trained = [name for name in ("single", "sat", "unsat") if getattr(bundle, name) is not None]
    if not trained:
        raise TooFewExamplesError(f"not enough examples at window {key} to train any model")
    bundle.save(out_path)
    click.echo(f"model {out_path} window {key} trained {','.join(trained)} fingerprint {expected}")
    if show_weights:
        for name in trained:
            intercept, weights = getattr(bundle, name).raw_weights()
            click.echo(f"weights {name} intercept {intercept!r}")
            for feature, weight in weights.items():
                click.echo(f"weights {name} {feature} {weight!r}")
