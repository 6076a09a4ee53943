import logging
import sys

import click
import coloredlogs
from pydantic import ValidationError

from controllers.errors import LmpError
from controllers.settings import ENV_PREFIX, LOG_LEVEL, load_config_file
from routes.evaluate import evaluate_command
from routes.gen import gen_command
from routes.portfolio import portfolio_command
from routes.predict import predict_command
from routes.probe import probe_command
from routes.solve import solve_command
from routes.train import train_command

logger = logging.getLogger("lmp")

# ============== EXIT STATUSES ==============
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INTERNAL = 3


def _report(kind: str, message: str) -> None:
    first_line = " ".join(str(message).split())
    click.echo(f"error: {kind}: {first_line}", err=True)


def _validation_message(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        where = ".".join(str(x) for x in item.get("loc", ())) or error.title
        parts.append(f"{where}: {item.get('msg')}")
    return "; ".join(parts)


class LmpGroup(click.Group):
    """Maps every failure to one stderr line and a documented exit status."""

    def main(self, args=None, prog_name=None, complete_var=None, standalone_mode=True, **extra):
        try:
            rv = super().main(args, prog_name, complete_var, standalone_mode=False, **extra)
            code = rv if isinstance(rv, int) else EXIT_OK
        except click.UsageError as e:
            _report("usage", e.format_message())
            code = EXIT_USAGE
        except ValidationError as e:
            _report("usage", _validation_message(e))
            code = EXIT_USAGE
        except click.Abort:
            _report("usage", "aborted")
            code = EXIT_USAGE
        except click.ClickException as e:
            _report("usage", e.format_message())
            code = EXIT_USAGE
        except LmpError as e:
            _report(e.kind, str(e))
            code = e.exit_code
        except OSError as e:
            _report("io", str(e))
            code = EXIT_INTERNAL
        except Exception as e:
            logger.debug("unhandled error", exc_info=True)
            _report("internal", f"{type(e).__name__}: {e}")
            code = EXIT_INTERNAL
        if standalone_mode:
            sys.exit(code)
        return code


def _load_config(ctx, param, value):
    if value:
        load_config_file(value)
    return value


@click.group(cls=LmpGroup, context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--config", type=click.Path(exists=True, dir_okay=False), callback=_load_config,
              is_eager=True, expose_value=False,
              help="dotenv-style file of LMP_* settings (values already in the environment win).")
@click.option("--log-level", default=LOG_LEVEL, envvar="LMP_LOG_LEVEL", show_default=True,
              type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
              help="Logging verbosity (stderr).")
def cli(log_level):
    """
    Online cost prediction for a CDCL SAT solver: generate ensembles, solve,
    probe, train, predict, evaluate and race portfolios.

    Every option can also be set as LMP_<COMMAND>_<OPTION> in the environment.
    """
    coloredlogs.install(level=log_level.upper(), stream=sys.stderr,
                        fmt="%(asctime)s %(name)s %(levelname)s %(message)s")


cli.add_command(gen_command)
cli.add_command(solve_command)
cli.add_command(probe_command)
cli.add_command(train_command)
cli.add_command(predict_command)
cli.add_command(evaluate_command)
cli.add_command(portfolio_command)


def run():
    cli(auto_envvar_prefix=ENV_PREFIX)


if __name__ == "__main__":
    run()
