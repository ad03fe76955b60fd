import asyncio
import logging
from pathlib import Path
import sys
from typing import Any, Optional, Sequence

import click

from jexplore import __version__
from jexplore.analysis import DEFAULT_GAP_THRESHOLD, analyze
from jexplore.client import ClientSettings, create_executor, serve
from jexplore.exceptions import JExploreException
from jexplore.host import ExplorationPlan, SearchPlan, explore, explore_in_process
from jexplore.model import CONFIG_FIELDS, MeterSet, WorkloadSpec
from jexplore.search import available_algorithms
from jexplore.space import ConfigSpace, build_orin_space, load_space, random_sample

_LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


def _parse_meters(ctx, param, value: str) -> list[str]:
    names = [name.strip() for name in value.split(",") if name.strip()]
    try:
        MeterSet.from_names(names)
    except ValueError as e:
        raise click.BadParameter(str(e)) from None
    return names


def _load_space(path: Optional[Path]) -> ConfigSpace:
    return load_space(path) if path is not None else build_orin_space()


def _check_modes(deterministic: bool, realtime: bool) -> None:
    if deterministic and realtime:
        raise click.UsageError("--deterministic and --realtime are mutually exclusive")


def _algorithm_options(algo: str, population_size: Optional[int]) -> dict[str, Any]:
    if population_size is None:
        return {}
    if algo != "evolutionary":
        raise click.UsageError("--population-size requires --algo evolutionary")
    return {"population_size": population_size}


meters_option = click.option(
    "--meters",
    default="time,power,memory",
    show_default=True,
    callback=_parse_meters,
    help="comma separated list of meters",
)
power_interval_option = click.option(
    "--power-interval-ms",
    type=click.IntRange(min=1),
    default=100,
    show_default=True,
    help="sampling interval of the power meter",
)
algo_option = click.option(
    "--algo",
    type=click.Choice(available_algorithms()),
    default="random",
    show_default=True,
    help="search algorithm",
)
population_option = click.option(
    "--population-size",
    type=click.IntRange(min=4),
    default=None,
    help="population size of the evolutionary search (even, default 20)",
)
model_option = click.option(
    "--model",
    "model_file",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="JSON file overriding simulator constants and presets",
)


@click.group()
@click.option(
    "--log-level",
    type=click.Choice(_LOG_LEVELS, case_sensitive=False),
    default="WARNING",
    show_default=True,
    help="level of the diagnostics written to standard error",
)
@click.version_option(__version__, prog_name="jexplore")
def cli(log_level):
    """Design space exploration of Nvidia Jetson boards."""
    logging.basicConfig(
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    logging.getLogger().setLevel(log_level.upper())


@cli.group()
def space():
    """Inspect the configuration space."""


@space.command()
@click.option(
    "--space",
    "space_file",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="space definition file (default: Jetson Orin)",
)
def info(space_file):
    """Print the parameters and the number of configurations."""
    config_space = _load_space(space_file)
    click.echo(f"{'parameter':<14} {'kind':<10} {'count':>5} {'min':>9} {'max':>9}")
    for param in config_space.params:
        click.echo(
            f"{param.name:<14} {param.kind.value:<10} {len(param.values):>5} "
            f"{param.values[0]:>9} {param.values[-1]:>9}"
        )
    click.echo(f"cardinality: {config_space.cardinality()}")


@space.command()
@click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True)
@click.option("--count", type=click.IntRange(min=0), default=10, show_default=True)
@click.option(
    "--space",
    "space_file",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="space definition file (default: Jetson Orin)",
)
def sample(seed, count, space_file):
    """Print uniformly drawn configurations as CSV."""
    config_space = _load_space(space_file)
    click.echo(",".join(CONFIG_FIELDS))
    for config in random_sample(config_space, seed, count):
        click.echo(",".join(str(getattr(config, name)) for name in CONFIG_FIELDS))


@cli.command()
@click.option(
    "--listen", default="0.0.0.0:5555", show_default=True, help="HOST:PORT to bind"
)
@click.option("--id", "client_id", required=True, help="client id sent to the host")
@click.option(
    "--device",
    type=click.Choice(["sim", "jetson-orin"]),
    default="sim",
    show_default=True,
)
@click.option("--preset", default="llama", show_default=True, help="default workload")
@meters_option
@power_interval_option
@click.option(
    "--timeout-s",
    type=click.FloatRange(min=0, min_open=True),
    default=3600.0,
    show_default=True,
    help="time limit of a single run",
)
@model_option
@click.option("--deterministic", is_flag=True, help="disable simulator noise")
@click.option("--realtime", is_flag=True, help="sleep for the simulated latency")
@click.option("--noise-seed", type=int, default=0, show_default=True)
@click.option("--once", is_flag=True, help="exit after the first host said goodbye")
def client(
    listen,
    client_id,
    device,
    preset,
    meters,
    power_interval_ms,
    timeout_s,
    model_file,
    deterministic,
    realtime,
    noise_seed,
    once,
):
    """Run a client daemon on a board."""
    _check_modes(deterministic, realtime)
    settings = ClientSettings(
        listen=listen,
        client_id=client_id,
        device=device,
        preset=preset,
        meters=MeterSet.from_names(meters, power_interval_ms),
        timeout_s=timeout_s,
        model_file=model_file,
        deterministic=deterministic,
        realtime=realtime,
        noise_seed=noise_seed,
    )

    summary = asyncio.run(serve(settings, once=once))
    click.echo(
        f"session finished: {summary.completed} completed, {summary.failed} failed",
        err=True,
    )


@cli.command()
@click.option(
    "--client",
    "clients",
    required=True,
    multiple=True,
    help="HOST:PORT of a client, may be given multiple times",
)
@algo_option
@click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True)
@click.option("--budget", type=click.IntRange(min=1), required=True)
@click.option("--batch", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--workload", default="llama", show_default=True)
@click.option(
    "--param",
    "params",
    multiple=True,
    help="workload parameter NAME=VALUE, may be given multiple times",
)
@meters_option
@click.option(
    "--out",
    type=click.Path(dir_okay=False, writable=True, path_type=Path),
    required=True,
    help="CSV file to write",
)
@click.option("--deterministic", is_flag=True, help="use logical timestamps")
@population_option
def host(
    clients,
    algo,
    seed,
    budget,
    batch,
    workload,
    params,
    meters,
    out,
    deterministic,
    population_size,
):
    """Explore with remote clients."""
    workload_params = {}
    for param in params:
        name, sep, value = param.partition("=")
        if not sep or not name:
            raise click.BadParameter(f"expected NAME=VALUE, got {param}")
        workload_params[name] = value

    plan = ExplorationPlan(
        clients=list(clients),
        algorithm=algo,
        seed=seed,
        budget=budget,
        batch=batch,
        workload=WorkloadSpec(name=workload, params=workload_params),
        meters=MeterSet.from_names(meters),
        output=out,
        deterministic=deterministic,
        algorithm_options=_algorithm_options(algo, population_size),
    )
    records = asyncio.run(explore(plan))
    click.echo(f"recorded {len(records)} samples to {out}", err=True)


@cli.command()
@click.option("--preset", default="llama", show_default=True)
@click.option("--samples", type=click.IntRange(min=1), required=True)
@click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True)
@click.option(
    "--out",
    type=click.Path(dir_okay=False, writable=True, path_type=Path),
    required=True,
    help="CSV file to write",
)
@algo_option
@click.option("--batch", type=click.IntRange(min=1), default=1, show_default=True)
@meters_option
@power_interval_option
@model_option
@click.option("--deterministic", is_flag=True, help="no noise, logical timestamps")
@click.option("--realtime", is_flag=True, help="sleep for the simulated latency")
@click.option("--noise-seed", type=int, default=0, show_default=True)
@population_option
def sim(
    preset,
    samples,
    seed,
    out,
    algo,
    batch,
    meters,
    power_interval_ms,
    model_file,
    deterministic,
    realtime,
    noise_seed,
    population_size,
):
    """Explore in-process with a simulated client."""
    _check_modes(deterministic, realtime)
    meter_set = MeterSet.from_names(meters, power_interval_ms)
    settings = ClientSettings(
        client_id="sim-0",
        preset=preset,
        meters=meter_set,
        model_file=model_file,
        deterministic=deterministic,
        realtime=realtime,
        noise_seed=noise_seed,
    )
    plan = SearchPlan(
        algorithm=algo,
        seed=seed,
        budget=samples,
        batch=batch,
        workload=WorkloadSpec(name=preset),
        meters=meter_set,
        output=out,
        deterministic=deterministic,
        algorithm_options=_algorithm_options(algo, population_size),
    )
    records = asyncio.run(
        explore_in_process(plan, create_executor(settings), settings.client_id)
    )
    click.echo(f"recorded {len(records)} samples to {out}", err=True)


@cli.command(name="analyze")
@click.option(
    "--in",
    "in_file",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    required=True,
    help="CSV file to analyze",
)
@click.option(
    "--report",
    type=click.Path(dir_okay=False, writable=True, path_type=Path),
    default=None,
    help="JSON report file (default: standard output)",
)
@click.option(
    "--svg",
    type=click.Path(dir_okay=False, writable=True, path_type=Path),
    default=None,
    help="write a time/power scatter plot",
)
@click.option(
    "--gap-threshold",
    type=click.FloatRange(min=0, min_open=True),
    default=DEFAULT_GAP_THRESHOLD,
    show_default=True,
    help="minimum ratio of the cut-off gap to the median gap",
)
def analyze_command(in_file, report, svg, gap_threshold):
    """Analyze a result file."""
    result = analyze(in_file, gap_threshold=gap_threshold, svg_path=svg)
    text = result.to_json()
    if report is None:
        click.echo(text)
    else:
        report.write_text(text + "\n", encoding="utf-8")


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run the command line and return the exit code.

    0 is success, 1 a usage error and 2 a runtime error.
    """
    try:
        result = cli.main(
            args=list(argv) if argv is not None else None,
            prog_name="jexplore",
            auto_envvar_prefix="JEXPLORE",
            standalone_mode=False,
        )
    except click.UsageError as e:
        e.show()
        return 1
    except click.Abort:
        click.echo("Aborted!", err=True)
        return 1
    except click.ClickException as e:
        e.show()
        return 2
    except (JExploreException, OSError, ValueError) as e:
        click.echo(f"Error: {e}", err=True)
        return 2
    return result if isinstance(result, int) else 0


# entry point for pycharm; should not be used for commandline usage
if __name__ == "__main__":
    sys.exit(main())
