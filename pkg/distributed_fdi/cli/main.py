"""
Command-line entry point: ``distfdi``.

Subcommands
-----------
- ``synthesize``: observer synthesis for every agent.
- ``simulate``: synthesis followed by the closed-loop simulation.
- ``evaluate``: threshold calibration, evaluation and isolation of the
  ``trajectory.csv`` already present in the output directory.
- ``run``: the whole pipeline.
- ``reproduce-paper``: the whole pipeline on a packaged preset.

This module is the only place where exceptions become process exit codes:
0 success, 1 scenario or configuration error, 2 synthesis infeasible or
stalled, 3 verification failure, 4 simulation divergence.
"""

import collections.abc
import pathlib
import typing

import pydantic
import structlog
import typer

import distributed_fdi.cli.scenario_loading
import distributed_fdi.configuration
import distributed_fdi.contracts_shared_across_layers.scenario
import distributed_fdi.exceptions
import distributed_fdi.logging_config
import distributed_fdi.services.fault_diagnosis_pipeline_service

logger = structlog.get_logger()

app = typer.Typer(
    name="distfdi",
    help="Distributed fault detection and isolation for networks of LTI agents.",
    no_args_is_help=True,
    add_completion=False,
)

ConfigOption = typing.Annotated[
    pathlib.Path,
    typer.Option("--config", help="Scenario JSON file.", dir_okay=False),
]
SeedOption = typing.Annotated[
    int | None,
    typer.Option("--seed", min=0, help="Master seed; overrides DISTFDI_SEED and the scenario seed."),
]
OutputOption = typing.Annotated[
    pathlib.Path,
    typer.Option("--out", help="Output directory.", file_okay=False),
]
StepOption = typing.Annotated[
    float | None,
    typer.Option("--h", help="Integration step in seconds; overrides the scenario."),
]
HorizonOption = typing.Annotated[
    float | None,
    typer.Option("--horizon", help="Simulated time in seconds; overrides the scenario."),
]


def _load_configuration() -> distributed_fdi.configuration.DistributedFdiConfiguration:
    try:
        return distributed_fdi.configuration.DistributedFdiConfiguration()
    except pydantic.ValidationError as error:
        raise distributed_fdi.exceptions.ScenarioValidationError(f"Invalid DISTFDI_ environment: {error}") from error


def _execute(
    command: collections.abc.Callable[
        [distributed_fdi.configuration.DistributedFdiConfiguration],
        int,
    ],
) -> None:
    """Run ``command`` and leave the process with its exit code."""
    try:
        configuration = _load_configuration()
        distributed_fdi.logging_config.configure_logging(configuration.log_level)
        exit_code = command(configuration)
    except distributed_fdi.exceptions.DistributedFdiError as error:
        logger.error(
            "command_failed",
            error_type=type(error).__name__,
            detail=error.detail,
            exit_code=error.exit_code,
        )
        typer.echo(f"error: {error.detail}", err=True)
        raise typer.Exit(code=error.exit_code) from error
    raise typer.Exit(code=exit_code)


def _prepare_scenario(
    scenario: distributed_fdi.contracts_shared_across_layers.scenario.ScenarioConfig,
    configuration: distributed_fdi.configuration.DistributedFdiConfiguration,
    seed: int | None,
    step: float | None,
    horizon: float | None,
) -> distributed_fdi.contracts_shared_across_layers.scenario.ScenarioConfig:
    resolved_seed = distributed_fdi.cli.scenario_loading.resolve_seed(seed, configuration.seed, scenario.seed)
    return distributed_fdi.cli.scenario_loading.apply_overrides(scenario, seed=resolved_seed, step=step, horizon=horizon)


def _run_stages(
    config: pathlib.Path,
    seed: int | None,
    out: pathlib.Path,
    step: float | None,
    horizon: float | None,
    last_stage: distributed_fdi.services.fault_diagnosis_pipeline_service.LastStage,
) -> None:
    def command(configuration: distributed_fdi.configuration.DistributedFdiConfiguration) -> int:
        scenario = _prepare_scenario(
            distributed_fdi.cli.scenario_loading.parse_scenario(config), configuration, seed, step, horizon
        )
        service = distributed_fdi.services.fault_diagnosis_pipeline_service.FaultDiagnosisPipelineService(
            configuration
        )
        return service.run(scenario, out, last_stage=last_stage)

    _execute(command)


@app.command()
def synthesize(
    config: ConfigOption,
    out: OutputOption = pathlib.Path("out"),
    seed: SeedOption = None,
    h: StepOption = None,
    horizon: HorizonOption = None,
) -> None:
    """Synthesize and verify every agent's observer; writes synthesis_report.json."""
    _run_stages(config, seed, out, h, horizon, last_stage="synthesis")


@app.command()
def simulate(
    config: ConfigOption,
    out: OutputOption = pathlib.Path("out"),
    seed: SeedOption = None,
    h: StepOption = None,
    horizon: HorizonOption = None,
) -> None:
    """Synthesize, then simulate the network; writes trajectory.csv."""
    _run_stages(config, seed, out, h, horizon, last_stage="simulation")


@app.command()
def evaluate(
    config: ConfigOption,
    out: OutputOption = pathlib.Path("out"),
    seed: SeedOption = None,
    h: StepOption = None,
    horizon: HorizonOption = None,
) -> None:
    """Evaluate and isolate the trajectory.csv of an earlier run in --out."""

    def command(configuration: distributed_fdi.configuration.DistributedFdiConfiguration) -> int:
        scenario = _prepare_scenario(
            distributed_fdi.cli.scenario_loading.parse_scenario(config), configuration, seed, h, horizon
        )
        service = distributed_fdi.services.fault_diagnosis_pipeline_service.FaultDiagnosisPipelineService(
            configuration
        )
        return service.evaluate_saved_run(scenario, out)

    _execute(command)


@app.command()
def run(
    config: ConfigOption,
    out: OutputOption = pathlib.Path("out"),
    seed: SeedOption = None,
    h: StepOption = None,
    horizon: HorizonOption = None,
) -> None:
    """Full pipeline: synthesize, simulate, calibrate, evaluate and isolate."""
    _run_stages(config, seed, out, h, horizon, last_stage="evaluation")


@app.command("reproduce-paper")
def reproduce_paper(
    scenario: typing.Annotated[
        int,
        typer.Option("--scenario", min=1, max=2, help="1: actuator faults, 2: sensor faults."),
    ] = 1,
    out: OutputOption = pathlib.Path("out"),
    seed: SeedOption = None,
    h: StepOption = None,
    horizon: HorizonOption = None,
) -> None:
    """Full pipeline on the packaged four-agent example."""

    def command(configuration: distributed_fdi.configuration.DistributedFdiConfiguration) -> int:
        prepared = _prepare_scenario(
            distributed_fdi.cli.scenario_loading.load_preset(scenario), configuration, seed, h, horizon
        )
        service = distributed_fdi.services.fault_diagnosis_pipeline_service.FaultDiagnosisPipelineService(
            configuration
        )
        return service.run(prepared, out)

    _execute(command)


def main() -> None:
    app()


if __name__ == "__main__":
    main()
