"""
Scenario ingestion for the command-line interface.

Scenario files are decoded with ``json`` and validated by the pydantic schema
in ``contracts_shared_across_layers.scenario``.  Decoding errors become
``ScenarioParseError`` with the line and column of the offending character;
schema violations become ``ScenarioValidationError`` naming the field path
and the violated rule.  Packaged presets are read through
``importlib.resources`` so they work from an installed wheel.
"""

import importlib.resources
import json
import pathlib
import typing

import pydantic

import distributed_fdi.contracts_shared_across_layers.scenario
import distributed_fdi.exceptions

PRESET_FILE_NAMES: dict[int, str] = {
    1: "four_agents_actuator_faults.json",
    2: "four_agents_sensor_faults.json",
}

ScenarioConfig = distributed_fdi.contracts_shared_across_layers.scenario.ScenarioConfig


def _describe_validation_error(error: pydantic.ValidationError) -> str:
    descriptions = []
    for detail in error.errors():
        location = ".".join(str(part) for part in detail["loc"]) or "scenario"
        message = str(detail["msg"]).removeprefix("Value error, ")
        descriptions.append(f"{location}: {message}")
    return "; ".join(descriptions)


def parse_scenario_text(text: str, source: str = "<scenario>") -> ScenarioConfig:
    """
    Decode and validate a scenario document.

    Raises:
        ScenarioParseError: the text is not well-formed JSON.
        ScenarioValidationError: the document violates the schema.
    """
    try:
        document: typing.Any = json.loads(text)
    except json.JSONDecodeError as error:
        raise distributed_fdi.exceptions.ScenarioParseError(
            f"{source}: line {error.lineno}, column {error.colno}: {error.msg}"
        ) from error
    try:
        return ScenarioConfig.model_validate(document)
    except pydantic.ValidationError as error:
        raise distributed_fdi.exceptions.ScenarioValidationError(
            f"{source}: {_describe_validation_error(error)}"
        ) from error


def parse_scenario(path: pathlib.Path) -> ScenarioConfig:
    """
    Read the scenario file at ``path``.

    Raises:
        ScenarioParseError: the file is missing, unreadable or not JSON.
        ScenarioValidationError: the document violates the schema.
    """
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as error:
        raise distributed_fdi.exceptions.ScenarioParseError(f"{path}: {error.strerror or error}") from error
    return parse_scenario_text(text, source=str(path))


def load_preset(number: int) -> ScenarioConfig:
    """Packaged scenario preset ``number``."""
    if number not in PRESET_FILE_NAMES:
        raise distributed_fdi.exceptions.ScenarioValidationError(
            f"Unknown preset {number}; choose one of {sorted(PRESET_FILE_NAMES)}."
        )
    resource = importlib.resources.files("distributed_fdi.presets").joinpath(PRESET_FILE_NAMES[number])
    return parse_scenario_text(resource.read_text(encoding="utf-8"), source=PRESET_FILE_NAMES[number])


def resolve_seed(flag_value: int | None, environment_value: int | None, scenario_value: int) -> int:
    """``--seed`` wins over ``DISTFDI_SEED``, which wins over the scenario's own seed."""
    if flag_value is not None:
        return flag_value
    if environment_value is not None:
        return environment_value
    return scenario_value


def apply_overrides(
    config: ScenarioConfig,
    seed: int | None = None,
    step: float | None = None,
    horizon: float | None = None,
) -> ScenarioConfig:
    """Command-line overrides, revalidated against the schema."""
    try:
        return config.with_overrides(seed=seed, step=step, horizon=horizon)
    except pydantic.ValidationError as error:
        raise distributed_fdi.exceptions.ScenarioValidationError(_describe_validation_error(error)) from error
