"""Root test configuration: logging isolation and shared scenario fixtures."""

import copy
import logging
import sys
import typing

import pytest
import structlog

import distributed_fdi.cli.scenario_loading
import distributed_fdi.contracts_shared_across_layers.scenario
import distributed_fdi.network_model

TINY_SCENARIO_DOCUMENT: dict[str, typing.Any] = {
    "name": "two scalar agents",
    "kind": "custom",
    "agents": [
        {
            "id": 1,
            "A": [[-1.0]],
            "B": [[1.0]],
            "B_f": [[1.0]],
            "B_d": [[0.1]],
            "C": [[1.0]],
            "D_f": [[0.5]],
            "D_d": [[0.1]],
        },
        {
            "id": 2,
            "A": [[-2.0]],
            "B": [[1.0]],
            "B_f": [[1.0]],
            "B_d": [[0.1]],
            "C": [[1.0]],
            "D_f": [[0.5]],
            "D_d": [[0.1]],
        },
    ],
    "topology": {"edges": [[1, 2]]},
    "signals": {
        "1": {
            "u": [{"kind": "step", "amplitude": 1.0}],
            "d": [{"kind": "noise", "power": 0.0001, "sample_time": 0.1}],
            "f": [{"kind": "pulse", "amplitude": 1.0, "start": 1.0, "stop": 1.5}],
        },
        "2": {
            "u": [{"kind": "step", "amplitude": 0.5}],
            "d": [{"kind": "noise", "power": 0.0001, "sample_time": 0.1}],
            "f": [{"kind": "zero"}],
        },
    },
    "initial_states": {"1": [0.0], "2": [0.0]},
    "horizon": 2.0,
    "step": 0.01,
    "synthesis": {"number_of_points_in_verification_grid": 200},
    "evaluation": {
        "window_length_in_seconds": 0.2,
        "number_of_monte_carlo_runs": 2,
        "safety_factor": 1.2,
        "settle_time_in_seconds": 0.5,
        "debounce_time_in_seconds": 0.05,
        "decision_windows": [[0.5, 0.9], [1.0, 1.6]],
    },
    "seed": 3,
}


def _drop_cached_structlog_bindings() -> None:
    """
    Undo ``cache_logger_on_first_use`` on the module-level loggers.

    A lazy proxy that was used while caching was on keeps its bound logger
    forever, which would route later events past ``capture_logs()``.
    """
    for name, module in list(sys.modules.items()):
        if not name.startswith("distributed_fdi"):
            continue
        proxy = getattr(module, "logger", None)
        if isinstance(proxy, structlog._config.BoundLoggerLazyProxy):
            vars(proxy).pop("bind", None)


@pytest.fixture(autouse=True)
def _reset_logging_configuration():
    """
    Reset structlog and the stdlib root logger around every test.

    The command-line tests call ``configure_logging()``, which installs a
    root handler bound to the ``sys.stdout`` of the moment and caches
    structlog loggers.  Both are restored so that ``capsys`` and
    ``structlog.testing.capture_logs()`` work in the tests that follow.
    """
    root_logger = logging.getLogger()
    saved_handlers = list(root_logger.handlers)
    saved_level = root_logger.level
    structlog.reset_defaults()
    _drop_cached_structlog_bindings()
    yield
    root_logger.handlers[:] = saved_handlers
    root_logger.setLevel(saved_level)
    structlog.reset_defaults()
    _drop_cached_structlog_bindings()


@pytest.fixture
def tiny_scenario_document() -> dict[str, typing.Any]:
    """A fresh, mutable copy of the two-agent scenario document."""
    return copy.deepcopy(TINY_SCENARIO_DOCUMENT)


@pytest.fixture
def tiny_scenario(
    tiny_scenario_document: dict[str, typing.Any],
) -> distributed_fdi.contracts_shared_across_layers.scenario.ScenarioConfig:
    return distributed_fdi.contracts_shared_across_layers.scenario.ScenarioConfig.model_validate(
        tiny_scenario_document
    )


@pytest.fixture(scope="session")
def four_agent_scenario() -> distributed_fdi.contracts_shared_across_layers.scenario.ScenarioConfig:
    """The packaged four-agent example with actuator faults."""
    return distributed_fdi.cli.scenario_loading.load_preset(1)


@pytest.fixture(scope="session")
def four_agent_models(four_agent_scenario) -> list[distributed_fdi.network_model.AgentModel]:
    return four_agent_scenario.agent_models()


@pytest.fixture(scope="session")
def four_agent_topology(four_agent_scenario) -> distributed_fdi.network_model.Topology:
    return four_agent_scenario.topology_model()
