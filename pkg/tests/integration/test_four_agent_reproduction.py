"""
Full reproduction of both fault scenarios on the four-agent example.

Slow: each scenario calibrates thresholds over the preset's Monte Carlo runs.
Select it with ``pytest -m full_reproduction``.
"""

import dataclasses
import json

import pytest
import typer.testing

import distributed_fdi.cli.main
import distributed_fdi.integrations.output_files

output_files = distributed_fdi.integrations.output_files

pytestmark = pytest.mark.full_reproduction

QUIET_WINDOWS = [(5.0, 9.0), (45.0, 55.0)]
FAULT_WINDOWS_WITH_CULPRITS = [((10.0, 21.0), 1), ((30.0, 41.0), 4), ((60.0, 71.0), 3)]

# Fault at agent 4 only: agent 4's single block and agent 1's block for 4.
PATTERNS_WHILE_AGENT_4_IS_FAULTY = {"1": "00,00,11", "2": "00,00", "3": "00,00", "4": "11"}


@dataclasses.dataclass(frozen=True)
class Reproduction:
    verdicts_by_window: dict[tuple[float, float], list[dict]]
    thresholds: dict[str, float]


def _reproduce(tmp_path_factory, scenario: int) -> Reproduction:
    output_directory = tmp_path_factory.mktemp(f"scenario_{scenario}")
    result = typer.testing.CliRunner().invoke(
        distributed_fdi.cli.main.app,
        ["reproduce-paper", "--scenario", str(scenario), "--out", str(output_directory)],
    )
    assert result.exit_code == 0, result.output

    verdicts = json.loads((output_directory / output_files.NAME_OF_VERDICTS).read_text(encoding="utf-8"))
    grouped: dict[tuple[float, float], list[dict]] = {}
    for record in verdicts["verdicts"]:
        grouped.setdefault(tuple(record["window"]), []).append(record)
    thresholds = json.loads((output_directory / output_files.NAME_OF_THRESHOLDS).read_text(encoding="utf-8"))
    return Reproduction(verdicts_by_window=grouped, thresholds=thresholds["per_agent"])


@pytest.fixture(scope="module")
def actuator_faults(tmp_path_factory):
    return _reproduce(tmp_path_factory, 1)


@pytest.fixture(scope="module")
def sensor_faults(tmp_path_factory):
    return _reproduce(tmp_path_factory, 2)


class TestActuatorFaultReproduction:
    @pytest.mark.parametrize("window", QUIET_WINDOWS)
    def test_quiet_windows_raise_nothing(self, actuator_faults, window):
        assert {record["status"] for record in actuator_faults.verdicts_by_window[window]} == {"no_fault"}

    @pytest.mark.parametrize(("window", "culprit"), FAULT_WINDOWS_WITH_CULPRITS)
    def test_faulty_agent_is_isolated(self, actuator_faults, window, culprit):
        records = actuator_faults.verdicts_by_window[window]

        assert any(record["status"] == "agent_faulty" and record["culprit"] == culprit for record in records)
        assert all(record["culprit"] in (None, culprit) for record in records)

    def test_fault_patterns_while_agent_4_is_faulty(self, actuator_faults):
        for record in actuator_faults.verdicts_by_window[(30.0, 41.0)]:
            assert record["evidence"] == PATTERNS_WHILE_AGENT_4_IS_FAULTY

    def test_thresholds_are_of_order_one_hundredth(self, actuator_faults):
        assert sorted(actuator_faults.thresholds) == ["1", "2", "3", "4"]
        for value in actuator_faults.thresholds.values():
            assert 2e-3 <= value <= 5e-1


class TestSensorFaultReproduction:
    @pytest.mark.parametrize("window", QUIET_WINDOWS)
    def test_quiet_windows_raise_nothing(self, sensor_faults, window):
        assert {record["status"] for record in sensor_faults.verdicts_by_window[window]} == {"no_fault"}

    @pytest.mark.parametrize(("window", "culprit"), FAULT_WINDOWS_WITH_CULPRITS)
    def test_faulty_agent_is_isolated(self, sensor_faults, window, culprit):
        records = sensor_faults.verdicts_by_window[window]

        assert any(record["status"] == "agent_faulty" and record["culprit"] == culprit for record in records)
        assert all(record["culprit"] in (None, culprit) for record in records)

    def test_fault_patterns_while_agent_4_is_faulty(self, sensor_faults):
        for record in sensor_faults.verdicts_by_window[(30.0, 41.0)]:
            assert record["evidence"] == PATTERNS_WHILE_AGENT_4_IS_FAULTY

    def test_thresholds_are_of_order_one_thousandth(self, sensor_faults):
        assert sorted(sensor_faults.thresholds) == ["1", "2", "3", "4"]
        for value in sensor_faults.thresholds.values():
            assert 2.5e-4 <= value <= 5e-2
