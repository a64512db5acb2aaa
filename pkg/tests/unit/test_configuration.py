"""Tests for configuration.py — DistributedFdiConfiguration."""

import pydantic
import pytest

import distributed_fdi.configuration

# ── Every environment variable the configuration model reads.  Cleared in
# tests that assert defaults. ──

ALL_CONFIGURATION_ENVIRONMENT_VARIABLE_NAMES: list[str] = [
    "DISTFDI_SEED",
    "DISTFDI_LOG_LEVEL",
    "DISTFDI_MAXIMUM_NUMBER_OF_WORKER_THREADS",
    "DISTFDI_NAME_OF_SEMIDEFINITE_PROGRAM_SOLVER",
    "DISTFDI_NAME_OF_FALLBACK_SEMIDEFINITE_PROGRAM_SOLVER",
    "DISTFDI_NUMBER_OF_SIGNIFICANT_DIGITS_IN_CSV",
    "DISTFDI_NAME_OF_METRICS_FILE",
]


def _clear_all_configuration_environment_variables(monkeypatch: pytest.MonkeyPatch, tmp_path) -> None:
    """Remove every DISTFDI_* variable and leave any ``.env`` file behind."""
    for variable_name in ALL_CONFIGURATION_ENVIRONMENT_VARIABLE_NAMES:
        monkeypatch.delenv(variable_name, raising=False)
    monkeypatch.chdir(tmp_path)


class TestDistributedFdiConfigurationDefaults:
    def test_default_values(self, monkeypatch: pytest.MonkeyPatch, tmp_path) -> None:
        _clear_all_configuration_environment_variables(monkeypatch, tmp_path)
        configuration = distributed_fdi.configuration.DistributedFdiConfiguration()

        # ── Run settings ──
        assert configuration.seed is None
        assert configuration.log_level == "INFO"

        # ── Execution settings ──
        assert configuration.maximum_number_of_worker_threads == 4
        assert configuration.name_of_semidefinite_program_solver == "CLARABEL"
        assert configuration.name_of_fallback_semidefinite_program_solver == "SCS"

        # ── Output settings ──
        assert configuration.number_of_significant_digits_in_csv == 17
        assert configuration.name_of_metrics_file == "metrics.prom"


class TestDistributedFdiConfigurationFromEnvironment:
    def test_environment_overrides(self, monkeypatch: pytest.MonkeyPatch, tmp_path) -> None:
        _clear_all_configuration_environment_variables(monkeypatch, tmp_path)
        monkeypatch.setenv("DISTFDI_SEED", "123")
        monkeypatch.setenv("DISTFDI_LOG_LEVEL", "DEBUG")
        monkeypatch.setenv("DISTFDI_MAXIMUM_NUMBER_OF_WORKER_THREADS", "1")
        monkeypatch.setenv("DISTFDI_NAME_OF_SEMIDEFINITE_PROGRAM_SOLVER", "SCS")

        configuration = distributed_fdi.configuration.DistributedFdiConfiguration()

        assert configuration.seed == 123
        assert configuration.log_level == "DEBUG"
        assert configuration.maximum_number_of_worker_threads == 1
        assert configuration.name_of_semidefinite_program_solver == "SCS"

    def test_dotenv_file_is_read(self, monkeypatch: pytest.MonkeyPatch, tmp_path) -> None:
        _clear_all_configuration_environment_variables(monkeypatch, tmp_path)
        (tmp_path / ".env").write_text("DISTFDI_SEED=9\n", encoding="utf-8")

        assert distributed_fdi.configuration.DistributedFdiConfiguration().seed == 9


class TestDistributedFdiConfigurationValidation:
    def test_negative_seed_is_rejected(self, monkeypatch: pytest.MonkeyPatch, tmp_path) -> None:
        _clear_all_configuration_environment_variables(monkeypatch, tmp_path)
        monkeypatch.setenv("DISTFDI_SEED", "-1")

        with pytest.raises(pydantic.ValidationError):
            distributed_fdi.configuration.DistributedFdiConfiguration()

    def test_zero_worker_threads_is_rejected(self, monkeypatch: pytest.MonkeyPatch, tmp_path) -> None:
        _clear_all_configuration_environment_variables(monkeypatch, tmp_path)
        monkeypatch.setenv("DISTFDI_MAXIMUM_NUMBER_OF_WORKER_THREADS", "0")

        with pytest.raises(pydantic.ValidationError):
            distributed_fdi.configuration.DistributedFdiConfiguration()

    @pytest.mark.parametrize("digits", ["0", "18"])
    def test_csv_precision_is_bounded(self, monkeypatch: pytest.MonkeyPatch, tmp_path, digits) -> None:
        _clear_all_configuration_environment_variables(monkeypatch, tmp_path)
        monkeypatch.setenv("DISTFDI_NUMBER_OF_SIGNIFICANT_DIGITS_IN_CSV", digits)

        with pytest.raises(pydantic.ValidationError):
            distributed_fdi.configuration.DistributedFdiConfiguration()
