"""Tests for distributed_fdi/exceptions.py — custom exception classes and their exit codes."""

import pytest

import distributed_fdi.exceptions

EXCEPTION_CLASSES_AND_EXIT_CODES = [
    (distributed_fdi.exceptions.NotHurwitzError, 1),
    (distributed_fdi.exceptions.NotStrictlyProperError, 1),
    (distributed_fdi.exceptions.NotDetectableError, 2),
    (distributed_fdi.exceptions.SingularNoiseError, 2),
    (distributed_fdi.exceptions.NoStabilizingSolutionError, 2),
    (distributed_fdi.exceptions.InvalidFrequencyGridError, 1),
    (distributed_fdi.exceptions.SelfLoopError, 1),
    (distributed_fdi.exceptions.AgentIdentifierOutOfRangeError, 1),
    (distributed_fdi.exceptions.IsolatedAgentError, 1),
    (distributed_fdi.exceptions.DimensionMismatchError, 1),
    (distributed_fdi.exceptions.UnknownAgentError, 1),
    (distributed_fdi.exceptions.InfeasibleError, 2),
    (distributed_fdi.exceptions.SolverStalledError, 2),
    (distributed_fdi.exceptions.UnstableResultError, 3),
    (distributed_fdi.exceptions.VerificationFailedError, 3),
    (distributed_fdi.exceptions.NonFiniteStateError, 4),
    (distributed_fdi.exceptions.ScenarioParseError, 1),
    (distributed_fdi.exceptions.ScenarioValidationError, 1),
]


class TestDistributedFdiErrorBase:
    def test_all_exceptions_inherit_from_the_base(self):
        for exception_class, _ in EXCEPTION_CLASSES_AND_EXIT_CODES:
            assert issubclass(exception_class, distributed_fdi.exceptions.DistributedFdiError)

    def test_default_message(self):
        exception = distributed_fdi.exceptions.DistributedFdiError()
        assert exception.detail == "A distributed fault detection and isolation error occurred."
        assert str(exception) == exception.detail

    def test_custom_message(self):
        exception = distributed_fdi.exceptions.InfeasibleError(detail="Agent 3 has no certificate.")
        assert exception.detail == "Agent 3 has no certificate."
        assert str(exception) == "Agent 3 has no certificate."


class TestExitCodes:
    @pytest.mark.parametrize(("exception_class", "exit_code"), EXCEPTION_CLASSES_AND_EXIT_CODES)
    def test_exit_code(self, exception_class, exit_code):
        assert exception_class.exit_code == exit_code

    def test_every_class_has_its_own_default_detail(self):
        details = [exception_class().detail for exception_class, _ in EXCEPTION_CLASSES_AND_EXIT_CODES]
        assert len(set(details)) == len(details)


class TestAgentIdentifierOutOfRangeError:
    def test_default_message(self):
        assert distributed_fdi.exceptions.AgentIdentifierOutOfRangeError().detail == "agent id out of range"
