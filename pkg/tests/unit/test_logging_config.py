"""Tests for distributed_fdi/logging_config.py."""

import json
import logging

import structlog

import distributed_fdi.logging_config


class TestConfigureLogging:
    def test_sets_log_level(self):
        distributed_fdi.logging_config.configure_logging(log_level="DEBUG")
        assert logging.getLogger().level == logging.DEBUG

    def test_unknown_level_falls_back_to_info(self):
        distributed_fdi.logging_config.configure_logging(log_level="CHATTY")
        assert logging.getLogger().level == logging.INFO

    def test_reconfiguring_replaces_the_handler(self):
        distributed_fdi.logging_config.configure_logging(log_level="INFO")
        distributed_fdi.logging_config.configure_logging(log_level="INFO")

        root = logging.getLogger()
        assert len(root.handlers) == 1
        assert isinstance(root.handlers[0].formatter, structlog.stdlib.ProcessorFormatter)

    def test_native_structlog_produces_valid_json(self, capsys):
        distributed_fdi.logging_config.configure_logging(log_level="INFO")
        structlog.get_logger("test").info("test_event", agent_id=3)

        parsed = json.loads(capsys.readouterr().out.strip())

        assert parsed["event"] == "test_event"
        assert parsed["agent_id"] == 3

    def test_output_contains_mandatory_fields(self, capsys):
        distributed_fdi.logging_config.configure_logging(log_level="INFO")
        structlog.get_logger("test").warning("test_event")

        parsed = json.loads(capsys.readouterr().out.strip())

        assert parsed["level"] == "WARNING"
        assert parsed["service_name"] == "distributed-fdi"
        assert "T" in parsed["timestamp"]
        assert parsed["timestamp"].endswith("Z")

    def test_standard_library_loggers_share_the_format(self, capsys):
        distributed_fdi.logging_config.configure_logging(log_level="INFO")
        logging.getLogger("cvxpy").warning("solver message")

        parsed = json.loads(capsys.readouterr().out.strip())

        assert parsed["event"] == "solver message"
        assert parsed["service_name"] == "distributed-fdi"

    def test_messages_below_the_level_are_dropped(self, capsys):
        distributed_fdi.logging_config.configure_logging(log_level="WARNING")
        structlog.get_logger("test").info("quiet_event")

        assert capsys.readouterr().out == ""

    def test_solver_chatter_is_held_back_unless_debugging(self):
        distributed_fdi.logging_config.configure_logging(log_level="INFO")
        assert logging.getLogger("cvxpy").level == logging.WARNING

        distributed_fdi.logging_config.configure_logging(log_level="DEBUG")
        assert logging.getLogger("cvxpy").level == logging.DEBUG


class TestRunContext:
    def test_records_inside_the_block_carry_the_run(self, capsys):
        distributed_fdi.logging_config.configure_logging(log_level="INFO")
        logger = structlog.get_logger("test")

        with distributed_fdi.logging_config.run_context("two scalar agents", 7):
            logger.info("inside_event")
        logger.info("outside_event")

        inside, outside = (json.loads(line) for line in capsys.readouterr().out.splitlines())
        assert (inside["scenario"], inside["seed"]) == ("two scalar agents", 7)
        assert "scenario" not in outside
