"""
JSON logging for ``distfdi`` runs.

Every record, whether it comes from a ``structlog`` logger in this package or
from a standard-library logger of a dependency (cvxpy, the conic solvers), is
rendered as one JSON object per line on stdout with ``timestamp`` (ISO 8601
UTC), upper-case ``level``, ``event`` and ``service_name``.  While a pipeline
run is active, ``scenario`` and ``seed`` are added to each record as well.
"""

import collections.abc
import contextlib
import logging
import sys

import structlog

SERVICE_NAME = "distributed-fdi"

# Dependencies that report per-iteration progress at INFO.
CHATTY_THIRD_PARTY_LOGGERS = ("cvxpy", "__cvxpy__")


def _stamp_service_and_level(
    logger: structlog.types.WrappedLogger,
    method_name: str,
    event_dict: structlog.types.EventDict,
) -> structlog.types.EventDict:
    event_dict["service_name"] = SERVICE_NAME
    if "level" in event_dict:
        event_dict["level"] = event_dict["level"].upper()
    return event_dict


def _processors_before_rendering() -> list[structlog.types.Processor]:
    return [
        structlog.contextvars.merge_contextvars,
        structlog.stdlib.add_log_level,
        _stamp_service_and_level,
        structlog.processors.TimeStamper(fmt="iso", utc=True),
    ]


def configure_logging(log_level: str = "INFO") -> None:
    """
    Route all logging to stdout as JSON at ``log_level``.

    Unknown level names fall back to INFO.  Calling it again replaces the
    root handler instead of adding a second one, so the CLI can configure
    logging on every invocation.
    """
    level = logging.getLevelNamesMapping().get(log_level.upper(), logging.INFO)
    pre_chain = _processors_before_rendering()

    structlog.configure(
        processors=[
            *pre_chain,
            structlog.processors.format_exc_info,
            structlog.stdlib.ProcessorFormatter.wrap_for_formatter,
        ],
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )

    handler = logging.StreamHandler(sys.stdout)
    handler.setFormatter(
        structlog.stdlib.ProcessorFormatter(
            processors=[
                structlog.stdlib.ProcessorFormatter.remove_processors_meta,
                structlog.processors.JSONRenderer(sort_keys=True),
            ],
            foreign_pre_chain=pre_chain,
        )
    )

    root_logger = logging.getLogger()
    root_logger.handlers.clear()
    root_logger.addHandler(handler)
    root_logger.setLevel(level)

    for name in CHATTY_THIRD_PARTY_LOGGERS:
        logging.getLogger(name).setLevel(level if level <= logging.DEBUG else logging.WARNING)


@contextlib.contextmanager
def run_context(scenario: str, seed: int) -> collections.abc.Iterator[None]:
    """Tag every record logged inside the block with the scenario name and master seed."""
    with structlog.contextvars.bound_contextvars(scenario=scenario, seed=seed):
        yield
