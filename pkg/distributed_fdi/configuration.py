"""
Runtime configuration module.

Loads runtime settings from environment variables with the prefix DISTFDI_.
A .env file in the working directory is also read via pydantic-settings.

Scenario content (agent matrices, signals, synthesis and evaluation options)
is not configuration: it is validated by the scenario schema in
``distributed_fdi.contracts_shared_across_layers.scenario``.  This module only
holds the knobs that change how a run executes, never what it computes, with
the single exception of the master-seed override.
"""

import pydantic
import pydantic_settings

DEFAULT_NAME_OF_SEMIDEFINITE_PROGRAM_SOLVER = "CLARABEL"
DEFAULT_NAME_OF_FALLBACK_SEMIDEFINITE_PROGRAM_SOLVER = "SCS"


class DistributedFdiConfiguration(pydantic_settings.BaseSettings):
    """
    Centralised runtime configuration for the toolkit.

    Every field maps to an environment variable prefixed with DISTFDI_.  For
    example, the field ``maximum_number_of_worker_threads`` is populated from
    DISTFDI_MAXIMUM_NUMBER_OF_WORKER_THREADS.

    Configuration categories
    ------------------------
    - **Run**: master-seed override, log level
    - **Execution**: worker threads for per-agent synthesis and Monte Carlo runs,
      semidefinite program solvers
    - **Output**: CSV precision, metrics file name
    """

    # ── Run settings ─────────────────────────────────────────────────────

    seed: int | None = pydantic.Field(
        default=None,
        ge=0,
        description=(
            "Master seed override. When set, it replaces the seed of the scenario "
            "file; the --seed command-line flag still takes precedence."
        ),
    )

    log_level: str = pydantic.Field(
        default="INFO",
        description=(
            "Minimum log level for structured JSON logging. Accepted values: DEBUG, INFO, WARNING, ERROR, CRITICAL."
        ),
    )

    # ── Execution settings ───────────────────────────────────────────────

    maximum_number_of_worker_threads: int = pydantic.Field(
        default=4,
        ge=1,
        description=(
            "Size of the thread pool used to fan out per-agent observer syntheses and "
            "Monte Carlo threshold-calibration runs."
        ),
    )

    name_of_semidefinite_program_solver: str = pydantic.Field(
        default=DEFAULT_NAME_OF_SEMIDEFINITE_PROGRAM_SOLVER,
        description="Name of the cvxpy conic solver used for observer synthesis.",
    )

    name_of_fallback_semidefinite_program_solver: str = pydantic.Field(
        default=DEFAULT_NAME_OF_FALLBACK_SEMIDEFINITE_PROGRAM_SOLVER,
        description="Solver tried when the primary solver errors out or stops at an inaccurate point.",
    )

    # ── Output settings ──────────────────────────────────────────────────

    number_of_significant_digits_in_csv: int = pydantic.Field(
        default=17,
        ge=1,
        le=17,
        description="Significant digits written for every float in CSV outputs. 17 round-trips doubles exactly.",
    )

    name_of_metrics_file: str = pydantic.Field(
        default="metrics.prom",
        description="File name of the Prometheus textfile written into the output directory.",
    )

    model_config = pydantic_settings.SettingsConfigDict(
        env_file=".env",
        env_prefix="DISTFDI_",
    )
