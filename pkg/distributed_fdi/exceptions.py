"""
Custom exception classes for the distributed fault detection and isolation toolkit.

Every anticipated failure of the numerical kernels, the network model, the
observer synthesis, the simulator and the scenario ingestion is represented by
one class below.  The command-line layer maps each class to a process exit code
through the ``exit_code`` class attribute, so no other module needs to know
about exit codes.

Exception hierarchy
-------------------
::

    Exception (Python built-in)
    └── DistributedFdiError (base class for all toolkit exceptions)
        ├── NotHurwitzError                        → exit 1
        ├── NotStrictlyProperError                 → exit 1
        ├── NotDetectableError                     → exit 2
        ├── SingularNoiseError                     → exit 2
        ├── NoStabilizingSolutionError             → exit 2
        ├── InvalidFrequencyGridError              → exit 1
        ├── SelfLoopError                          → exit 1
        ├── AgentIdentifierOutOfRangeError         → exit 1
        ├── IsolatedAgentError                     → exit 1
        ├── DimensionMismatchError                 → exit 1
        ├── UnknownAgentError                      → exit 1
        ├── InfeasibleError                        → exit 2
        ├── SolverStalledError                     → exit 2
        ├── UnstableResultError                    → exit 3
        ├── VerificationFailedError                → exit 3
        ├── NonFiniteStateError                    → exit 4
        ├── ScenarioParseError                     → exit 1
        └── ScenarioValidationError                → exit 1

Each subclass carries a ``default_detail`` class attribute that provides a
sensible message when no explicit detail is supplied at the raise site.
"""

EXIT_CODE_FOR_SUCCESS = 0
EXIT_CODE_FOR_CONFIGURATION_ERROR = 1
EXIT_CODE_FOR_SYNTHESIS_INFEASIBILITY = 2
EXIT_CODE_FOR_VERIFICATION_FAILURE = 3
EXIT_CODE_FOR_SIMULATION_DIVERGENCE = 4


class DistributedFdiError(Exception):
    """
    Base exception for all toolkit errors.

    Attributes:
        detail: A human-readable description of the failure.
    """

    default_detail: str = "A distributed fault detection and isolation error occurred."
    exit_code: int = EXIT_CODE_FOR_CONFIGURATION_ERROR

    def __init__(self, detail: str | None = None) -> None:
        self.detail = detail or self.default_detail
        super().__init__(self.detail)


# ──────────────────────────────────────────────────────────────────────────────
#  Numerical kernels
# ──────────────────────────────────────────────────────────────────────────────


class NotHurwitzError(DistributedFdiError):
    """
    Raised when a matrix that must be Hurwitz has an eigenvalue with a
    nonnegative real part, for example before a Lyapunov solve or an H2 norm.
    """

    default_detail = "The dynamics matrix is not Hurwitz."


class NotStrictlyProperError(DistributedFdiError):
    """Raised when an H2 norm is requested for a system with nonzero feedthrough."""

    default_detail = "The system has a nonzero feedthrough matrix and no finite H2 norm."


class NotDetectableError(DistributedFdiError):
    """
    Raised when the output matrix cannot observe an unstable or marginal mode
    of the dynamics matrix (PBH rank test).
    """

    default_detail = "The output pair is not detectable."
    exit_code = EXIT_CODE_FOR_SYNTHESIS_INFEASIBILITY


class SingularNoiseError(DistributedFdiError):
    """Raised when the measurement-noise covariance D_d D_dᵀ is singular."""

    default_detail = "The measurement-noise covariance is singular."
    exit_code = EXIT_CODE_FOR_SYNTHESIS_INFEASIBILITY


class NoStabilizingSolutionError(DistributedFdiError):
    """
    Raised when the filter Riccati equation has no stabilizing positive
    semidefinite solution, or when Newton–Kleinman cannot reach one.
    """

    default_detail = "The filter Riccati equation has no stabilizing solution."
    exit_code = EXIT_CODE_FOR_SYNTHESIS_INFEASIBILITY


class InvalidFrequencyGridError(DistributedFdiError):
    """Raised when a frequency grid is empty, unsorted or not strictly positive."""

    default_detail = "The frequency grid must be nonempty, strictly positive and sorted."


# ──────────────────────────────────────────────────────────────────────────────
#  Network model
# ──────────────────────────────────────────────────────────────────────────────


class SelfLoopError(DistributedFdiError):
    """Raised when an edge connects an agent to itself."""

    default_detail = "The topology contains a self-loop."


class AgentIdentifierOutOfRangeError(DistributedFdiError):
    """Raised when an edge or a signal refers to an agent outside [1, N]."""

    default_detail = "agent id out of range"


class IsolatedAgentError(DistributedFdiError):
    """
    Raised when an agent has no neighbor.  Such an agent has no relative
    measurement and therefore no residual.
    """

    default_detail = "An agent has no neighbor."


class DimensionMismatchError(DistributedFdiError):
    """Raised when matrix dimensions are inconsistent within an agent or a neighborhood."""

    default_detail = "Matrix dimensions are inconsistent."


class UnknownAgentError(DistributedFdiError):
    """Raised when an agent identifier is not part of the model or the trajectory."""

    default_detail = "Unknown agent."


# ──────────────────────────────────────────────────────────────────────────────
#  Observer synthesis
# ──────────────────────────────────────────────────────────────────────────────


class InfeasibleError(DistributedFdiError):
    """
    Raised when the semidefinite program admits no certificate at the
    requested margin.  A neighborhood whose fault channels are all zero always
    ends here because its fault sensitivity cannot be positive.
    """

    default_detail = "The observer synthesis program is infeasible."
    exit_code = EXIT_CODE_FOR_SYNTHESIS_INFEASIBILITY


class SolverStalledError(DistributedFdiError):
    """Raised when the conic solver and its fallback both stop short of their tolerance."""

    default_detail = "The semidefinite program solver did not reach its tolerance."
    exit_code = EXIT_CODE_FOR_SYNTHESIS_INFEASIBILITY


class UnstableResultError(DistributedFdiError):
    """
    Raised when the solver returns a certificate but the recovered gain does
    not make the observer error dynamics Hurwitz.
    """

    default_detail = "The synthesized observer gain does not stabilize the error dynamics."
    exit_code = EXIT_CODE_FOR_VERIFICATION_FAILURE


class VerificationFailedError(DistributedFdiError):
    """Raised by the pipeline run when synthesized observers fail their a-posteriori H2/H− check."""

    default_detail = "At least one synthesized observer failed verification."
    exit_code = EXIT_CODE_FOR_VERIFICATION_FAILURE


# ──────────────────────────────────────────────────────────────────────────────
#  Simulation
# ──────────────────────────────────────────────────────────────────────────────


class NonFiniteStateError(DistributedFdiError):
    """Raised when a simulated state leaves the divergence bound or becomes non-finite."""

    default_detail = "The simulation diverged."
    exit_code = EXIT_CODE_FOR_SIMULATION_DIVERGENCE


# ──────────────────────────────────────────────────────────────────────────────
#  Scenario ingestion
# ──────────────────────────────────────────────────────────────────────────────


class ScenarioParseError(DistributedFdiError):
    """Raised when a scenario file is missing or is not well-formed JSON."""

    default_detail = "The scenario file could not be parsed."


class ScenarioValidationError(DistributedFdiError):
    """Raised when a well-formed scenario violates one of the schema invariants."""

    default_detail = "The scenario is invalid."
