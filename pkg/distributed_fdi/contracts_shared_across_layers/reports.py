"""
JSON artifacts written by the pipeline.

Each report carries a ``failed`` marker so that a run stopped by an error
still leaves a readable, explicitly incomplete record behind.  Floats are
written by pydantic's serializer, which emits the shortest representation
that round-trips, so two runs with the same inputs produce identical files.
"""

import typing

import pydantic

SynthesisStatus = typing.Literal["passed", "failed_verification", "infeasible", "stalled", "unstable", "error"]


# ──────────────────────────────────────────────────────────────────────────────
#  Synthesis
# ──────────────────────────────────────────────────────────────────────────────


class AgentSynthesisReport(pydantic.BaseModel):
    """Outcome of one agent's observer synthesis."""

    agent_id: int = pydantic.Field(..., ge=1)

    status: SynthesisStatus = pydantic.Field(..., description="Outcome of the synthesis and its verification.")

    detail: str | None = pydantic.Field(default=None, description="Error detail when the synthesis did not pass.")

    neighbor_ids: list[int] = pydantic.Field(default_factory=list)

    gamma_1: float | None = pydantic.Field(default=None, description="Certified H2 bound γ₁.")

    gamma_2: float | None = pydantic.Field(default=None, description="Certified H− bound γ₂.")

    achieved_h2: float | None = pydantic.Field(default=None, description="H2 norm of the verified disturbance path.")

    achieved_hminus: float | None = pydantic.Field(default=None, description="H− index on the verification grid.")

    max_closed_loop_real_part: float | None = pydantic.Field(default=None)

    lmi_residuals: dict[str, float] = pydantic.Field(
        default_factory=dict,
        description="Minimum-eigenvalue margin of every constraint at the returned certificate.",
    )

    includes_fault_sensitivity: bool | None = pydantic.Field(default=None)

    was_noise_regularized: bool | None = pydantic.Field(default=None)

    used_bisection: bool | None = pydantic.Field(default=None)

    name_of_solver: str | None = pydantic.Field(default=None)

    number_of_solver_iterations: int | None = pydantic.Field(default=None)

    residual_norm_of_riccati_equation: float | None = pydantic.Field(default=None)

    gain: list[list[float]] | None = pydantic.Field(
        default=None,
        description="Observer gain Lᵢ, μᵢ×ξ_yᵢ, rows in the stacked-state order.",
    )

    model_config = pydantic.ConfigDict(extra="forbid")


class SynthesisReport(pydantic.BaseModel):
    """Content of ``synthesis_report.json``."""

    scenario: str

    failed: bool = pydantic.Field(..., description="True when at least one agent did not pass.")

    agents: list[AgentSynthesisReport]

    model_config = pydantic.ConfigDict(extra="forbid")


# ──────────────────────────────────────────────────────────────────────────────
#  Evaluation
# ──────────────────────────────────────────────────────────────────────────────


class ThresholdsReport(pydantic.BaseModel):
    """Content of ``thresholds.json``."""

    per_agent: dict[int, float]

    per_channel: dict[int, list[float]] | None = None

    number_of_runs: int = pydantic.Field(..., ge=1)

    seeds: list[int]

    safety_factor: float

    settle_time_in_seconds: float

    window_length_in_samples: int = pydantic.Field(..., ge=1)

    model_config = pydantic.ConfigDict(extra="forbid")


class VerdictRecord(pydantic.BaseModel):
    """One isolation verdict with the fault patterns behind it."""

    window: tuple[float, float]

    status: str

    culprit: int | None = None

    reporter: int | None = None

    evidence: dict[int, str] = pydantic.Field(..., description="Fault pattern of every agent as a bit-string.")

    candidates: list[int] = pydantic.Field(default_factory=list)

    model_config = pydantic.ConfigDict(extra="forbid")


class VerdictsReport(pydantic.BaseModel):
    """Content of ``verdicts.json``."""

    scenario: str

    failed: bool

    verdicts: list[VerdictRecord]

    model_config = pydantic.ConfigDict(extra="forbid")
