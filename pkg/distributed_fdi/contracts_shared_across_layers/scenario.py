"""
Scenario schema shared by the command-line layer and the pipeline service.

A scenario file is JSON.  Matrices are nested lists of rows; an absent or
empty list means a matrix with no columns.  Every field below is validated
with ``extra="forbid"`` so a misspelt key is an error instead of a silently
ignored setting, and the fully defaulted model is echoed back as
``effective_config.json`` so a run can be repeated from its own output.

Scenario kinds
--------------
- ``custom``: matrices are used as written.
- ``actuator``: faults enter through the control channels, B_f := B and
  D_f := 0.  The B_f and D_f of the file are kept in the echo but not used.
  D_d is kept: the observer design pre-whitens with R = D_d D_dᵀ, which
  must stay nonsingular.
- ``sensor``: one fault channel per output, B_f := 0 and D_f := I, the
  agent-level counterpart of the identity fault feedthrough the observer is
  designed for.  The file's B_f and D_f appear only in the echo, so each
  agent needs one ``f`` signal per output.
"""

import typing

import numpy
import pydantic

import distributed_fdi.network_model
import distributed_fdi.simulation
import distributed_fdi.synthesis

Matrix = list[list[float]]

ScenarioKind = typing.Literal["actuator", "sensor", "custom"]


# ──────────────────────────────────────────────────────────────────────────────
#  Building blocks
# ──────────────────────────────────────────────────────────────────────────────


class AgentSpecification(pydantic.BaseModel):
    """Matrices of one agent, ẋ = Ax + Bu + B_f f + B_d d and y = Cx + D_f f + D_d d."""

    id: int = pydantic.Field(..., ge=1, description="Agent identifier in [1, N].")

    A: Matrix = pydantic.Field(..., min_length=1, description="Dynamics matrix, n×n.")

    B: Matrix = pydantic.Field(default_factory=list, description="Control-input matrix, n×m_u.")

    B_f: Matrix = pydantic.Field(default_factory=list, description="Fault-input matrix, n×m_f.")

    B_d: Matrix = pydantic.Field(default_factory=list, description="Disturbance-input matrix, n×m_d.")

    C: Matrix = pydantic.Field(..., min_length=1, description="Output matrix, m_y×n.")

    D_f: Matrix = pydantic.Field(default_factory=list, description="Fault-feedthrough matrix, m_y×m_f.")

    D_d: Matrix = pydantic.Field(default_factory=list, description="Disturbance-feedthrough matrix, m_y×m_d.")

    model_config = pydantic.ConfigDict(extra="forbid")

    @pydantic.field_validator("A", "B", "B_f", "B_d", "C", "D_f", "D_d")
    @classmethod
    def _check_rectangular(cls, rows: Matrix) -> Matrix:
        if len({len(row) for row in rows}) > 1:
            raise ValueError("matrix rows must have equal length")
        return rows


class TopologySpecification(pydantic.BaseModel):
    """Undirected sensing graph as a list of agent-id pairs."""

    edges: list[tuple[int, int]] = pydantic.Field(..., min_length=1, description="Unordered pairs {i, j}.")

    model_config = pydantic.ConfigDict(extra="forbid")


class AgentSignalSpecification(pydantic.BaseModel):
    """One signal per channel; an empty list leaves every channel of that kind at zero."""

    u: list[distributed_fdi.simulation.SignalSpec] = pydantic.Field(default_factory=list)

    d: list[distributed_fdi.simulation.SignalSpec] = pydantic.Field(default_factory=list)

    f: list[distributed_fdi.simulation.SignalSpec] = pydantic.Field(default_factory=list)

    model_config = pydantic.ConfigDict(extra="forbid")


class EvaluationOptions(pydantic.BaseModel):
    """Residual evaluation, threshold calibration and decision settings."""

    window_length_in_seconds: float = pydantic.Field(
        default=2.0,
        gt=0.0,
        description="Length of the sliding root-mean-square window.",
    )

    number_of_monte_carlo_runs: int = pydantic.Field(
        default=20,
        ge=1,
        description="Fault-free simulations behind the thresholds.",
    )

    safety_factor: float = pydantic.Field(default=1.2, ge=1.0, description="Multiplier on the fault-free supremum.")

    settle_time_in_seconds: float = pydantic.Field(
        default=5.0,
        ge=0.0,
        description="Initial transient excluded from the threshold supremum.",
    )

    debounce_time_in_seconds: float = pydantic.Field(
        default=0.2,
        ge=0.0,
        description="Minimum dwell above the threshold before a flag is raised.",
    )

    decision_windows: list[tuple[float, float]] | None = pydantic.Field(
        default=None,
        description="Windows [start, stop] in seconds with one verdict each. Defaults to [settle time, horizon].",
    )

    per_channel_thresholds: bool = pydantic.Field(
        default=False,
        description="Calibrate one threshold per residual channel instead of one per agent.",
    )

    model_config = pydantic.ConfigDict(extra="forbid")

    @pydantic.field_validator("decision_windows")
    @classmethod
    def _check_decision_windows(cls, windows: list[tuple[float, float]] | None) -> list[tuple[float, float]] | None:
        for start, stop in windows or []:
            if not 0.0 <= start < stop:
                raise ValueError(f"decision window [{start}, {stop}] needs 0 <= start < stop")
        return windows

    def window_length_in_samples(self, step: float) -> int:
        return max(1, round(self.window_length_in_seconds / step))


# ──────────────────────────────────────────────────────────────────────────────
#  Scenario
# ──────────────────────────────────────────────────────────────────────────────


class ScenarioConfig(pydantic.BaseModel):
    """
    Complete description of one run.

    The conversion helpers at the bottom turn the validated fields into the
    domain objects of the numerical modules; the kind substitution happens
    there and nowhere else.
    """

    name: str = pydantic.Field(default="scenario", description="Label copied into the reports.")

    kind: ScenarioKind = pydantic.Field(default="custom", description="Fault-channel substitution to apply.")

    agents: list[AgentSpecification] = pydantic.Field(..., min_length=1)

    topology: TopologySpecification | None = pydantic.Field(default=None)

    signals: dict[int, AgentSignalSpecification] = pydantic.Field(
        default_factory=dict,
        description="Signal specifications keyed by agent id; absent agents get zero signals.",
    )

    initial_states: dict[int, list[float]] = pydantic.Field(
        default_factory=dict,
        description="Initial true states keyed by agent id; absent agents start at zero.",
    )

    horizon: float = pydantic.Field(default=80.0, gt=0.0, description="Simulated time T in seconds.")

    step: float = pydantic.Field(
        default=distributed_fdi.simulation.DEFAULT_STEP_IN_SECONDS,
        gt=0.0,
        description="Integration step h in seconds.",
    )

    synthesis: distributed_fdi.synthesis.SynthesisOptions = pydantic.Field(
        default_factory=distributed_fdi.synthesis.SynthesisOptions
    )

    evaluation: EvaluationOptions = pydantic.Field(default_factory=EvaluationOptions)

    seed: int = pydantic.Field(default=0, ge=0, description="Master seed of every noise stream.")

    model_config = pydantic.ConfigDict(extra="forbid")

    @pydantic.model_validator(mode="after")
    def _check_agent_references(self) -> "ScenarioConfig":
        if self.topology is None:
            raise ValueError("topology required")
        number_of_agents = len(self.agents)
        identifiers = sorted(agent.id for agent in self.agents)
        if identifiers != list(range(1, number_of_agents + 1)):
            raise ValueError(f"agent ids must be exactly 1..{number_of_agents}, got {identifiers}")
        referenced = [agent_id for edge in self.topology.edges for agent_id in edge]
        referenced += list(self.signals) + list(self.initial_states)
        if any(not 1 <= agent_id <= number_of_agents for agent_id in referenced):
            raise ValueError("agent id out of range")
        return self

    @property
    def number_of_agents(self) -> int:
        return len(self.agents)

    @property
    def edges(self) -> list[tuple[int, int]]:
        return list(self.topology.edges) if self.topology is not None else []

    def with_overrides(
        self,
        seed: int | None = None,
        step: float | None = None,
        horizon: float | None = None,
    ) -> "ScenarioConfig":
        """Copy with the command-line overrides applied and revalidated."""
        updates: dict[str, typing.Any] = {}
        if seed is not None:
            updates["seed"] = seed
        if step is not None:
            updates["step"] = step
        if horizon is not None:
            updates["horizon"] = horizon
        return ScenarioConfig.model_validate({**self.model_dump(), **updates})

    # ── Conversion into domain objects ───────────────────────────────────

    def agent_models(self) -> list[distributed_fdi.network_model.AgentModel]:
        """Agent models after the kind substitution, ordered by id."""
        models = []
        for specification in sorted(self.agents, key=lambda agent: agent.id):
            number_of_states = len(specification.A)
            number_of_outputs = len(specification.C)
            B = _matrix_with_rows(specification.B, number_of_states)
            B_f = _matrix_with_rows(specification.B_f, number_of_states)
            D_f = _matrix_with_rows(specification.D_f, number_of_outputs)
            if self.kind == "actuator":
                B_f = B
                D_f = numpy.zeros((number_of_outputs, B.shape[1]))
            elif self.kind == "sensor":
                B_f = numpy.zeros((number_of_states, number_of_outputs))
                D_f = numpy.eye(number_of_outputs)
            models.append(
                distributed_fdi.network_model.AgentModel(
                    agent_id=specification.id,
                    A=_matrix_with_rows(specification.A, number_of_states),
                    B=B,
                    B_f=B_f,
                    B_d=_matrix_with_rows(specification.B_d, number_of_states),
                    C=_matrix_with_rows(specification.C, number_of_outputs),
                    D_f=D_f,
                    D_d=_matrix_with_rows(specification.D_d, number_of_outputs),
                )
            )
        return models

    def topology_model(self) -> distributed_fdi.network_model.Topology:
        return distributed_fdi.network_model.build_topology(self.number_of_agents, self.edges)

    def agent_signals(self) -> dict[int, distributed_fdi.simulation.AgentSignals]:
        return {
            agent_id: distributed_fdi.simulation.AgentSignals(
                u=tuple(specification.u), d=tuple(specification.d), f=tuple(specification.f)
            )
            for agent_id, specification in sorted(self.signals.items())
        }

    def initial_state_vectors(self) -> dict[int, list[float]]:
        return dict(sorted(self.initial_states.items()))

    def design_options(self) -> distributed_fdi.synthesis.SynthesisOptions:
        """Synthesis options with the sensor substitution applied to the relative fault model."""
        if self.kind == "sensor":
            return self.synthesis.model_copy(update={"relative_fault_model": "output_identity"})
        return self.synthesis


def _matrix_with_rows(values: Matrix, number_of_rows: int) -> numpy.ndarray:
    if not values or not any(values):
        return numpy.zeros((number_of_rows, 0))
    return numpy.array(values, dtype=numpy.float64)
