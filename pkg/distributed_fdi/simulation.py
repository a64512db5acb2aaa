"""
Deterministic fixed-step simulation of the agent network and its observers.

The true agents, every agent's distributed observer and the residual
generators form one linear time-invariant system driven by zero-order-hold
signals::

    ẋᵢ    = Aᵢxᵢ + Bᵢuᵢ + B_fᵢfᵢ + B_dᵢdᵢ
    x̂̇_Ni = (𝒜ᵢ − Lᵢ𝓒̄ᵢ)x̂_Ni + 𝓑ᵤᵢu_Ni + Lᵢzᵢ
    rᵢ    = zᵢ − 𝓒̄ᵢx̂_Ni

where zᵢ stacks yᵢ − yⱼ computed from the true outputs at the same sample.
With the input held over a step, one classical fourth-order Runge–Kutta step
of this system is exactly X⁺ = ΦX + Γw with::

    Φ = I + hA + (hA)²/2 + (hA)³/6 + (hA)⁴/24
    Γ = h(I + hA/2 + (hA)²/6 + (hA)³/24)B

so the integrator precomputes Φ and the forcing sequence and then runs a
single matrix–vector recursion.
"""

import collections.abc
import dataclasses
import math
import typing

import numpy
import numpy.typing
import pydantic
import structlog

import distributed_fdi.exceptions
import distributed_fdi.matrix_equations
import distributed_fdi.network_model
import distributed_fdi.prometheus_metrics

logger = structlog.get_logger()

FloatArray = distributed_fdi.matrix_equations.FloatArray

DEFAULT_STEP_IN_SECONDS = 1e-3

DIVERGENCE_BOUND = 1e12

# Largest h·ρ(A) accepted for one Runge–Kutta step before it is split; the
# real stability interval of the scheme ends near 2.785.
MAXIMUM_PRODUCT_OF_STEP_AND_SPECTRAL_RADIUS = 2.5

_NUMBER_OF_STEPS_PER_DIVERGENCE_CHECK = 1000

# Channel codes used in the spawn key of the per-channel seed sequences.
CHANNEL_CODES = {"u": 0, "d": 1, "f": 2}


class SignalSpec(pydantic.BaseModel):
    """
    One scalar signal channel.

    ``step`` is ``amplitude`` from ``start`` on, ``pulse`` is ``amplitude`` on
    [start, stop), ``noise`` is zero-mean Gaussian with standard deviation
    √(power / hold) held constant over intervals of ``sample_time`` (the
    integration step when omitted), and ``zero`` is identically zero.
    """

    kind: typing.Literal["step", "pulse", "noise", "zero"] = "zero"
    amplitude: float = 0.0
    start: float = pydantic.Field(default=0.0, ge=0.0)
    stop: float | None = None
    power: float = pydantic.Field(default=0.0, ge=0.0)
    seed: int | None = pydantic.Field(
        default=None,
        ge=0,
        description="Pins the noise stream; otherwise it is derived from the master seed, agent and channel.",
    )
    sample_time: float | None = pydantic.Field(default=None, gt=0.0, description="Noise hold time in seconds.")

    model_config = pydantic.ConfigDict(extra="forbid", frozen=True)

    @pydantic.model_validator(mode="after")
    def _check_pulse_interval(self) -> "SignalSpec":
        if self.kind == "pulse" and (self.stop is None or not self.start < self.stop):
            raise ValueError("a pulse needs start < stop")
        return self


def signal_seed_sequence(master_seed: int, agent_id: int, channel: str, channel_index: int) -> numpy.random.SeedSequence:
    """Independent stream per (agent, channel kind, channel index) under ``master_seed``."""
    return numpy.random.SeedSequence(master_seed, spawn_key=(agent_id, CHANNEL_CODES[channel], channel_index))


def _time_tolerance(step: float) -> float:
    return 1e-9 * step


def sample_signal_on_grid(
    spec: SignalSpec,
    times: numpy.typing.ArrayLike,
    step: float = DEFAULT_STEP_IN_SECONDS,
    seed_sequence: numpy.random.SeedSequence | None = None,
) -> FloatArray:
    """Vectorized ``sample_signal`` over nonnegative ``times``."""
    instants = numpy.asarray(times, dtype=numpy.float64)
    tolerance = _time_tolerance(step)
    if spec.kind == "zero":
        return numpy.zeros_like(instants)
    if spec.kind == "step":
        return numpy.where(instants >= spec.start - tolerance, spec.amplitude, 0.0)
    if spec.kind == "pulse":
        assert spec.stop is not None
        active = (instants >= spec.start - tolerance) & (instants < spec.stop - tolerance)
        return numpy.where(active, spec.amplitude, 0.0)

    hold = spec.sample_time or step
    interval_indices = numpy.floor((instants + tolerance) / hold).astype(numpy.int64)
    number_of_draws = int(interval_indices.max()) + 1 if interval_indices.size else 0
    if spec.seed is not None:
        seed_sequence = numpy.random.SeedSequence(spec.seed)
    generator = numpy.random.default_rng(seed_sequence or numpy.random.SeedSequence(0))
    draws = generator.standard_normal(number_of_draws) * math.sqrt(spec.power / hold)
    return draws[interval_indices]


def sample_signal(
    spec: SignalSpec,
    t: float,
    step: float = DEFAULT_STEP_IN_SECONDS,
    seed_sequence: numpy.random.SeedSequence | None = None,
) -> float:
    """Value of ``spec`` at time ``t`` ≥ 0 under a zero-order hold of ``step``."""
    return float(sample_signal_on_grid(spec, numpy.array([t]), step, seed_sequence)[0])


@dataclasses.dataclass(frozen=True)
class AgentSignals:
    """Per-channel signal specifications of one agent; empty tuples mean all-zero channels."""

    u: tuple[SignalSpec, ...] = ()
    d: tuple[SignalSpec, ...] = ()
    f: tuple[SignalSpec, ...] = ()

    def without_faults(self) -> "AgentSignals":
        return dataclasses.replace(self, f=())


@dataclasses.dataclass(frozen=True, eq=False)
class NetworkScenario:
    """
    Everything ``simulate_network`` needs, bundled so Monte Carlo runs can vary one field.

    Attributes:
        agents: Agent models.
        topology: Sensing graph.
        gains: Observer gain Lᵢ per agent id, shaped μᵢ×ξ_yᵢ.
        signals: Signal specifications per agent id.
        initial_states: Initial true state per agent id (zero when absent).
        horizon: Simulated time T in seconds.
        step: Integration step h in seconds.
        master_seed: Root of every derived noise stream.
    """

    agents: tuple[distributed_fdi.network_model.AgentModel, ...]
    topology: distributed_fdi.network_model.Topology
    gains: collections.abc.Mapping[int, FloatArray]
    signals: collections.abc.Mapping[int, AgentSignals]
    initial_states: collections.abc.Mapping[int, numpy.typing.ArrayLike]
    horizon: float
    step: float = DEFAULT_STEP_IN_SECONDS
    master_seed: int = 0

    def without_faults(self) -> "NetworkScenario":
        return dataclasses.replace(
            self, signals={agent_id: signals.without_faults() for agent_id, signals in self.signals.items()}
        )

    def with_master_seed(self, master_seed: int) -> "NetworkScenario":
        return dataclasses.replace(self, master_seed=master_seed)


@dataclasses.dataclass(frozen=True, eq=False)
class Trajectory:
    """
    Sampled network trajectory on the uniform grid 0, h, …, T.

    Every per-agent mapping is keyed by agent id and holds one row per sample.

    Attributes:
        time: Sample instants.
        member_ids: Stacking order (i, i₁, …) of each agent's neighborhood.
        states: True states xᵢ.
        estimates: Observer states x̂_Ni.
        residuals: Residuals rᵢ, one block of output-dimension columns per neighbor.
        control_inputs, disturbances, faults: Applied signals uᵢ, dᵢ, fᵢ.
    """

    time: FloatArray
    member_ids: collections.abc.Mapping[int, tuple[int, ...]]
    states: collections.abc.Mapping[int, FloatArray]
    estimates: collections.abc.Mapping[int, FloatArray]
    residuals: collections.abc.Mapping[int, FloatArray]
    control_inputs: collections.abc.Mapping[int, FloatArray]
    disturbances: collections.abc.Mapping[int, FloatArray]
    faults: collections.abc.Mapping[int, FloatArray]

    @property
    def agent_ids(self) -> tuple[int, ...]:
        return tuple(sorted(self.states))

    @property
    def step(self) -> float:
        return float(self.time[1] - self.time[0]) if self.time.size > 1 else DEFAULT_STEP_IN_SECONDS

    def neighbor_ids(self, agent_id: int) -> tuple[int, ...]:
        return self.member_ids[agent_id][1:]

    def output_dimension(self, agent_id: int) -> int:
        return self.residuals[agent_id].shape[1] // len(self.neighbor_ids(agent_id))

    def stacked_states(self, agent_id: int) -> FloatArray:
        """x_Ni over time."""
        if agent_id not in self.member_ids:
            raise distributed_fdi.exceptions.UnknownAgentError(f"Agent {agent_id} was not simulated.")
        return numpy.hstack([self.states[member_id] for member_id in self.member_ids[agent_id]])


def extract_error(trajectory: Trajectory, agent_id: int) -> FloatArray:
    """
    Estimation error e_Ni = x_Ni − x̂_Ni of agent ``agent_id`` at every sample.

    Raises:
        UnknownAgentError: the agent is not part of the trajectory.
    """
    return trajectory.stacked_states(agent_id) - trajectory.estimates[agent_id]


# ──────────────────────────────────────────────────────────────────────────────
#  Network assembly
# ──────────────────────────────────────────────────────────────────────────────


def _offsets(sizes: collections.abc.Iterable[int]) -> list[int]:
    return [0, *numpy.cumsum(list(sizes)).astype(int).tolist()]


def _selection(columns: list[range], total: int) -> FloatArray:
    """Rows of the identity picking ``columns`` in order."""
    indices = [index for block in columns for index in block]
    selection = numpy.zeros((len(indices), total))
    selection[numpy.arange(len(indices)), indices] = 1.0
    return selection


def _fourth_order_propagator(dynamics: FloatArray, input_matrix: FloatArray, step: float) -> tuple[FloatArray, FloatArray]:
    identity = numpy.eye(dynamics.shape[0])
    scaled = step * dynamics
    scaled_squared = scaled @ scaled
    scaled_cubed = scaled_squared @ scaled
    transition = identity + scaled + scaled_squared / 2.0 + scaled_cubed / 6.0 + scaled_cubed @ scaled / 24.0
    input_transition = step * (identity + scaled / 2.0 + scaled_squared / 6.0 + scaled_cubed / 24.0) @ input_matrix
    return transition, input_transition


def _held_input_propagator(dynamics: FloatArray, input_matrix: FloatArray, step: float) -> tuple[FloatArray, FloatArray]:
    """Runge–Kutta propagator of one step, split into equal sub-steps when the step is too long for the spectrum."""
    spectral_radius = float(numpy.max(numpy.abs(numpy.linalg.eigvals(dynamics)))) if dynamics.size else 0.0
    number_of_substeps = max(1, math.ceil(step * spectral_radius / MAXIMUM_PRODUCT_OF_STEP_AND_SPECTRAL_RADIUS))
    if number_of_substeps == 1:
        return _fourth_order_propagator(dynamics, input_matrix, step)

    logger.warning(
        "integration_step_subdivided",
        step=step,
        spectral_radius=spectral_radius,
        number_of_substeps=number_of_substeps,
    )
    sub_transition, sub_input_transition = _fourth_order_propagator(dynamics, input_matrix, step / number_of_substeps)
    transition = numpy.eye(dynamics.shape[0])
    input_transition = numpy.zeros_like(sub_input_transition)
    for _ in range(number_of_substeps):
        input_transition = sub_transition @ input_transition + sub_input_transition
        transition = sub_transition @ transition
    return transition, input_transition


def _signal_matrix(
    agent: distributed_fdi.network_model.AgentModel,
    channel: str,
    specs: tuple[SignalSpec, ...],
    times: FloatArray,
    step: float,
    master_seed: int,
) -> FloatArray:
    number_of_channels = {
        "u": agent.number_of_control_inputs,
        "d": agent.number_of_disturbances,
        "f": agent.number_of_faults,
    }[channel]
    if specs and len(specs) != number_of_channels:
        raise distributed_fdi.exceptions.DimensionMismatchError(
            f"Agent {agent.agent_id}: {len(specs)} '{channel}' signals for {number_of_channels} channels."
        )
    samples = numpy.zeros((times.size, number_of_channels))
    for channel_index, spec in enumerate(specs):
        samples[:, channel_index] = sample_signal_on_grid(
            spec,
            times,
            step,
            signal_seed_sequence(master_seed, agent.agent_id, channel, channel_index),
        )
    return samples


def simulate_network(
    agents: collections.abc.Iterable[distributed_fdi.network_model.AgentModel],
    topology: distributed_fdi.network_model.Topology,
    gains: collections.abc.Mapping[int, numpy.typing.ArrayLike],
    signals: collections.abc.Mapping[int, AgentSignals],
    initial_states: collections.abc.Mapping[int, numpy.typing.ArrayLike],
    horizon: float,
    step: float = DEFAULT_STEP_IN_SECONDS,
    master_seed: int = 0,
    purpose: str = "evaluation",
) -> Trajectory:
    """
    Integrate the true agents and all observers from zero observer states.

    Raises:
        ScenarioValidationError: ``step`` is not positive or ``horizon`` is
            not a multiple of it.
        DimensionMismatchError: a gain, signal list or initial state has the
            wrong size.
        NonFiniteStateError: a state leaves the divergence bound.
    """
    if not step > 0.0 or horizon < 0.0:
        raise distributed_fdi.exceptions.ScenarioValidationError("step must be positive and horizon nonnegative")
    number_of_steps = round(horizon / step)
    if abs(number_of_steps * step - horizon) > 1e-9 * max(1.0, horizon):
        raise distributed_fdi.exceptions.ScenarioValidationError(
            f"horizon {horizon} is not a multiple of the step {step}"
        )

    agents_by_id = {agent.agent_id: agent for agent in agents}
    agent_ids = sorted(agents_by_id)
    relative_models = {
        agent_id: distributed_fdi.network_model.build_relative_model(agents_by_id.values(), topology, agent_id)
        for agent_id in agent_ids
    }

    state_offsets = dict(zip(agent_ids, _offsets(agents_by_id[i].number_of_states for i in agent_ids), strict=False))
    number_of_true_states = sum(agents_by_id[i].number_of_states for i in agent_ids)
    observer_offsets = dict(
        zip(
            agent_ids,
            (number_of_true_states + offset for offset in _offsets(relative_models[i].mu for i in agent_ids)),
            strict=False,
        )
    )
    number_of_joint_states = number_of_true_states + sum(relative_models[i].mu for i in agent_ids)

    # Signal vector w = (u₁, …, u_N, d₁, …, d_N, f₁, …, f_N).
    signal_sizes = {
        "u": [agents_by_id[i].number_of_control_inputs for i in agent_ids],
        "d": [agents_by_id[i].number_of_disturbances for i in agent_ids],
        "f": [agents_by_id[i].number_of_faults for i in agent_ids],
    }
    signal_offsets: dict[str, dict[int, int]] = {}
    running_offset = 0
    for channel in ("u", "d", "f"):
        offsets = _offsets(signal_sizes[channel])
        signal_offsets[channel] = {i: running_offset + offsets[position] for position, i in enumerate(agent_ids)}
        running_offset += offsets[-1]
    number_of_signals = running_offset

    def state_columns(agent_id: int) -> range:
        return range(state_offsets[agent_id], state_offsets[agent_id] + agents_by_id[agent_id].number_of_states)

    def signal_columns(channel: str, agent_id: int) -> range:
        size = signal_sizes[channel][agent_ids.index(agent_id)]
        return range(signal_offsets[channel][agent_id], signal_offsets[channel][agent_id] + size)

    joint_dynamics = numpy.zeros((number_of_joint_states, number_of_joint_states))
    joint_input = numpy.zeros((number_of_joint_states, number_of_signals))
    for agent_id in agent_ids:
        agent = agents_by_id[agent_id]
        rows = state_columns(agent_id)
        joint_dynamics[rows.start : rows.stop, rows.start : rows.stop] = agent.A
        for channel, matrix in (("u", agent.B), ("d", agent.B_d), ("f", agent.B_f)):
            columns = signal_columns(channel, agent_id)
            joint_input[rows.start : rows.stop, columns.start : columns.stop] = matrix

    # Residual rᵢ = R_x·X + R_w·w over the joint state X and signal vector w.
    residual_maps: dict[int, tuple[FloatArray, FloatArray]] = {}
    for agent_id in agent_ids:
        model = relative_models[agent_id]
        gain = numpy.asarray(gains[agent_id], dtype=numpy.float64)
        if gain.shape != (model.mu, model.xi_y):
            raise distributed_fdi.exceptions.DimensionMismatchError(
                f"Agent {agent_id}: gain must be {(model.mu, model.xi_y)}, got {gain.shape}."
            )
        members = model.member_ids
        member_states = _selection([state_columns(member) for member in members], number_of_joint_states)
        observer_rows = range(observer_offsets[agent_id], observer_offsets[agent_id] + model.mu)
        estimate_selection = _selection([observer_rows], number_of_joint_states)
        relative_output_of_state = model.C_bar @ member_states
        relative_output_of_signals = model.D_f_bar @ _selection(
            [signal_columns("f", member) for member in members], number_of_signals
        ) + model.D_d_bar @ _selection([signal_columns("d", member) for member in members], number_of_signals)
        control_selection = _selection([signal_columns("u", member) for member in members], number_of_signals)

        joint_dynamics[observer_rows.start : observer_rows.stop] += (
            gain @ relative_output_of_state + (model.A - gain @ model.C_bar) @ estimate_selection
        )
        joint_input[observer_rows.start : observer_rows.stop] += (
            model.B_u @ control_selection + gain @ relative_output_of_signals
        )
        residual_maps[agent_id] = (
            relative_output_of_state - model.C_bar @ estimate_selection,
            relative_output_of_signals,
        )

    times = numpy.arange(number_of_steps + 1) * step
    signal_samples = numpy.zeros((times.size, number_of_signals))
    for agent_id in agent_ids:
        agent_signals = signals.get(agent_id, AgentSignals())
        for channel in ("u", "d", "f"):
            columns = signal_columns(channel, agent_id)
            signal_samples[:, columns.start : columns.stop] = _signal_matrix(
                agents_by_id[agent_id], channel, getattr(agent_signals, channel), times, step, master_seed
            )

    initial_joint_state = numpy.zeros(number_of_joint_states)
    for agent_id, initial_state in initial_states.items():
        if agent_id not in agents_by_id:
            raise distributed_fdi.exceptions.UnknownAgentError(f"Initial state given for unknown agent {agent_id}.")
        vector = numpy.asarray(initial_state, dtype=numpy.float64).reshape(-1)
        columns = state_columns(agent_id)
        if vector.size != len(columns):
            raise distributed_fdi.exceptions.DimensionMismatchError(
                f"Agent {agent_id}: initial state has {vector.size} entries for {len(columns)} states."
            )
        initial_joint_state[columns.start : columns.stop] = vector

    transition, input_transition = _held_input_propagator(joint_dynamics, joint_input, step)
    forcing = signal_samples @ input_transition.T
    joint_states = numpy.empty((times.size, number_of_joint_states))
    joint_states[0] = initial_joint_state
    for chunk_start in range(0, number_of_steps, _NUMBER_OF_STEPS_PER_DIVERGENCE_CHECK):
        chunk_stop = min(chunk_start + _NUMBER_OF_STEPS_PER_DIVERGENCE_CHECK, number_of_steps)
        for index in range(chunk_start, chunk_stop):
            joint_states[index + 1] = transition @ joint_states[index] + forcing[index]
        chunk = joint_states[chunk_start + 1 : chunk_stop + 1]
        if not numpy.all(numpy.isfinite(chunk)) or numpy.max(numpy.abs(chunk)) > DIVERGENCE_BOUND:
            raise distributed_fdi.exceptions.NonFiniteStateError(
                f"The simulation diverged before t = {times[chunk_stop]:.6g} s."
            )

    distributed_fdi.prometheus_metrics.counter_of_simulation_runs.labels(purpose=purpose).inc()

    def columns_of(matrix: FloatArray, columns: range) -> FloatArray:
        return matrix[:, columns.start : columns.stop]

    return Trajectory(
        time=times,
        member_ids={agent_id: relative_models[agent_id].member_ids for agent_id in agent_ids},
        states={agent_id: columns_of(joint_states, state_columns(agent_id)) for agent_id in agent_ids},
        estimates={
            agent_id: joint_states[:, observer_offsets[agent_id] : observer_offsets[agent_id] + relative_models[agent_id].mu]
            for agent_id in agent_ids
        },
        residuals={
            agent_id: joint_states @ residual_maps[agent_id][0].T + signal_samples @ residual_maps[agent_id][1].T
            for agent_id in agent_ids
        },
        control_inputs={agent_id: columns_of(signal_samples, signal_columns("u", agent_id)) for agent_id in agent_ids},
        disturbances={agent_id: columns_of(signal_samples, signal_columns("d", agent_id)) for agent_id in agent_ids},
        faults={agent_id: columns_of(signal_samples, signal_columns("f", agent_id)) for agent_id in agent_ids},
    )


def simulate_scenario(scenario: NetworkScenario, purpose: str = "evaluation") -> Trajectory:
    """``simulate_network`` over the fields of ``scenario``."""
    return simulate_network(
        scenario.agents,
        scenario.topology,
        scenario.gains,
        scenario.signals,
        scenario.initial_states,
        scenario.horizon,
        scenario.step,
        scenario.master_seed,
        purpose,
    )
