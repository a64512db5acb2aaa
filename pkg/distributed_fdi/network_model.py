"""
Agents, the undirected sensing topology and each agent's relative model.

An agent only measures relative outputs zᵢⱼ = yᵢ − yⱼ towards its neighbors,
so its observer works on the stacked neighborhood system::

    ẋ_Ni = 𝒜ᵢ·x_Ni + 𝓑ᵤᵢ·u_Ni + 𝓑_fᵢ·f_Ni + 𝓑_dᵢ·d_Ni
    zᵢ   = 𝓒̄ᵢ·x_Ni + 𝓓̄_fᵢ·f_Ni + 𝓓̄_dᵢ·d_Ni

The stacked state is (xᵢ, x_i₁, …, x_i|Nᵢ|) with neighbors in ascending id.
Input-side matrices are block-diagonal; output-side matrices have one row
block per neighbor j holding Hᵢ in the first column block and −H_ij in
column block j.
"""

import collections.abc
import dataclasses

import networkx
import numpy
import numpy.typing
import scipy.linalg

import distributed_fdi.exceptions
import distributed_fdi.matrix_equations

FloatArray = distributed_fdi.matrix_equations.FloatArray


@dataclasses.dataclass(frozen=True, eq=False)
class AgentModel:
    """
    One agent's state-space model ẋ = Ax + Bu + B_f f + B_d d, y = Cx + D_f f + D_d d.

    Attributes:
        agent_id: Identifier in [1, N].
        A, B, B_f, B_d: Dynamics, control-input, fault-input and disturbance-input matrices.
        C, D_f, D_d: Output, fault-feedthrough and disturbance-feedthrough matrices.
    """

    agent_id: int
    A: FloatArray
    B: FloatArray
    B_f: FloatArray
    B_d: FloatArray
    C: FloatArray
    D_f: FloatArray
    D_d: FloatArray

    def __post_init__(self) -> None:
        as_matrix = distributed_fdi.matrix_equations.as_read_only_matrix
        A = as_matrix(self.A)
        number_of_states = A.shape[0]
        C = as_matrix(self.C)
        number_of_outputs = C.shape[0]
        matrices = {
            "A": A,
            "B": as_matrix(self.B, number_of_rows=number_of_states),
            "B_f": as_matrix(self.B_f, number_of_rows=number_of_states),
            "B_d": as_matrix(self.B_d, number_of_rows=number_of_states),
            "C": C,
            "D_f": as_matrix(self.D_f, number_of_rows=number_of_outputs),
            "D_d": as_matrix(self.D_d, number_of_rows=number_of_outputs),
        }
        expected_shapes = {
            "A": (number_of_states, number_of_states),
            "B": (number_of_states, matrices["B"].shape[1]),
            "B_f": (number_of_states, matrices["B_f"].shape[1]),
            "B_d": (number_of_states, matrices["B_d"].shape[1]),
            "C": (number_of_outputs, number_of_states),
            "D_f": (number_of_outputs, matrices["B_f"].shape[1]),
            "D_d": (number_of_outputs, matrices["B_d"].shape[1]),
        }
        for name, expected_shape in expected_shapes.items():
            if matrices[name].shape != expected_shape:
                raise distributed_fdi.exceptions.DimensionMismatchError(
                    f"Agent {self.agent_id}: {name} must be {expected_shape}, got {matrices[name].shape}."
                )
        if matrices["B_f"].shape[1] > number_of_outputs:
            raise distributed_fdi.exceptions.DimensionMismatchError(
                f"Agent {self.agent_id}: more fault channels ({matrices['B_f'].shape[1]}) "
                f"than outputs ({number_of_outputs})."
            )
        for name, matrix in matrices.items():
            object.__setattr__(self, name, matrix)

    @property
    def number_of_states(self) -> int:
        return int(self.A.shape[0])

    @property
    def number_of_control_inputs(self) -> int:
        return int(self.B.shape[1])

    @property
    def number_of_faults(self) -> int:
        return int(self.B_f.shape[1])

    @property
    def number_of_disturbances(self) -> int:
        return int(self.B_d.shape[1])

    @property
    def number_of_outputs(self) -> int:
        return int(self.C.shape[0])


@dataclasses.dataclass(frozen=True)
class Topology:
    """
    Undirected sensing graph over agents 1..N.

    Attributes:
        number_of_agents: N.
        neighbor_sets: For each agent id, its neighbors in ascending order.
    """

    number_of_agents: int
    neighbor_sets: collections.abc.Mapping[int, tuple[int, ...]]

    @property
    def agent_ids(self) -> tuple[int, ...]:
        return tuple(range(1, self.number_of_agents + 1))

    @property
    def edges(self) -> tuple[tuple[int, int], ...]:
        return tuple(
            (agent_id, neighbor_id)
            for agent_id, neighbors in sorted(self.neighbor_sets.items())
            for neighbor_id in neighbors
            if agent_id < neighbor_id
        )

    def neighbors(self, agent_id: int) -> tuple[int, ...]:
        if agent_id not in self.neighbor_sets:
            raise distributed_fdi.exceptions.UnknownAgentError(f"Agent {agent_id} is not part of the topology.")
        return self.neighbor_sets[agent_id]


def build_topology(number_of_agents: int, edges: collections.abc.Iterable[tuple[int, int]]) -> Topology:
    """
    Build the undirected topology from unordered agent pairs.

    Raises:
        SelfLoopError: an edge (i, i).
        AgentIdentifierOutOfRangeError: an endpoint outside [1, N].
        IsolatedAgentError: an agent without neighbors.
    """
    graph = networkx.Graph()
    graph.add_nodes_from(range(1, number_of_agents + 1))
    for first_agent_id, second_agent_id in edges:
        for endpoint in (first_agent_id, second_agent_id):
            if not 1 <= endpoint <= number_of_agents:
                raise distributed_fdi.exceptions.AgentIdentifierOutOfRangeError(
                    f"agent id out of range: edge ({first_agent_id}, {second_agent_id}) with N={number_of_agents}"
                )
        if first_agent_id == second_agent_id:
            raise distributed_fdi.exceptions.SelfLoopError(f"Edge ({first_agent_id}, {second_agent_id}) is a self-loop.")
        graph.add_edge(first_agent_id, second_agent_id)

    isolated_agents = sorted(networkx.isolates(graph))
    if isolated_agents:
        raise distributed_fdi.exceptions.IsolatedAgentError(f"Agent {isolated_agents[0]} has no neighbor.")

    return Topology(
        number_of_agents=number_of_agents,
        neighbor_sets={node: tuple(sorted(graph.neighbors(node))) for node in sorted(graph.nodes)},
    )


@dataclasses.dataclass(frozen=True, eq=False)
class RelativeModel:
    """
    Agent i's stacked neighborhood system.

    ``member_ids`` is (i, i₁, …) and fixes the order of the stacked state,
    input, fault and disturbance vectors.  Row block j of the output-side
    matrices belongs to the neighbor ``member_ids[j + 1]``.
    """

    agent_id: int
    member_ids: tuple[int, ...]
    state_dimensions: tuple[int, ...]
    A: FloatArray
    B_u: FloatArray
    B_f: FloatArray
    B_d: FloatArray
    C_bar: FloatArray
    D_f_bar: FloatArray
    D_d_bar: FloatArray

    @property
    def neighbor_ids(self) -> tuple[int, ...]:
        return self.member_ids[1:]

    @property
    def mu(self) -> int:
        return int(self.A.shape[0])

    @property
    def mu_u(self) -> int:
        return int(self.B_u.shape[1])

    @property
    def mu_f(self) -> int:
        return int(self.B_f.shape[1])

    @property
    def mu_d(self) -> int:
        return int(self.B_d.shape[1])

    @property
    def xi_y(self) -> int:
        return int(self.C_bar.shape[0])

    @property
    def xi_f(self) -> int:
        return int(self.D_f_bar.shape[1])

    @property
    def xi_d(self) -> int:
        return int(self.D_d_bar.shape[1])

    @property
    def output_dimension(self) -> int:
        """Outputs per agent, i.e. rows of one neighbor block."""
        return self.xi_y // len(self.neighbor_ids)

    def state_slices(self) -> dict[int, slice]:
        """Position of each member's state inside the stacked state."""
        offsets = numpy.concatenate([[0], numpy.cumsum(self.state_dimensions)])
        return {
            member_id: slice(int(offsets[position]), int(offsets[position + 1]))
            for position, member_id in enumerate(self.member_ids)
        }

    def with_fault_channels(self, B_f: numpy.typing.ArrayLike, D_f_bar: numpy.typing.ArrayLike) -> "RelativeModel":
        """Copy with replaced fault matrices (for example the sensor-fault substitution)."""
        as_matrix = distributed_fdi.matrix_equations.as_read_only_matrix
        fault_input = as_matrix(B_f, number_of_rows=self.mu)
        fault_feedthrough = as_matrix(D_f_bar, number_of_rows=self.xi_y)
        if fault_input.shape[1] != fault_feedthrough.shape[1]:
            raise distributed_fdi.exceptions.DimensionMismatchError(
                f"Fault matrices disagree on the channel count: {fault_input.shape} vs {fault_feedthrough.shape}."
            )
        return dataclasses.replace(self, B_f=fault_input, D_f_bar=fault_feedthrough)

    def with_disturbance_channels(
        self, B_d: numpy.typing.ArrayLike, D_d_bar: numpy.typing.ArrayLike
    ) -> "RelativeModel":
        as_matrix = distributed_fdi.matrix_equations.as_read_only_matrix
        disturbance_input = as_matrix(B_d, number_of_rows=self.mu)
        disturbance_feedthrough = as_matrix(D_d_bar, number_of_rows=self.xi_y)
        if disturbance_input.shape[1] != disturbance_feedthrough.shape[1]:
            raise distributed_fdi.exceptions.DimensionMismatchError(
                "Disturbance matrices disagree on the channel count: "
                f"{disturbance_input.shape} vs {disturbance_feedthrough.shape}."
            )
        return dataclasses.replace(self, B_d=disturbance_input, D_d_bar=disturbance_feedthrough)


def _relative_output_stack(own: FloatArray, neighbor_blocks: list[FloatArray]) -> FloatArray:
    """Row block j is [own, 0, …, −neighbor_blocks[j], …, 0]."""
    number_of_rows = own.shape[0]
    column_counts = [own.shape[1]] + [block.shape[1] for block in neighbor_blocks]
    column_offsets = numpy.concatenate([[0], numpy.cumsum(column_counts)]).astype(int)
    stacked = numpy.zeros((number_of_rows * len(neighbor_blocks), int(column_offsets[-1])))
    for position, block in enumerate(neighbor_blocks):
        rows = slice(position * number_of_rows, (position + 1) * number_of_rows)
        stacked[rows, : own.shape[1]] = own
        stacked[rows, column_offsets[position + 1] : column_offsets[position + 2]] = -block
    stacked.setflags(write=False)
    return stacked


def _block_diagonal(blocks: list[FloatArray]) -> FloatArray:
    stacked = scipy.linalg.block_diag(*blocks)
    stacked.setflags(write=False)
    return stacked


def build_relative_model(
    agents: collections.abc.Iterable[AgentModel],
    topology: Topology,
    agent_id: int,
) -> RelativeModel:
    """
    Assemble agent ``agent_id``'s relative model from its neighborhood.

    Raises:
        UnknownAgentError: the agent or one of its neighbors has no model.
        DimensionMismatchError: output dimensions differ across the neighborhood.
    """
    agents_by_id = {agent.agent_id: agent for agent in agents}
    member_ids = (agent_id, *topology.neighbors(agent_id))
    missing_ids = [member_id for member_id in member_ids if member_id not in agents_by_id]
    if missing_ids:
        raise distributed_fdi.exceptions.UnknownAgentError(f"No agent model for ids {missing_ids}.")
    members = [agents_by_id[member_id] for member_id in member_ids]
    own, neighbors = members[0], members[1:]

    output_dimensions = {member.number_of_outputs for member in members}
    if len(output_dimensions) != 1:
        raise distributed_fdi.exceptions.DimensionMismatchError(
            f"Neighborhood of agent {agent_id} mixes output dimensions {sorted(output_dimensions)}."
        )

    return RelativeModel(
        agent_id=agent_id,
        member_ids=member_ids,
        state_dimensions=tuple(member.number_of_states for member in members),
        A=_block_diagonal([member.A for member in members]),
        B_u=_block_diagonal([member.B for member in members]),
        B_f=_block_diagonal([member.B_f for member in members]),
        B_d=_block_diagonal([member.B_d for member in members]),
        C_bar=_relative_output_stack(own.C, [neighbor.C for neighbor in neighbors]),
        D_f_bar=_relative_output_stack(own.D_f, [neighbor.D_f for neighbor in neighbors]),
        D_d_bar=_relative_output_stack(own.D_d, [neighbor.D_d for neighbor in neighbors]),
    )


@dataclasses.dataclass(frozen=True)
class NeighborhoodReport:
    """
    Structural checks of a relative model.

    Attributes:
        agent_id: Agent the neighborhood belongs to.
        is_detectable: PBH test at every eigenvalue with nonnegative real part.
        is_observable: PBH test at every eigenvalue.
        unobservable_eigenvalues: Eigenvalues at which the PBH test fails.
        rank_of_noise_covariance: Rank of 𝓓̄_d·𝓓̄_dᵀ.
        dimension_of_noise_covariance: ξ_y.
    """

    agent_id: int
    is_detectable: bool
    is_observable: bool
    unobservable_eigenvalues: tuple[complex, ...]
    rank_of_noise_covariance: int
    dimension_of_noise_covariance: int

    @property
    def is_noise_covariance_nonsingular(self) -> bool:
        return self.rank_of_noise_covariance == self.dimension_of_noise_covariance


def validate_neighborhood(relative_model: RelativeModel) -> NeighborhoodReport:
    """Report detectability of (𝓒̄ᵢ, 𝒜ᵢ) and the rank of the noise covariance; never raises."""
    unobservable = distributed_fdi.matrix_equations.unobservable_eigenvalues(relative_model.A, relative_model.C_bar)
    marginal_threshold = -distributed_fdi.matrix_equations.TOLERANCE_OF_MARGINAL_EIGENVALUES
    noise_covariance = relative_model.D_d_bar @ relative_model.D_d_bar.T
    return NeighborhoodReport(
        agent_id=relative_model.agent_id,
        is_detectable=all(eigenvalue.real < marginal_threshold for eigenvalue in unobservable),
        is_observable=not unobservable,
        unobservable_eigenvalues=tuple(unobservable),
        rank_of_noise_covariance=int(numpy.linalg.matrix_rank(noise_covariance)) if noise_covariance.size else 0,
        dimension_of_noise_covariance=relative_model.xi_y,
    )
