"""
Residual evaluation, threshold calibration, fault patterns and isolation.

Each residual channel is evaluated by a causal sliding root mean square.  A
channel flag is raised in a decision window when its evaluation stays above
the agent's threshold for at least the debounce time.  The flags of agent i
form its fault pattern Υᵢ: one block per neighbor, one flag per output
channel.  ``isolate`` combines all patterns of one window into a verdict.

Isolation rules
---------------
1. Every block of Υᵢ is set: agent i is faulty.
2. Exactly one block of Υᵢ is set, for neighbor j: neighbor j is faulty.
3. At least two agents point at the same j by rule 2 and Υⱼ is fully set:
   j is faulty by inference.

Verdicts naming one culprit merge.  Verdicts naming several culprits are
reconciled by the block signature a single fault at c leaves behind (block j
of Υᵢ set exactly when i = c or j = c); one consistent candidate wins,
otherwise the window is ambiguous.
"""

import collections.abc
import concurrent.futures
import dataclasses
import typing

import numpy
import numpy.typing
import structlog

import distributed_fdi.exceptions
import distributed_fdi.matrix_equations
import distributed_fdi.network_model
import distributed_fdi.simulation

logger = structlog.get_logger()

FloatArray = distributed_fdi.matrix_equations.FloatArray

VerdictStatus = typing.Literal["no_fault", "agent_faulty", "neighbor_faulty", "inferred_faulty", "ambiguous"]

_PRIORITY_OF_STATUS: dict[str, int] = {"agent_faulty": 3, "inferred_faulty": 2, "neighbor_faulty": 1}


def evaluate_residual(residual: numpy.typing.ArrayLike, window_length_in_samples: int) -> FloatArray:
    """
    Causal sliding root mean square over the last ``window_length_in_samples`` samples.

    Columns are evaluated independently.  Within the first window the mean
    runs over the samples available so far.
    """
    if window_length_in_samples < 1:
        raise ValueError("window_length_in_samples must be at least 1")
    samples = numpy.asarray(residual, dtype=numpy.float64)
    squares = numpy.square(samples)
    cumulative = numpy.cumsum(squares, axis=0)
    windowed = cumulative.copy()
    if samples.shape[0] > window_length_in_samples:
        windowed[window_length_in_samples:] = (
            cumulative[window_length_in_samples:] - cumulative[:-window_length_in_samples]
        )
    counts = numpy.minimum(numpy.arange(1, samples.shape[0] + 1), window_length_in_samples).astype(numpy.float64)
    counts = counts.reshape((-1,) + (1,) * (samples.ndim - 1))
    return numpy.sqrt(numpy.maximum(windowed / counts, 0.0))


@dataclasses.dataclass(frozen=True, eq=False)
class EvaluationSeries:
    """
    Evaluated residuals of every agent.

    ``values[i]`` has one column per neighbor block and output channel, in the
    residual's own order (block-major).
    """

    time: FloatArray
    window_length_in_samples: int
    member_ids: collections.abc.Mapping[int, tuple[int, ...]]
    values: collections.abc.Mapping[int, FloatArray]

    def neighbor_ids(self, agent_id: int) -> tuple[int, ...]:
        return self.member_ids[agent_id][1:]

    def output_dimension(self, agent_id: int) -> int:
        return self.values[agent_id].shape[1] // len(self.neighbor_ids(agent_id))


def evaluate_trajectory(
    trajectory: distributed_fdi.simulation.Trajectory,
    window_length_in_samples: int,
) -> EvaluationSeries:
    return EvaluationSeries(
        time=trajectory.time,
        window_length_in_samples=window_length_in_samples,
        member_ids=dict(trajectory.member_ids),
        values={
            agent_id: evaluate_residual(trajectory.residuals[agent_id], window_length_in_samples)
            for agent_id in trajectory.agent_ids
        },
    )


@dataclasses.dataclass(frozen=True, eq=False)
class Thresholds:
    """
    Detection thresholds with their calibration record.

    Attributes:
        per_agent: J_thᵢ per agent id.
        per_channel: Optional channel-wise thresholds per agent id.
        number_of_runs: Monte Carlo runs behind the values.
        seeds: Master seed of every run.
        safety_factor: Multiplier applied to the observed supremum.
        settle_time: Initial seconds excluded from the supremum.
        window_length_in_samples: Evaluation window used during calibration.
    """

    per_agent: collections.abc.Mapping[int, float]
    per_channel: collections.abc.Mapping[int, FloatArray] | None = None
    number_of_runs: int = 0
    seeds: tuple[int, ...] = ()
    safety_factor: float = 1.0
    settle_time: float = 0.0
    window_length_in_samples: int = 1

    def for_channels(self, agent_id: int, number_of_channels: int) -> FloatArray:
        """Threshold of every residual channel of ``agent_id``."""
        if self.per_channel is not None and agent_id in self.per_channel:
            return numpy.asarray(self.per_channel[agent_id], dtype=numpy.float64)
        return numpy.full(number_of_channels, float(self.per_agent[agent_id]))


def _supremum_after_settling(
    evaluation: EvaluationSeries, settle_time: float
) -> dict[int, FloatArray]:
    settled = evaluation.time >= settle_time - 1e-9
    if not numpy.any(settled):
        raise distributed_fdi.exceptions.ScenarioValidationError("settle time must be below the horizon")
    return {agent_id: numpy.max(values[settled], axis=0) for agent_id, values in evaluation.values.items()}


def calibrate_thresholds(
    scenario: distributed_fdi.simulation.NetworkScenario,
    number_of_runs: int = 20,
    safety_factor: float = 1.2,
    settle_time: float = 5.0,
    window_length_in_samples: int = 2000,
    per_channel: bool = False,
    maximum_number_of_worker_threads: int = 1,
) -> Thresholds:
    """
    Fault-free Monte Carlo thresholds: safety × sup over runs, time after
    ``settle_time`` and channels of the sliding RMS.

    Runs use the scenario's inputs with its faults removed and master seeds
    spawned from the scenario's master seed, so reruns are identical.
    Channels whose noise seed is pinned in the signal specification repeat
    the same stream in every run.
    """
    if number_of_runs < 1:
        raise distributed_fdi.exceptions.ScenarioValidationError("calibration needs at least one run")
    if safety_factor < 1.0:
        raise distributed_fdi.exceptions.ScenarioValidationError("the safety factor must be at least 1")

    fault_free = scenario.without_faults()
    seeds = tuple(
        int(child.generate_state(1)[0])
        for child in numpy.random.SeedSequence(scenario.master_seed).spawn(number_of_runs)
    )

    def run_once(seed: int) -> dict[int, FloatArray]:
        trajectory = distributed_fdi.simulation.simulate_scenario(
            fault_free.with_master_seed(seed), purpose="calibration"
        )
        return _supremum_after_settling(evaluate_trajectory(trajectory, window_length_in_samples), settle_time)

    with concurrent.futures.ThreadPoolExecutor(
        max_workers=maximum_number_of_worker_threads,
        thread_name_prefix="threshold_calibration",
    ) as executor:
        suprema_of_runs = list(executor.map(run_once, seeds))

    channel_suprema = {
        agent_id: safety_factor * numpy.max(numpy.vstack([suprema[agent_id] for suprema in suprema_of_runs]), axis=0)
        for agent_id in suprema_of_runs[0]
    }
    thresholds = Thresholds(
        per_agent={agent_id: float(numpy.max(values)) for agent_id, values in channel_suprema.items()},
        per_channel=channel_suprema if per_channel else None,
        number_of_runs=number_of_runs,
        seeds=seeds,
        safety_factor=safety_factor,
        settle_time=settle_time,
        window_length_in_samples=window_length_in_samples,
    )
    logger.info(
        "threshold_calibration_completed",
        number_of_runs=number_of_runs,
        thresholds={str(agent_id): value for agent_id, value in thresholds.per_agent.items()},
    )
    return thresholds


# ──────────────────────────────────────────────────────────────────────────────
#  Fault patterns
# ──────────────────────────────────────────────────────────────────────────────


@dataclasses.dataclass(frozen=True)
class FaultPattern:
    """
    Flags of one agent over one decision window.

    ``flags[b][k]`` is the flag of output channel k in the block of neighbor
    ``neighbor_ids[b]``.
    """

    agent_id: int
    neighbor_ids: tuple[int, ...]
    flags: tuple[tuple[int, ...], ...]
    window: tuple[float, float]

    @property
    def set_blocks(self) -> tuple[bool, ...]:
        return tuple(any(block) for block in self.flags)

    @property
    def all_blocks_set(self) -> bool:
        return all(self.set_blocks)

    @property
    def is_zero(self) -> bool:
        return not any(self.set_blocks)

    @property
    def flagged_neighbor_ids(self) -> tuple[int, ...]:
        return tuple(neighbor for neighbor, is_set in zip(self.neighbor_ids, self.set_blocks, strict=True) if is_set)

    def block_is_set(self, neighbor_id: int) -> bool:
        return self.set_blocks[self.neighbor_ids.index(neighbor_id)]

    def bitstring(self) -> str:
        """Blocks separated by commas, channels as digits, e.g. ``00,00,11``."""
        return ",".join("".join(str(flag) for flag in block) for block in self.flags)


def _longest_run_of_true(values: numpy.ndarray) -> int:
    if not values.size:
        return 0
    padded = numpy.concatenate([[0], values.astype(numpy.int8), [0]])
    changes = numpy.flatnonzero(numpy.diff(padded))
    if not changes.size:
        return 0
    return int(numpy.max(changes[1::2] - changes[0::2]))


def exceedances(evaluation: EvaluationSeries, thresholds: Thresholds) -> dict[int, numpy.ndarray]:
    """Sample-wise 1{J > threshold} of every residual channel."""
    return {
        agent_id: values > thresholds.for_channels(agent_id, values.shape[1])
        for agent_id, values in evaluation.values.items()
    }


def generate_flags(
    evaluation: EvaluationSeries,
    thresholds: Thresholds,
    window: tuple[float, float],
    debounce_time: float = 0.2,
) -> dict[int, FaultPattern]:
    """
    Fault pattern of every agent over ``window`` (both ends included).

    A channel flag is 1 when its evaluation exceeds the threshold on at least
    ``debounce_time`` seconds of consecutive samples inside the window.
    """
    start, stop = window
    step = float(evaluation.time[1] - evaluation.time[0]) if evaluation.time.size > 1 else 1.0
    inside = (evaluation.time >= start - 1e-9) & (evaluation.time <= stop + 1e-9)
    debounce_samples = max(1, round(debounce_time / step))

    patterns: dict[int, FaultPattern] = {}
    for agent_id, exceeded in exceedances(evaluation, thresholds).items():
        number_of_channels = exceeded.shape[1]
        channel_flags = [
            int(_longest_run_of_true(exceeded[inside, channel]) >= debounce_samples)
            for channel in range(number_of_channels)
        ]
        output_dimension = evaluation.output_dimension(agent_id)
        patterns[agent_id] = FaultPattern(
            agent_id=agent_id,
            neighbor_ids=evaluation.neighbor_ids(agent_id),
            flags=tuple(
                tuple(channel_flags[block * output_dimension : (block + 1) * output_dimension])
                for block in range(len(evaluation.neighbor_ids(agent_id)))
            ),
            window=(float(start), float(stop)),
        )
    return patterns


# ──────────────────────────────────────────────────────────────────────────────
#  Isolation
# ──────────────────────────────────────────────────────────────────────────────


@dataclasses.dataclass(frozen=True)
class Verdict:
    """
    Isolation conclusion for one window.

    Attributes:
        status: no_fault, agent_faulty, neighbor_faulty, inferred_faulty or ambiguous.
        culprit: Agent concluded faulty, if any.
        reporter: Agent whose pattern produced the conclusion.
        window: Decision window in seconds.
        evidence: Bitstring of every agent's pattern.
        candidates: Every agent some rule pointed at.
    """

    status: VerdictStatus
    culprit: int | None
    reporter: int | None
    window: tuple[float, float]
    evidence: collections.abc.Mapping[int, str]
    candidates: tuple[int, ...] = ()


def _matches_single_fault_signature(
    candidate: int, patterns: collections.abc.Mapping[int, FaultPattern]
) -> bool:
    return all(
        is_set == (pattern.agent_id == candidate or neighbor_id == candidate)
        for pattern in patterns.values()
        for neighbor_id, is_set in zip(pattern.neighbor_ids, pattern.set_blocks, strict=True)
    )


def isolate(
    patterns: collections.abc.Mapping[int, FaultPattern],
    topology: distributed_fdi.network_model.Topology,
) -> list[Verdict]:
    """Apply the isolation rules to all patterns of one window and reconcile them into one verdict."""
    missing = [agent_id for agent_id in topology.agent_ids if agent_id not in patterns]
    if missing:
        raise distributed_fdi.exceptions.UnknownAgentError(f"No fault pattern for agents {missing}.")
    window = next(iter(patterns.values())).window
    evidence = {agent_id: patterns[agent_id].bitstring() for agent_id in sorted(patterns)}

    rule_verdicts: list[tuple[VerdictStatus, int, int]] = []
    pointers: dict[int, list[int]] = collections.defaultdict(list)
    for agent_id in sorted(patterns):
        pattern = patterns[agent_id]
        if pattern.all_blocks_set:
            rule_verdicts.append(("agent_faulty", agent_id, agent_id))
        flagged = pattern.flagged_neighbor_ids
        if len(flagged) == 1:
            rule_verdicts.append(("neighbor_faulty", flagged[0], agent_id))
            pointers[flagged[0]].append(agent_id)
    for suspect, reporters in sorted(pointers.items()):
        if len(reporters) >= 2 and patterns[suspect].all_blocks_set:
            rule_verdicts.append(("inferred_faulty", suspect, reporters[0]))

    if not rule_verdicts:
        status: VerdictStatus = "no_fault" if all(p.is_zero for p in patterns.values()) else "ambiguous"
        return [Verdict(status=status, culprit=None, reporter=None, window=window, evidence=evidence)]

    candidates = tuple(sorted({culprit for _, culprit, _ in rule_verdicts}))
    if len(candidates) > 1:
        consistent = [candidate for candidate in candidates if _matches_single_fault_signature(candidate, patterns)]
        if len(consistent) != 1:
            return [
                Verdict(
                    status="ambiguous",
                    culprit=None,
                    reporter=None,
                    window=window,
                    evidence=evidence,
                    candidates=candidates,
                )
            ]
        culprit = consistent[0]
    else:
        culprit = candidates[0]

    status, _, reporter = max(
        (verdict for verdict in rule_verdicts if verdict[1] == culprit),
        key=lambda verdict: _PRIORITY_OF_STATUS[verdict[0]],
    )
    return [
        Verdict(
            status=status,
            culprit=culprit,
            reporter=reporter,
            window=window,
            evidence=evidence,
            candidates=candidates,
        )
    ]
