"""
Writers and readers of the files in a run's output directory.

CSV files hold one row per sample with a header of column names.  Every float
is written with 17 significant digits by default, which round-trips doubles
exactly, so reading ``trajectory.csv`` back and evaluating it reproduces
``evaluation.csv`` byte for byte.

Trajectory columns, per agent i in ascending order::

    a<i>_x<k>       true state k
    a<i>_xhat<k>    observer state k of the stacked neighborhood estimate
    a<i>_r<j>_<k>   residual channel k of the block of neighbor j
    a<i>_u<k>, a<i>_d<k>, a<i>_f<k>   applied signals

Evaluation columns are ``a<i>_J<j>_<k>`` (sliding RMS) followed by
``a<i>_flag<j>_<k>`` (1 when the sample exceeds the threshold).
"""

import collections
import pathlib
import re

import numpy
import pydantic

import distributed_fdi.exceptions
import distributed_fdi.fdi_evaluation
import distributed_fdi.simulation

NAME_OF_SYNTHESIS_REPORT = "synthesis_report.json"
NAME_OF_TRAJECTORY = "trajectory.csv"
NAME_OF_EVALUATION = "evaluation.csv"
NAME_OF_VERDICTS = "verdicts.json"
NAME_OF_SUMMARY = "summary.txt"
NAME_OF_EFFECTIVE_CONFIGURATION = "effective_config.json"
NAME_OF_THRESHOLDS = "thresholds.json"

_SIGNAL_OR_STATE_COLUMN = re.compile(r"^a(?P<agent>\d+)_(?P<kind>xhat|x|u|d|f)(?P<index>\d+)$")
_RESIDUAL_COLUMN = re.compile(r"^a(?P<agent>\d+)_r(?P<neighbor>\d+)_(?P<index>\d+)$")


def write_json_model(path: pathlib.Path, model: pydantic.BaseModel) -> None:
    path.write_text(model.model_dump_json(indent=2) + "\n", encoding="utf-8")


def _write_csv(path: pathlib.Path, names: list[str], columns: list[numpy.ndarray], significant_digits: int) -> None:
    table = numpy.column_stack(columns) if columns else numpy.zeros((0, 0))
    numpy.savetxt(
        path,
        table,
        fmt=f"%.{significant_digits}g",
        delimiter=",",
        header=",".join(names),
        comments="",
    )


# ──────────────────────────────────────────────────────────────────────────────
#  Trajectory
# ──────────────────────────────────────────────────────────────────────────────


def trajectory_column_names(trajectory: distributed_fdi.simulation.Trajectory) -> list[str]:
    names = ["time"]
    for agent_id in trajectory.agent_ids:
        names += [f"a{agent_id}_x{k + 1}" for k in range(trajectory.states[agent_id].shape[1])]
        names += [f"a{agent_id}_xhat{k + 1}" for k in range(trajectory.estimates[agent_id].shape[1])]
        output_dimension = trajectory.output_dimension(agent_id)
        names += [
            f"a{agent_id}_r{neighbor_id}_{k + 1}"
            for neighbor_id in trajectory.neighbor_ids(agent_id)
            for k in range(output_dimension)
        ]
        for kind, series in (
            ("u", trajectory.control_inputs),
            ("d", trajectory.disturbances),
            ("f", trajectory.faults),
        ):
            names += [f"a{agent_id}_{kind}{k + 1}" for k in range(series[agent_id].shape[1])]
    return names


def write_trajectory_csv(
    path: pathlib.Path,
    trajectory: distributed_fdi.simulation.Trajectory,
    significant_digits: int = 17,
) -> None:
    columns = [trajectory.time]
    for agent_id in trajectory.agent_ids:
        columns += [
            trajectory.states[agent_id],
            trajectory.estimates[agent_id],
            trajectory.residuals[agent_id],
            trajectory.control_inputs[agent_id],
            trajectory.disturbances[agent_id],
            trajectory.faults[agent_id],
        ]
    _write_csv(path, trajectory_column_names(trajectory), columns, significant_digits)


def read_trajectory_csv(path: pathlib.Path) -> distributed_fdi.simulation.Trajectory:
    """
    Rebuild a ``Trajectory`` from ``trajectory.csv``.

    Raises:
        ScenarioParseError: the file is missing or its header is not a trajectory header.
    """
    if not path.is_file():
        raise distributed_fdi.exceptions.ScenarioParseError(f"{path} does not exist.")
    with path.open(encoding="utf-8") as handle:
        names = handle.readline().strip().split(",")
    if not names or names[0] != "time":
        raise distributed_fdi.exceptions.ScenarioParseError(f"{path}: the first column must be 'time'.")
    table = numpy.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)

    columns_by_kind: dict[str, dict[int, list[int]]] = collections.defaultdict(lambda: collections.defaultdict(list))
    neighbors: dict[int, list[int]] = collections.defaultdict(list)
    agent_ids: list[int] = []
    for position, name in enumerate(names[1:], start=1):
        if match := _RESIDUAL_COLUMN.match(name):
            agent_id, kind = int(match["agent"]), "r"
            neighbor_id = int(match["neighbor"])
            if neighbor_id not in neighbors[agent_id]:
                neighbors[agent_id].append(neighbor_id)
        elif match := _SIGNAL_OR_STATE_COLUMN.match(name):
            agent_id, kind = int(match["agent"]), match["kind"]
        else:
            raise distributed_fdi.exceptions.ScenarioParseError(f"{path}: unknown column '{name}'.")
        if agent_id not in agent_ids:
            agent_ids.append(agent_id)
        columns_by_kind[kind][agent_id].append(position)

    def block(kind: str, agent_id: int) -> numpy.ndarray:
        return numpy.ascontiguousarray(table[:, columns_by_kind[kind][agent_id]])

    agent_ids.sort()
    return distributed_fdi.simulation.Trajectory(
        time=numpy.ascontiguousarray(table[:, 0]),
        member_ids={agent_id: (agent_id, *neighbors[agent_id]) for agent_id in agent_ids},
        states={agent_id: block("x", agent_id) for agent_id in agent_ids},
        estimates={agent_id: block("xhat", agent_id) for agent_id in agent_ids},
        residuals={agent_id: block("r", agent_id) for agent_id in agent_ids},
        control_inputs={agent_id: block("u", agent_id) for agent_id in agent_ids},
        disturbances={agent_id: block("d", agent_id) for agent_id in agent_ids},
        faults={agent_id: block("f", agent_id) for agent_id in agent_ids},
    )


# ──────────────────────────────────────────────────────────────────────────────
#  Evaluation
# ──────────────────────────────────────────────────────────────────────────────


def write_evaluation_csv(
    path: pathlib.Path,
    evaluation: distributed_fdi.fdi_evaluation.EvaluationSeries,
    thresholds: distributed_fdi.fdi_evaluation.Thresholds,
    significant_digits: int = 17,
) -> None:
    agent_ids = sorted(evaluation.values)
    exceedances = distributed_fdi.fdi_evaluation.exceedances(evaluation, thresholds)

    def channel_names(agent_id: int, label: str) -> list[str]:
        return [
            f"a{agent_id}_{label}{neighbor_id}_{k + 1}"
            for neighbor_id in evaluation.neighbor_ids(agent_id)
            for k in range(evaluation.output_dimension(agent_id))
        ]

    names = ["time"]
    columns = [evaluation.time]
    for agent_id in agent_ids:
        names += channel_names(agent_id, "J")
        columns.append(evaluation.values[agent_id])
    for agent_id in agent_ids:
        names += channel_names(agent_id, "flag")
        columns.append(exceedances[agent_id].astype(numpy.float64))
    _write_csv(path, names, columns, significant_digits)


def write_summary(path: pathlib.Path, lines: list[str]) -> None:
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
