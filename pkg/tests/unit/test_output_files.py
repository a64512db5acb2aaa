"""Tests for distributed_fdi/integrations/output_files.py."""

import numpy
import pytest

import distributed_fdi.exceptions
import distributed_fdi.fdi_evaluation
import distributed_fdi.integrations.output_files
import distributed_fdi.network_model
import distributed_fdi.simulation

output_files = distributed_fdi.integrations.output_files


@pytest.fixture
def trajectory(tiny_scenario):
    agents = tiny_scenario.agent_models()
    topology = tiny_scenario.topology_model()
    gains = {
        1: numpy.array([[0.3], [-0.2]]),
        2: numpy.array([[-0.4], [0.1]]),
    }
    return distributed_fdi.simulation.simulate_network(
        agents,
        topology,
        gains,
        tiny_scenario.agent_signals(),
        {1: [0.2], 2: [-0.1]},
        tiny_scenario.horizon,
        tiny_scenario.step,
        tiny_scenario.seed,
    )


class TestTrajectoryCsv:
    def test_column_names(self, trajectory):
        assert output_files.trajectory_column_names(trajectory) == [
            "time",
            "a1_x1",
            "a1_xhat1",
            "a1_xhat2",
            "a1_r2_1",
            "a1_u1",
            "a1_d1",
            "a1_f1",
            "a2_x1",
            "a2_xhat1",
            "a2_xhat2",
            "a2_r1_1",
            "a2_u1",
            "a2_d1",
            "a2_f1",
        ]

    def test_read_back_is_exact(self, tmp_path, trajectory):
        path = tmp_path / output_files.NAME_OF_TRAJECTORY
        output_files.write_trajectory_csv(path, trajectory)

        restored = output_files.read_trajectory_csv(path)

        numpy.testing.assert_array_equal(restored.time, trajectory.time)
        assert restored.member_ids == {1: (1, 2), 2: (2, 1)}
        for agent_id in trajectory.agent_ids:
            numpy.testing.assert_array_equal(restored.states[agent_id], trajectory.states[agent_id])
            numpy.testing.assert_array_equal(restored.estimates[agent_id], trajectory.estimates[agent_id])
            numpy.testing.assert_array_equal(restored.residuals[agent_id], trajectory.residuals[agent_id])
            numpy.testing.assert_array_equal(restored.disturbances[agent_id], trajectory.disturbances[agent_id])

    def test_evaluation_of_the_read_back_is_byte_identical(self, tmp_path, trajectory):
        trajectory_path = tmp_path / output_files.NAME_OF_TRAJECTORY
        output_files.write_trajectory_csv(trajectory_path, trajectory)
        thresholds = distributed_fdi.fdi_evaluation.Thresholds(per_agent={1: 0.05, 2: 0.05})

        output_files.write_evaluation_csv(
            tmp_path / "original.csv", distributed_fdi.fdi_evaluation.evaluate_trajectory(trajectory, 20), thresholds
        )
        output_files.write_evaluation_csv(
            tmp_path / "restored.csv",
            distributed_fdi.fdi_evaluation.evaluate_trajectory(output_files.read_trajectory_csv(trajectory_path), 20),
            thresholds,
        )

        assert (tmp_path / "original.csv").read_bytes() == (tmp_path / "restored.csv").read_bytes()

    def test_missing_file(self, tmp_path):
        with pytest.raises(distributed_fdi.exceptions.ScenarioParseError, match="does not exist"):
            output_files.read_trajectory_csv(tmp_path / "absent.csv")

    def test_header_must_start_with_time(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a1_x1,time\n0,0\n", encoding="utf-8")

        with pytest.raises(distributed_fdi.exceptions.ScenarioParseError, match="'time'"):
            output_files.read_trajectory_csv(path)

    def test_unknown_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("time,a1_x1,a1_speed\n0,0,0\n", encoding="utf-8")

        with pytest.raises(distributed_fdi.exceptions.ScenarioParseError, match="a1_speed"):
            output_files.read_trajectory_csv(path)


class TestEvaluationCsv:
    def test_header_and_flags(self, tmp_path, trajectory):
        evaluation = distributed_fdi.fdi_evaluation.evaluate_trajectory(trajectory, 20)
        thresholds = distributed_fdi.fdi_evaluation.Thresholds(per_agent={1: 0.0, 2: numpy.inf})
        path = tmp_path / output_files.NAME_OF_EVALUATION

        output_files.write_evaluation_csv(path, evaluation, thresholds)

        header, *rows = path.read_text(encoding="utf-8").splitlines()
        assert header == "time,a1_J2_1,a2_J1_1,a1_flag2_1,a2_flag1_1"
        assert len(rows) == trajectory.time.size
        table = numpy.loadtxt(path, delimiter=",", skiprows=1)
        numpy.testing.assert_array_equal(table[:, 4], 0.0)
        numpy.testing.assert_array_equal(table[:, 3], (evaluation.values[1][:, 0] > 0.0).astype(float))


class TestSummary:
    def test_lines_end_with_a_newline(self, tmp_path):
        path = tmp_path / output_files.NAME_OF_SUMMARY

        output_files.write_summary(path, ["first", "second"])

        assert path.read_text(encoding="utf-8") == "first\nsecond\n"
