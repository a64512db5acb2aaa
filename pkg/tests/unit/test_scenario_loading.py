"""Tests for distributed_fdi/cli/scenario_loading.py and the scenario schema."""

import json

import numpy
import pytest

import distributed_fdi.cli.scenario_loading
import distributed_fdi.exceptions

loading = distributed_fdi.cli.scenario_loading


class TestParseScenarioText:
    def test_tiny_document(self, tiny_scenario_document):
        scenario = loading.parse_scenario_text(json.dumps(tiny_scenario_document))

        assert scenario.number_of_agents == 2
        assert scenario.edges == [(1, 2)]
        assert scenario.seed == 3
        assert scenario.evaluation.window_length_in_samples(scenario.step) == 20
        assert scenario.synthesis.number_of_points_in_verification_grid == 200

    def test_malformed_json_reports_the_position(self):
        with pytest.raises(distributed_fdi.exceptions.ScenarioParseError, match="line 2, column"):
            loading.parse_scenario_text('{"agents": [\n  oops]}', source="broken.json")

    def test_missing_topology(self, tiny_scenario_document):
        del tiny_scenario_document["topology"]

        with pytest.raises(distributed_fdi.exceptions.ScenarioValidationError, match="topology required"):
            loading.parse_scenario_text(json.dumps(tiny_scenario_document))

    def test_edge_to_an_unknown_agent(self, tiny_scenario_document):
        tiny_scenario_document["topology"]["edges"].append([2, 3])

        with pytest.raises(distributed_fdi.exceptions.ScenarioValidationError, match="agent id out of range"):
            loading.parse_scenario_text(json.dumps(tiny_scenario_document))

    def test_agent_ids_must_be_consecutive(self, tiny_scenario_document):
        tiny_scenario_document["agents"][1]["id"] = 5

        with pytest.raises(distributed_fdi.exceptions.ScenarioValidationError, match="exactly 1..2"):
            loading.parse_scenario_text(json.dumps(tiny_scenario_document))

    def test_ragged_matrix(self, tiny_scenario_document):
        tiny_scenario_document["agents"][0]["A"] = [[-1.0], [0.0, 1.0]]

        with pytest.raises(distributed_fdi.exceptions.ScenarioValidationError, match="agents.0.A"):
            loading.parse_scenario_text(json.dumps(tiny_scenario_document))

    def test_misspelt_field(self, tiny_scenario_document):
        tiny_scenario_document["horizn"] = 3.0

        with pytest.raises(distributed_fdi.exceptions.ScenarioValidationError, match="horizn"):
            loading.parse_scenario_text(json.dumps(tiny_scenario_document))

    def test_reversed_decision_window(self, tiny_scenario_document):
        tiny_scenario_document["evaluation"]["decision_windows"] = [[1.0, 0.5]]

        with pytest.raises(distributed_fdi.exceptions.ScenarioValidationError, match="decision window"):
            loading.parse_scenario_text(json.dumps(tiny_scenario_document))


class TestParseScenario:
    def test_reads_a_file(self, tmp_path, tiny_scenario_document):
        path = tmp_path / "tiny.json"
        path.write_text(json.dumps(tiny_scenario_document), encoding="utf-8")

        assert loading.parse_scenario(path).name == "two scalar agents"

    def test_missing_file(self, tmp_path):
        with pytest.raises(distributed_fdi.exceptions.ScenarioParseError, match="absent.json"):
            loading.parse_scenario(tmp_path / "absent.json")


class TestPresets:
    def test_actuator_preset(self, four_agent_scenario):
        agents = four_agent_scenario.agent_models()

        assert four_agent_scenario.kind == "actuator"
        assert four_agent_scenario.edges == [(1, 2), (1, 3), (1, 4), (2, 3)]
        assert [agent.number_of_states for agent in agents] == [2, 2, 4, 3]
        for agent in agents:
            numpy.testing.assert_array_equal(agent.B_f, agent.B)
            numpy.testing.assert_array_equal(agent.D_f, 0.0)

    def test_sensor_preset(self):
        scenario = loading.load_preset(2)

        assert scenario.kind == "sensor"
        assert scenario.design_options().relative_fault_model == "output_identity"
        for agent in scenario.agent_models():
            numpy.testing.assert_array_equal(agent.B_f, 0.0)
            numpy.testing.assert_array_equal(agent.D_f, numpy.eye(agent.number_of_outputs))
            assert len(scenario.signals[agent.agent_id].f) == agent.number_of_outputs

    def test_sensor_kind_keeps_the_file_fault_matrices_in_the_echo(self):
        scenario = loading.load_preset(2)

        echoed = {agent["id"]: agent for agent in scenario.model_dump()["agents"]}

        assert echoed[1]["D_f"] == [[0.45], [0.2]]
        assert echoed[1]["B_f"] == [[0.3], [0.1]]

    def test_unknown_preset(self):
        with pytest.raises(distributed_fdi.exceptions.ScenarioValidationError, match="Unknown preset"):
            loading.load_preset(3)


class TestSeedAndOverrides:
    @pytest.mark.parametrize(
        ("flag", "environment", "expected"),
        [(11, 22, 11), (None, 22, 22), (None, None, 3), (0, 22, 0)],
    )
    def test_seed_precedence(self, flag, environment, expected):
        assert loading.resolve_seed(flag, environment, 3) == expected

    def test_overrides_are_revalidated(self, tiny_scenario):
        overridden = loading.apply_overrides(tiny_scenario, seed=8, step=0.005, horizon=1.0)

        assert (overridden.seed, overridden.step, overridden.horizon) == (8, 0.005, 1.0)
        assert tiny_scenario.seed == 3

    def test_invalid_override(self, tiny_scenario):
        with pytest.raises(distributed_fdi.exceptions.ScenarioValidationError, match="step"):
            loading.apply_overrides(tiny_scenario, step=-1.0)
