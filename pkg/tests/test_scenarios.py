"""Scenario loading, validation, and trace serialization tests."""

import csv
import json

import numpy as np
import pytest

from beliefrhc import (
    EpisodeConfig,
    LightDarkObservation,
    LinearProcess,
    load_scenario,
    run_episode,
    scenario_to_dict,
    validate_scenario,
    write_trace,
)
from beliefrhc.errors import ConfigurationError
from beliefrhc.scenarios import (
    BUILTIN_NAMES,
    control_weight_matrix,
    scenario_from_dict,
    trace_header,
)


class TestBuiltins:
    def test_all_builtin_scenarios_load_cleanly(self):
        assert set(BUILTIN_NAMES) == {
            "light_dark", "two_walls", "house", "house_short"
        }
        for name in BUILTIN_NAMES:
            scenario = load_scenario(name)
            assert scenario.name == name
            assert validate_scenario(scenario) == []

    def test_light_dark_matches_published_setup(self, light_dark):
        process = light_dark.process
        assert isinstance(process, LinearProcess)
        np.testing.assert_array_equal(process.A, np.eye(2))
        np.testing.assert_array_equal(process.B, np.eye(2))
        assert isinstance(light_dark.observation, LightDarkObservation)
        belief = light_dark.initial_belief
        np.testing.assert_array_equal(belief.weights, [0.5, 0.5])
        np.testing.assert_array_equal(belief.means, [[1.75, 0.0], [2.0, 0.5]])
        np.testing.assert_allclose(belief.covs, [0.0625 * np.eye(2)] * 2)
        np.testing.assert_array_equal(light_dark.goal.state, [0.0, 0.0])
        defaults = light_dark.defaults
        assert defaults.horizon == 20
        assert float(defaults.control_weight) == 0.065
        assert defaults.control_limit == 3.16
        assert defaults.beta == 0

    def test_obstacle_scenarios_enable_penalty(self, two_walls):
        assert two_walls.defaults.beta == 1
        assert two_walls.obstacles.num_terms > 0
        house = load_scenario("house")
        assert house.obstacles.num_terms > 0
        assert house.defaults.horizon == 100

    def test_unknown_scenario_name_is_a_configuration_error(self):
        with pytest.raises(ConfigurationError):
            load_scenario("no_such_scenario")


class TestRoundTrip:
    @pytest.mark.parametrize("name", sorted(BUILTIN_NAMES))
    def test_dump_and_reload_preserves_scenario(self, name, tmp_path):
        original = load_scenario(name)
        dumped = scenario_to_dict(original)
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(dumped))
        reloaded = load_scenario(path)
        assert scenario_to_dict(reloaded) == dumped

    def test_dump_is_json_serializable(self, light_dark):
        json.dumps(scenario_to_dict(light_dark))


def minimal_scenario_dict():
    return {
        "schema_version": "1",
        "name": "minimal",
        "process": {
            "type": "linear",
            "A": [[1.0, 0.0], [0.0, 1.0]],
            "B": [[1.0, 0.0], [0.0, 1.0]],
            "noise_std": [0.0, 0.0],
        },
        "observation": {"type": "light_dark"},
        "initial_belief": {
            "weights": [1.0],
            "means": [[1.0, 0.0]],
            "variances": [0.01],
        },
        "goal": {"state": [0.0, 0.0], "radius": 0.5, "threshold": 0.5},
        "obstacles": {"penalty": 100.0, "ellipsoids": [], "rectangles": []},
        "defaults": {
            "horizon": 4,
            "num_particles": 50,
            "control_weight": 1.0,
            "control_limit": None,
            "beta": 0,
            "replan_period": 1,
            "max_steps": 10,
        },
    }


class TestSchemaValidation:
    def test_minimal_scenario_builds(self):
        scenario = scenario_from_dict(minimal_scenario_dict())
        assert scenario.name == "minimal"
        assert scenario.n_x == 2 and scenario.n_u == 2

    def test_missing_field_is_reported_with_its_path(self):
        data = minimal_scenario_dict()
        del data["goal"]
        with pytest.raises(ConfigurationError, match="goal"):
            scenario_from_dict(data)

    def test_unknown_process_type_rejected(self):
        data = minimal_scenario_dict()
        data["process"]["type"] = "hovercraft"
        with pytest.raises(ConfigurationError):
            scenario_from_dict(data)

    def test_wrong_schema_version_rejected(self):
        data = minimal_scenario_dict()
        data["schema_version"] = "0"
        with pytest.raises(ConfigurationError):
            scenario_from_dict(data)

    def test_dimension_mismatch_rejected(self):
        data = minimal_scenario_dict()
        data["goal"]["state"] = [0.0, 0.0, 0.0]
        with pytest.raises(ConfigurationError):
            scenario_from_dict(data)

    def test_bad_json_file_is_a_configuration_error(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ConfigurationError, match="parse error"):
            load_scenario(path)

    def test_rectangles_expand_into_covering_terms(self):
        data = minimal_scenario_dict()
        data["obstacles"]["rectangles"] = [
            {"min": [0.5, -1.0], "max": [0.6, 1.0], "spacing": 0.5, "margin": 0.3}
        ]
        scenario = scenario_from_dict(data)
        assert scenario.obstacles.num_terms > 0

    def test_initial_path_must_reach_goal_to_pass_validation(self):
        data = minimal_scenario_dict()
        data["initial_path"] = [[1.0, 0.0], [0.5, 0.5], [0.3, 0.3]]
        scenario = scenario_from_dict(data)
        findings = validate_scenario(scenario)
        assert any("initial_path" in f for f in findings)


class TestValidateScenario:
    def test_goal_inside_obstacle_is_flagged(self):
        data = minimal_scenario_dict()
        data["obstacles"]["ellipsoids"] = [
            {"center": [0.0, 0.0], "alpha": [10.0, 10.0]}
        ]
        findings = validate_scenario(scenario_from_dict(data))
        assert any("goal" in f for f in findings)

    def test_dark_side_goal_is_flagged(self):
        data = minimal_scenario_dict()
        data["goal"]["state"] = [-0.7, 0.0]
        findings = validate_scenario(scenario_from_dict(data))
        assert any("pole" in f for f in findings)


class TestControlWeightMatrix:
    def test_scalar_weight_scales_identity(self, light_dark):
        V = control_weight_matrix(light_dark)
        np.testing.assert_allclose(V, 0.065 * np.eye(2))

    def test_vector_weight_becomes_diagonal(self):
        data = minimal_scenario_dict()
        data["defaults"]["control_weight"] = [1.0, 2.0]
        V = control_weight_matrix(scenario_from_dict(data))
        np.testing.assert_array_equal(V, np.diag([1.0, 2.0]))

    def test_full_matrix_weight_passes_through(self):
        data = minimal_scenario_dict()
        data["defaults"]["control_weight"] = [[2.0, 0.5], [0.5, 1.0]]
        V = control_weight_matrix(scenario_from_dict(data))
        np.testing.assert_array_equal(V, [[2.0, 0.5], [0.5, 1.0]])


class TestTraceSerialization:
    def test_header_layout(self):
        assert trace_header(2, 2, 2) == [
            "step", "x_true_0", "x_true_1", "u_0", "u_1", "z_0", "z_1",
            "x_map_0", "x_map_1", "goal_probability",
        ]
        assert trace_header(3, 2, 1)[1:4] == ["x_true_0", "x_true_1", "x_true_2"]

    def test_written_trace_round_trips_through_csv(self, tmp_path):
        scenario = scenario_from_dict(minimal_scenario_dict())
        trace = run_episode(EpisodeConfig.from_scenario(scenario, seed=0))
        assert trace.steps >= 1
        path = tmp_path / "trace.csv"
        write_trace(trace, path)
        with open(path, newline="") as handle:
            rows = list(csv.DictReader(handle))
        assert len(rows) == trace.steps
        for record, row in zip(trace.records, rows):
            assert int(row["step"]) == record.step
            # 17 significant digits round-trip doubles exactly.
            assert float(row["x_true_0"]) == record.true_state[0]
            assert float(row["u_1"]) == record.control[1]
            assert float(row["z_0"]) == record.observation[0]
            assert float(row["x_map_1"]) == record.map_estimate[1]
            assert float(row["goal_probability"]) == record.goal_probability
