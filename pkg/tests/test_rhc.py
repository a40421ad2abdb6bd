"""Closed-loop execution tests."""

import numpy as np
import pytest

from beliefrhc import (
    EpisodeConfig,
    GaussianMixture,
    GoalSpec,
    LightDarkObservation,
    LinearProcess,
    ObstacleSet,
    RangeObservation,
    map_estimate,
    policy,
    run_episode,
    sample_initial_belief,
    stop_check,
)
from beliefrhc.belief import ParticleBelief
from beliefrhc.errors import ConfigurationError
from beliefrhc.rhc import Planner, resample_path
from beliefrhc.scenarios import PlanningDefaults, Scenario


def toy_scenario(
    goal_state=(1.0, 0.0),
    goal_radius=0.5,
    threshold=0.5,
    control_limit=None,
    horizon=5,
    max_steps=6,
    obs_noise=1e-3,
    belief_std=1e-3,
    process_noise=0.0,
):
    """Small planar scenario with near-perfect sensing by default."""
    return Scenario(
        name="toy",
        process=LinearProcess(
            np.eye(2), np.eye(2), noise_std=[process_noise, process_noise]
        ),
        observation=RangeObservation(
            landmarks=[[0.0, 5.0], [5.0, 0.0]], noise_std=obs_noise
        ),
        initial_belief=GaussianMixture(
            weights=[1.0], means=[[0.0, 0.0]], covs=[belief_std**2 * np.eye(2)]
        ),
        goal=GoalSpec(state=list(goal_state), radius=goal_radius,
                      threshold=threshold),
        obstacles=ObstacleSet((), 1.0),
        defaults=PlanningDefaults(
            horizon=horizon, num_particles=200, control_weight=np.array(1.0),
            control_limit=control_limit, beta=0, replan_period=1,
            max_steps=max_steps,
        ),
    )


class TestStopCheck:
    def test_threshold_is_inclusive(self):
        particles = np.array([[0.0, 0.0]] * 3 + [[9.0, 9.0]])
        belief = ParticleBelief.uniform(particles)
        goal = GoalSpec(state=[0.0, 0.0], radius=0.5, threshold=0.75)
        assert stop_check(belief, goal)

    def test_below_threshold_keeps_running(self):
        particles = np.array([[0.0, 0.0], [9.0, 9.0]])
        belief = ParticleBelief.uniform(particles)
        goal = GoalSpec(state=[0.0, 0.0], radius=0.5, threshold=0.75)
        assert not stop_check(belief, goal)


class TestEpisodeConfig:
    def test_from_scenario_uses_defaults(self, light_dark):
        config = EpisodeConfig.from_scenario(light_dark, seed=5)
        defaults = light_dark.defaults
        assert config.horizon == defaults.horizon
        assert config.num_particles == defaults.num_particles
        assert config.max_steps == defaults.max_steps
        assert config.replan_period == defaults.replan_period
        assert config.effective_beta == defaults.beta
        assert config.seed == 5

    def test_overrides_take_precedence(self, light_dark):
        config = EpisodeConfig.from_scenario(light_dark, horizon=7, beta=1)
        assert config.horizon == 7
        assert config.effective_beta == 1

    def test_validation(self, light_dark):
        with pytest.raises(ConfigurationError):
            EpisodeConfig(scenario=light_dark, horizon=0, num_particles=10,
                          max_steps=5)
        with pytest.raises(ConfigurationError):
            EpisodeConfig(scenario=light_dark, horizon=2, num_particles=10,
                          max_steps=5, replan_period=0)

    def test_multi_start_defaults_to_obstacle_switch(self, light_dark, two_walls):
        assert not EpisodeConfig.from_scenario(light_dark).effective_multi_start
        assert EpisodeConfig.from_scenario(two_walls).effective_multi_start


class TestClosedLoop:
    def test_noiseless_reachable_goal_finishes_within_horizon_plus_one(self):
        scenario = toy_scenario()
        config = EpisodeConfig.from_scenario(scenario, seed=0)
        trace = run_episode(config)
        assert trace.reason == "goal"
        assert trace.success
        assert trace.steps <= scenario.defaults.horizon + 1
        assert trace.final_goal_probability >= scenario.goal.threshold

    def test_unreachable_goal_exhausts_step_budget(self):
        scenario = toy_scenario(
            goal_state=(50.0, 0.0), control_limit=0.05, max_steps=2
        )
        config = EpisodeConfig.from_scenario(scenario, seed=0)
        trace = run_episode(config)
        assert trace.reason == "max-steps"
        assert not trace.success
        assert trace.steps == 2

    def test_single_step_horizon_replans_every_step(self):
        scenario = toy_scenario(horizon=1, max_steps=4, goal_radius=0.3,
                                goal_state=(0.6, 0.0))
        config = EpisodeConfig.from_scenario(scenario, seed=1)
        trace = run_episode(config)
        assert trace.steps >= 1
        assert all(record.replanned for record in trace.records)
        for record in trace.records:
            assert record.control.shape == (2,)

    def test_degenerate_filter_terminates_episode(self):
        scenario = toy_scenario(obs_noise=1e-160, belief_std=0.1)
        config = EpisodeConfig.from_scenario(scenario, seed=0)
        trace = run_episode(config)
        assert trace.reason == "filter-degenerate"
        assert not trace.success
        assert trace.records == ()

    def test_unplannable_belief_terminates_episode(self):
        # A belief concentrated past the light-dark singularity leaves no
        # starting plan with finite cost; the episode must end cleanly
        # instead of propagating the solver error.
        scenario = toy_scenario(belief_std=1e-3)
        scenario = Scenario(
            name=scenario.name,
            process=scenario.process,
            observation=LightDarkObservation(),
            initial_belief=GaussianMixture(
                weights=[1.0], means=[[-5.0, 0.0]],
                covs=[1e-6 * np.eye(2)],
            ),
            goal=scenario.goal,
            obstacles=scenario.obstacles,
            defaults=scenario.defaults,
        )
        config = EpisodeConfig.from_scenario(scenario, seed=0)
        trace = run_episode(config)
        assert trace.reason == "planner-degenerate"
        assert not trace.success
        assert trace.records == ()

    def test_light_dark_episode_reaches_goal(self, light_dark):
        config = EpisodeConfig.from_scenario(light_dark, seed=0)
        trace = run_episode(config)
        assert trace.reason == "goal"
        assert trace.steps <= 3 * config.horizon

    def test_replanning_follows_configured_period(self, light_dark):
        config = EpisodeConfig.from_scenario(light_dark, seed=0)
        trace = run_episode(config)
        period = config.replan_period
        for record in trace.records:
            assert record.replanned == (record.step % period == 0)

    def test_seeded_episodes_are_reproducible(self):
        scenario = toy_scenario(process_noise=0.01, obs_noise=0.05,
                                belief_std=0.05)
        first = run_episode(EpisodeConfig.from_scenario(scenario, seed=11))
        second = run_episode(EpisodeConfig.from_scenario(scenario, seed=11))
        assert first.steps == second.steps
        assert first.reason == second.reason
        for a, b in zip(first.records, second.records):
            np.testing.assert_array_equal(a.true_state, b.true_state)
            np.testing.assert_array_equal(a.control, b.control)
            np.testing.assert_array_equal(a.observation, b.observation)


class TestPlannerPolicy:
    def test_first_light_dark_control_moves_toward_light(self, light_dark):
        belief = sample_initial_belief(light_dark.initial_belief, 500, seed=0)
        config = EpisodeConfig.from_scenario(light_dark)
        planner = Planner(config)
        solution = planner.plan(belief)
        # The goal sits to the left, but information lives to the right:
        # the first planned control must still move right.
        assert solution.controls[0, 0] > 0.0

    def test_policy_facade_caches_planner_between_calls(self):
        scenario = toy_scenario()
        config = EpisodeConfig.from_scenario(scenario, seed=0)
        belief = sample_initial_belief(scenario.initial_belief, 100, seed=0)
        cache = {}
        first = policy(belief, config, cache)
        assert first.shape == (2,)
        planner = cache["planner"]
        assert planner.steps_taken == 1
        policy(belief, config, cache)
        assert cache["planner"] is planner
        assert planner.steps_taken == 2

    def test_warm_started_replan_reuses_previous_solution(self):
        scenario = toy_scenario()
        config = EpisodeConfig.from_scenario(scenario, seed=0)
        belief = sample_initial_belief(scenario.initial_belief, 100, seed=0)
        planner = Planner(config)
        planner.policy(belief)
        first_solution = planner.prev_solution
        planner.policy(belief)
        assert planner.prev_solution is not first_solution  # replanned

    def test_map_estimate_consistency_with_records(self, light_dark):
        config = EpisodeConfig.from_scenario(light_dark, seed=2,
                                             max_steps=3)
        trace = run_episode(config)
        for record in trace.records:
            assert record.map_estimate.shape == (2,)
            assert np.all(np.isfinite(record.map_estimate))


class TestPathResampling:
    def test_polyline_resampled_by_arc_length(self):
        waypoints = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
        resampled = resample_path(waypoints, horizon=4)
        assert resampled.shape == (5, 2)
        np.testing.assert_allclose(resampled[0], [0.0, 0.0])
        np.testing.assert_allclose(resampled[-1], [1.0, 1.0])
        lengths = np.linalg.norm(np.diff(resampled, axis=0), axis=1)
        np.testing.assert_allclose(lengths, 0.5, atol=1e-12)

    def test_short_polyline_rejected(self):
        with pytest.raises(ConfigurationError):
            resample_path(np.array([[0.0, 0.0]]), horizon=3)
