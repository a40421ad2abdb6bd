"""Obstacle penalty field tests."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import brute_force_opf, fd_gradient
from beliefrhc import (
    Ellipsoid,
    ObstacleSet,
    cover_walls,
    coverage_margin,
    opf_grad,
    opf_value,
)
from beliefrhc.errors import ConfigurationError
from beliefrhc.obstacles import opf_path


def single_term_set(center, alpha, magnitude=1e4):
    return ObstacleSet((Ellipsoid(center, alpha),), magnitude)


class TestPenaltyField:
    def test_peak_value_at_center_is_exactly_magnitude(self):
        obstacle_set = single_term_set([1.0, -2.0], [3.0, 0.5], magnitude=777.0)
        assert opf_value(obstacle_set, np.array([1.0, -2.0])) == 777.0

    def test_unit_curvature_term_three_units_away(self):
        obstacle_set = single_term_set([0.0, 0.0], [1.0, 1.0], magnitude=1e4)
        value = opf_value(obstacle_set, np.array([3.0, 0.0]))
        assert value == pytest.approx(1e4 * math.exp(-9.0), rel=1e-12)
        assert value == pytest.approx(1.2341, abs=1e-4)

    def test_max_combination_over_terms(self):
        terms = (
            Ellipsoid([0.0, 0.0], [1.0, 2.0]),
            Ellipsoid([2.0, 1.0], [0.5, 0.5]),
            Ellipsoid([-1.0, 3.0], [4.0, 1.0]),
        )
        obstacle_set = ObstacleSet(terms, 50.0)
        centers = np.array([t.center for t in terms])
        alphas = np.array([t.alpha for t in terms])
        rng = np.random.default_rng(0)
        for _ in range(200):
            x = rng.uniform(-4, 5, 2)
            expected = brute_force_opf(centers, alphas, 50.0, x)
            assert opf_value(obstacle_set, x) == pytest.approx(expected, rel=1e-14)

    def test_value_is_below_magnitude_away_from_centers(self):
        obstacle_set = single_term_set([0.0, 0.0], [1.0, 1.0], magnitude=10.0)
        rng = np.random.default_rng(1)
        for _ in range(100):
            x = rng.uniform(-3, 3, 2)
            if np.linalg.norm(x) < 1e-9:
                continue
            assert 0.0 < opf_value(obstacle_set, x) < 10.0

    def test_empty_set_is_identically_zero(self):
        empty = ObstacleSet((), 1e4)
        assert opf_value(empty, np.array([0.3, 0.4])) == 0.0
        np.testing.assert_array_equal(opf_grad(empty, np.array([0.3, 0.4])), [0.0, 0.0])
        assert coverage_margin(empty, np.array([0.0, 0.0])) == -np.inf

    def test_permutation_invariance(self):
        rng = np.random.default_rng(2)
        terms = [
            Ellipsoid(rng.uniform(-2, 2, 2), rng.uniform(0.5, 3, 2))
            for _ in range(6)
        ]
        forward = ObstacleSet(tuple(terms), 5.0)
        backward = ObstacleSet(tuple(reversed(terms)), 5.0)
        for _ in range(100):
            x = rng.uniform(-3, 3, 2)
            assert opf_value(forward, x) == opf_value(backward, x)


class TestPenaltyGradient:
    def test_gradient_vanishes_at_center(self):
        obstacle_set = single_term_set([1.0, 2.0], [3.0, 1.0])
        np.testing.assert_allclose(
            opf_grad(obstacle_set, np.array([1.0, 2.0])), [0.0, 0.0], atol=1e-12
        )

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        terms = (
            Ellipsoid([0.0, 0.0], [1.0, 2.0]),
            Ellipsoid([2.5, -1.0], [0.8, 1.5]),
        )
        obstacle_set = ObstacleSet(terms, 100.0)
        checked = 0
        while checked < 100:
            x = rng.uniform(-2, 4, 2)
            values = [
                100.0 * math.exp(-t.quad(x)) for t in terms
            ]
            ranked = sorted(values, reverse=True)
            if ranked[0] - ranked[1] < 1e-6 * ranked[0] + 1e-30:
                continue  # stay away from tie points where the max is kinked
            fd = fd_gradient(lambda p: opf_value(obstacle_set, p), x, h=1e-7)
            grad = opf_grad(obstacle_set, x)
            scale = max(1.0, np.abs(fd).max())
            assert np.abs(grad - fd).max() <= 1e-6 * scale
            checked += 1

    def test_tie_uses_lowest_index_term(self):
        # Two mirrored terms are exactly tied at the origin; the reported
        # gradient must be the first term's.
        alpha = np.array([1.0, 1.0])
        terms = (Ellipsoid([-1.0, 0.0], alpha), Ellipsoid([1.0, 0.0], alpha))
        obstacle_set = ObstacleSet(terms, 10.0)
        x = np.zeros((1, 2))
        values, grads, active = opf_path(obstacle_set, x)
        assert active[0] == 0
        expected = 10.0 * math.exp(-1.0) * (-2.0) * alpha * (0.0 - (-1.0))
        np.testing.assert_allclose(grads[0], [expected[0], 0.0], atol=1e-12)

    def test_path_evaluation_matches_pointwise(self):
        rng = np.random.default_rng(4)
        terms = tuple(
            Ellipsoid(rng.uniform(-2, 2, 2), rng.uniform(0.5, 2, 2))
            for _ in range(4)
        )
        obstacle_set = ObstacleSet(terms, 9.0)
        states = rng.uniform(-3, 3, (25, 2))
        values, grads, active = opf_path(obstacle_set, states)
        for i, x in enumerate(states):
            assert values[i] == opf_value(obstacle_set, x)
            np.testing.assert_array_equal(grads[i], opf_grad(obstacle_set, x))


class TestWallCovering:
    def test_square_side_two_is_fully_covered(self):
        wall = (np.array([0.0, 0.0]), np.array([2.0, 2.0]))
        obstacle_set = cover_walls(wall, spacing=1.0, margin=1.0, magnitude=1e4)
        grid = np.linspace(0.0, 2.0, 41)
        for gx in grid:
            for gy in grid:
                assert coverage_margin(obstacle_set, np.array([gx, gy])) >= -1e-12

    def test_interior_sampling_finds_no_uncovered_point(self):
        wall = (np.array([-1.0, 0.5]), np.array([3.0, 1.0]))
        obstacle_set = cover_walls(wall, spacing=0.5, margin=0.5, magnitude=100.0)
        rng = np.random.default_rng(5)
        samples = rng.uniform(wall[0], wall[1], size=(10_000, 2))
        worst = min(coverage_margin(obstacle_set, s) for s in samples)
        assert worst >= -1e-12

    def test_field_decays_to_negligible_beyond_margin(self):
        wall = (np.array([0.0, 0.0]), np.array([2.0, 2.0]))
        margin = 0.8
        obstacle_set = cover_walls(wall, spacing=1.0, margin=margin, magnitude=1e4)
        # Probe points one margin outside each face and corner.
        outside = [
            [-margin, 1.0],
            [2.0 + margin, 1.0],
            [1.0, -margin],
            [1.0, 2.0 + margin],
            [-margin, -margin],
            [2.0 + margin, 2.0 + margin],
        ]
        for x in outside:
            assert opf_value(obstacle_set, np.array(x)) <= 1e-6 * 1e4 * (1 + 1e-9)

    def test_degenerate_rectangle_is_a_point_obstacle(self):
        point = np.array([1.5, -0.5])
        obstacle_set = cover_walls((point, point), spacing=1.0, margin=0.3,
                                   magnitude=42.0)
        assert obstacle_set.num_terms == 1
        assert opf_value(obstacle_set, point) == 42.0
        assert opf_value(obstacle_set, point + [0.3, 0.0]) <= 42e-6 * (1 + 1e-9)

    def test_zero_extent_axis_uses_midline(self):
        wall = (np.array([0.0, 1.0]), np.array([4.0, 1.0]))
        obstacle_set = cover_walls(wall, spacing=0.5, margin=0.4, magnitude=10.0)
        centers = np.array([e.center for e in obstacle_set.ellipsoids])
        assert np.all(centers[:, 1] == 1.0)
        for gx in np.linspace(0.0, 4.0, 33):
            assert coverage_margin(obstacle_set, np.array([gx, 1.0])) >= -1e-12

    def test_merged_sets_combine_terms(self):
        first = cover_walls((np.zeros(2), np.ones(2)), 0.5, 0.5, 10.0)
        second = cover_walls((np.array([3.0, 0.0]), np.array([4.0, 1.0])),
                             0.5, 0.5, 10.0)
        merged = first.merged_with(second)
        assert merged.num_terms == first.num_terms + second.num_terms
        with pytest.raises(ConfigurationError):
            first.merged_with(ObstacleSet((), 5.0))

    def test_invalid_rectangles_are_rejected(self):
        with pytest.raises(ConfigurationError):
            cover_walls((np.ones(2), np.zeros(2)), 0.5, 0.5, 10.0)
        with pytest.raises(ConfigurationError):
            cover_walls((np.zeros(2), np.ones(2)), -1.0, 0.5, 10.0)
        with pytest.raises(ConfigurationError):
            cover_walls((np.zeros(2), np.ones(2)), 0.5, 0.5, 0.0)


class TestEllipsoidValidation:
    def test_alpha_must_be_positive(self):
        with pytest.raises(ConfigurationError):
            Ellipsoid([0.0, 0.0], [1.0, 0.0])

    def test_center_alpha_length_mismatch(self):
        with pytest.raises(ConfigurationError):
            Ellipsoid([0.0, 0.0], [1.0])

    def test_mixed_dimensions_rejected(self):
        with pytest.raises(ConfigurationError):
            ObstacleSet(
                (Ellipsoid([0.0], [1.0]), Ellipsoid([0.0, 0.0], [1.0, 1.0])), 1.0
            )


@given(
    st.floats(-3, 3),
    st.floats(-3, 3),
    st.floats(0.1, 5),
    st.floats(0.1, 5),
    st.floats(-5, 5),
    st.floats(-5, 5),
)
@settings(max_examples=200, deadline=None)
def test_field_is_bounded_by_magnitude(cx, cy, ax, ay, px, py):
    obstacle_set = single_term_set([cx, cy], [ax, ay], magnitude=3.0)
    value = opf_value(obstacle_set, np.array([px, py]))
    assert 0.0 <= value <= 3.0
