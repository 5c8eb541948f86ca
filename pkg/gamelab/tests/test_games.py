import math

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from gamelab.exceptions import DimensionMismatch, ImprovementPathExceeded
from gamelab.games import (
    GameDefinition, best_response_set, construct_potential, expected_utility, improvement_path,
    is_pure_nash, logit_map, make_rng, spawn_rngs, verify_potential,
)

from .factories import (
    coordination_game, identical_interest_game, matching_pennies, random_potential_game, separable_game,
)


finite_scores = arrays(np.float64, st.integers(1, 8), elements=st.floats(-1e300, 1e300))


class GameDefinitionTestCase(SimpleTestCase):

    def test_from_table__rejects_mismatched_shape(self):
        with self.assertRaises(DimensionMismatch):
            GameDefinition.from_table(np.zeros((2, 2, 3)))

    def test_from_table__rejects_non_finite(self):
        table = np.zeros((2, 2, 2))
        table[0, 1, 0] = np.nan
        with self.assertRaises(ValueError):
            GameDefinition.from_table(table)

    def test_check_profile__out_of_range(self):
        with self.assertRaises(ValueError):
            coordination_game().check_profile((0, 2))

    def test_check_profile__wrong_length(self):
        with self.assertRaises(DimensionMismatch):
            coordination_game().check_profile((0,))

    def test_payoffs_without_row_callback_match_table(self):
        table = make_rng(1).uniform(size=(2, 3, 2))
        tabled = GameDefinition.from_table(table)
        callback = GameDefinition(range(2), [range(2), range(3)], tabled.utility)

        for profile in tabled.profiles():
            for player in range(2):
                np.testing.assert_allclose(callback.payoffs(player, profile), tabled.payoffs(player, profile))
        np.testing.assert_allclose(callback.table(), table)

    def test_spawned_streams_are_reproducible(self):
        first = [rng.random() for rng in spawn_rngs(7, 3)]
        second = [rng.random() for rng in spawn_rngs(7, 3)]
        self.assertEqual(first, second)
        self.assertEqual(len(set(first)), 3)


class PotentialTestCase(SimpleTestCase):

    def test_verify_potential__identical_interest(self):
        values = make_rng(3).uniform(size=(3, 2))
        certificate = verify_potential(identical_interest_game(values), values)

        self.assertEqual(certificate.max_violation, 0.0)
        self.assertTrue(certificate.holds)
        self.assertIsNone(certificate.violating_quadruple)

    def test_verify_potential__zero_candidate(self):
        table = np.zeros((2, 1, 2))
        table[1, 0, 0] = 1.0
        certificate = verify_potential(GameDefinition.from_table(table), np.zeros((2, 1)))

        self.assertAlmostEqual(certificate.max_violation, 1.0)
        self.assertFalse(certificate.holds)
        self.assertEqual(certificate.violating_quadruple[0], 0)

    def test_verify_potential__mapping_must_cover_every_profile(self):
        with self.assertRaises(DimensionMismatch):
            verify_potential(coordination_game(), {(0, 0): 1.0})

    def test_verify_potential__wrong_shape(self):
        with self.assertRaises(DimensionMismatch):
            verify_potential(coordination_game(), np.zeros((3, 2)))

    def test_construct_potential__identical_interest(self):
        values = make_rng(4).uniform(size=(2, 3))
        phi = construct_potential(identical_interest_game(values))
        np.testing.assert_allclose(phi, values - values[0, 0], atol=1e-12)

    def test_construct_potential__matching_pennies_is_not_potential(self):
        self.assertIsNone(construct_potential(matching_pennies()))

    def test_construct_potential__separable(self):
        game, own = separable_game(make_rng(5), (2, 3, 2))
        phi = construct_potential(game)

        for profile in game.profiles():
            expected = sum(own[i][a] - own[i][0] for i, a in enumerate(profile))
            self.assertAlmostEqual(phi[profile], expected, places=12)
        self.assertTrue(verify_potential(game, phi).holds)

    def test_construct_potential__random_potential_game(self):
        game, phi = random_potential_game(make_rng(6), (3, 2, 2))
        recovered = construct_potential(game)
        np.testing.assert_allclose(recovered, phi - phi[0, 0, 0], atol=1e-12)


class BestResponseTestCase(SimpleTestCase):

    def test_single_action_player(self):
        game = GameDefinition.from_table(np.zeros((1, 2, 2)))
        self.assertEqual(best_response_set(game, 0, (0, 1)), {0})

    def test_ties_are_all_included(self):
        table = np.zeros((3, 1, 2))
        table[:, 0, 0] = (1, 3, 3)
        game = GameDefinition.from_table(table)
        self.assertEqual(best_response_set(game, 0, (0, 0)), {1, 2})

    def test_is_pure_nash__single_action_game(self):
        game = GameDefinition.from_table(np.zeros((1, 1, 2)))
        self.assertTrue(is_pure_nash(game, (0, 0)))

    def test_is_pure_nash__coordination(self):
        game = coordination_game()
        self.assertTrue(is_pure_nash(game, (0, 0)))
        self.assertFalse(is_pure_nash(game, (0, 1)))

    def test_potential_maximiser_is_nash(self):
        for seed in range(10):
            game, phi = random_potential_game(make_rng(seed), (3, 3, 2))
            best = np.unravel_index(np.argmax(phi), phi.shape)
            self.assertTrue(is_pure_nash(game, best))


class ExpectedUtilityTestCase(SimpleTestCase):

    def test_pure_strategies(self):
        table = make_rng(8).uniform(size=(2, 3, 2))
        game = GameDefinition.from_table(table)
        self.assertAlmostEqual(expected_utility(game, 1, [[0, 1], [0, 0, 1]]), table[1, 2, 1])

    def test_uniform_over_2x2(self):
        table = np.zeros((2, 2, 2))
        table[..., 0] = [[0, 1], [2, 3]]
        game = GameDefinition.from_table(table)
        self.assertAlmostEqual(expected_utility(game, 0, [[.5, .5], [.5, .5]]), 1.5)

    def test_matches_enumeration(self):
        rng = make_rng(9)
        table = rng.uniform(size=(3, 3, 2))
        game = GameDefinition.from_table(table)
        x, y = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(3))

        expected = sum(x[a] * y[b] * table[a, b, 0] for a in range(3) for b in range(3))
        self.assertAlmostEqual(expected_utility(game, 0, [x, y]), expected, places=12)

    def test_affine_in_one_player(self):
        rng = make_rng(10)
        game = GameDefinition.from_table(rng.uniform(size=(3, 2, 2)))
        x1, x2, y = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(2))

        mixed = expected_utility(game, 1, [0.3 * x1 + 0.7 * x2, y])
        combined = 0.3 * expected_utility(game, 1, [x1, y]) + 0.7 * expected_utility(game, 1, [x2, y])
        self.assertAlmostEqual(mixed, combined, places=12)

    def test_rejects_non_simplex(self):
        with self.assertRaises(ValueError):
            expected_utility(coordination_game(), 0, [[.5, .6], [.5, .5]])

    def test_rejects_missing_player(self):
        with self.assertRaises(DimensionMismatch):
            expected_utility(coordination_game(), 0, [[.5, .5]])


class LogitMapTestCase(SimpleTestCase):

    def test_equal_scores_are_uniform(self):
        np.testing.assert_allclose(logit_map([2.0, 2.0, 2.0], 0.3), np.full(3, 1 / 3))

    def test_two_actions_unit_temperature(self):
        x = logit_map([1.0, 0.0], 1.0)
        self.assertAlmostEqual(x[0], math.e / (1 + math.e), places=12)
        self.assertAlmostEqual(x[1], 1 / (1 + math.e), places=12)

    def test_near_zero_temperature_is_argmax(self):
        self.assertGreaterEqual(logit_map([1.0, 0.0], 1e-6)[0], 1 - 1e-9)

    def test_rejects_non_positive_temperature(self):
        with self.assertRaises(ValueError):
            logit_map([1.0, 0.0], 0.0)

    @settings(max_examples=200, deadline=None)
    @given(finite_scores, st.floats(1e-3, 1e3))
    def test_output_is_a_distribution(self, scores, temperature):
        x = logit_map(scores, temperature)
        self.assertTrue(np.all(np.isfinite(x)))
        self.assertTrue(np.all(x >= 0))
        self.assertAlmostEqual(x.sum(), 1.0, delta=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(arrays(np.float64, 4, elements=st.floats(-100, 100)), st.floats(-100, 100), st.floats(0.05, 10))
    def test_shift_invariance(self, scores, shift, temperature):
        np.testing.assert_allclose(logit_map(scores + shift, temperature), logit_map(scores, temperature),
                                   atol=1e-12)


class ImprovementPathTestCase(SimpleTestCase):

    def test_start_at_nash(self):
        self.assertEqual(improvement_path(coordination_game(), (1, 1)), [(1, 1)])

    def test_coordination_from_off_diagonal(self):
        path = improvement_path(coordination_game(), (0, 1))
        self.assertLessEqual(len(path) - 1, 2)
        self.assertIn(path[-1], [(0, 0), (1, 1)])

    def test_random_potential_games_terminate_at_nash(self):
        rng = make_rng(11)
        game, phi = random_potential_game(rng, (3, 2, 3))
        for _ in range(20):
            start = tuple(int(rng.integers(size)) for size in game.sizes)
            path = improvement_path(game, start)

            self.assertTrue(is_pure_nash(game, path[-1]))
            values = [phi[profile] for profile in path]
            self.assertTrue(all(b > a for a, b in zip(values, values[1:])))

    def test_moves_to_lowest_improving_action(self):
        game = GameDefinition.from_table(np.array([[0.0], [1.0], [2.0]]))
        self.assertEqual(improvement_path(game, (0,)), [(0,), (1,), (2,)])

    def test_matching_pennies_cycles(self):
        with self.assertRaises(ImprovementPathExceeded):
            improvement_path(matching_pennies(), (0, 0), max_steps=20)
