"""
Finite games: the substrate every learner runs on.

A game is a list of players, one finite action set per player and a utility
evaluator ``utility(player, profile) -> float``. Profiles (joint actions) are
tuples of action indices. Small games are usually built from a dense payoff
table; large ones (the coverage game) supply callbacks and never get
tabulated.
"""

import itertools
import logging
from dataclasses import dataclass
from collections.abc import Mapping
from typing import Optional, Tuple

import numpy as np
from scipy.special import softmax

from .exceptions import DimensionMismatch, ImprovementPathExceeded, StateSpaceTooLarge


logger = logging.getLogger(__name__)

TIE_TOLERANCE = 1e-12
SIMPLEX_TOLERANCE = 1e-9
TABLE_LIMIT = 10 ** 6

JointAction = Tuple[int, ...]


def make_rng(seed):
    """
    Counter-based generator: (seed) fully determines the stream
    """
    return np.random.Generator(np.random.Philox(seed))


def spawn_rngs(seed, count):
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.Generator(np.random.Philox(child)) for child in children]


class GameDefinition(object):
    """
    A finite normal-form game.

    ``payoff_row``, when given, returns the vector u^i(a, profile^{-i}) over all
    of player i's actions in one call; games without it are evaluated action by
    action.
    """

    def __init__(self, players, action_sets, utility, potential=None, payoff_row=None, table=None):
        players = tuple(players)
        action_sets = tuple(tuple(actions) for actions in action_sets)

        if len(players) != len(action_sets):
            raise DimensionMismatch(
                "{} players but {} action sets".format(len(players), len(action_sets)))
        for player, actions in zip(players, action_sets):
            if not actions:
                raise ValueError("action set of player {} is empty".format(player))

        self.players = players
        self.action_sets = action_sets
        self.utility = utility
        self.potential = None if potential is None else np.asarray(potential, dtype=float)
        self.payoff_row = payoff_row
        self._table = table

    @classmethod
    def from_table(cls, payoffs, players=None, action_sets=None, potential=None):
        """
        Build a game from an array of shape (|A^1|, ..., |A^N|, N)
        """
        table = np.asarray(payoffs, dtype=float)
        sizes = table.shape[:-1]

        if table.ndim < 2 or len(sizes) != table.shape[-1]:
            raise DimensionMismatch(
                "payoff table of shape {} does not describe an N-player game".format(table.shape))
        if not np.all(np.isfinite(table)):
            raise ValueError("utilities must be finite")

        if players is None:
            players = range(len(sizes))
        if action_sets is None:
            action_sets = [range(size) for size in sizes]
        if [len(actions) for actions in action_sets] != list(sizes):
            raise DimensionMismatch("action labels do not match the payoff table")

        def utility(player, profile):
            return float(table[tuple(profile) + (player,)])

        def payoff_row(player, profile):
            index = list(profile) + [player]
            index[player] = slice(None)
            return table[tuple(index)]

        return cls(players, action_sets, utility, potential=potential,
                   payoff_row=payoff_row, table=table)

    @property
    def num_players(self):
        return len(self.players)

    @property
    def sizes(self):
        return tuple(len(actions) for actions in self.action_sets)

    @property
    def num_profiles(self):
        return int(np.prod(self.sizes))

    def profiles(self):
        return itertools.product(*[range(size) for size in self.sizes])

    def check_profile(self, profile):
        profile = tuple(int(a) for a in profile)
        if len(profile) != self.num_players:
            raise DimensionMismatch(
                "profile {} has {} entries for {} players".format(
                    profile, len(profile), self.num_players))
        for player, (action, size) in enumerate(zip(profile, self.sizes)):
            if not 0 <= action < size:
                raise ValueError("action {} is outside player {}'s action set".format(action, player))
        return profile

    def payoffs(self, player, profile):
        """
        u^i over all of player i's actions, opponents fixed at ``profile``
        """
        if self.payoff_row is not None:
            return np.asarray(self.payoff_row(player, profile), dtype=float)

        values = np.empty(self.sizes[player])
        deviation = list(profile)
        for action in range(self.sizes[player]):
            deviation[player] = action
            values[action] = self.utility(player, tuple(deviation))
        return values

    def table(self):
        """
        Dense payoff array of shape sizes + (N,), built on first use
        """
        if self._table is None:
            if self.num_profiles > TABLE_LIMIT:
                raise StateSpaceTooLarge(
                    "{} joint actions are too many to tabulate".format(self.num_profiles))
            table = np.empty(self.sizes + (self.num_players,))
            for profile in self.profiles():
                for player in range(self.num_players):
                    table[profile + (player,)] = self.utility(player, profile)
            if not np.all(np.isfinite(table)):
                raise ValueError("utilities must be finite")
            self._table = table
        return self._table


@dataclass
class PotentialCertificate:
    potential_table: np.ndarray
    max_violation: float
    tolerance: float
    violating_quadruple: Optional[tuple] = None

    @property
    def holds(self):
        return self.max_violation <= self.tolerance


def check_mixed_strategy(weights, size=None, tol=SIMPLEX_TOLERANCE):
    weights = np.asarray(weights, dtype=float)
    if weights.ndim != 1 or (size is not None and weights.shape[0] != size):
        raise DimensionMismatch("mixed strategy has shape {}".format(weights.shape))
    if np.any(weights < -tol) or abs(weights.sum() - 1.0) > tol:
        raise ValueError("weights {} are not a probability vector".format(weights))
    return weights


def is_mixed_strategy(weights, tol=SIMPLEX_TOLERANCE):
    weights = np.asarray(weights, dtype=float)
    return bool(weights.ndim == 1 and np.all(weights >= -tol) and abs(weights.sum() - 1.0) <= tol)


def maximisers(values, tol=TIE_TOLERANCE):
    """
    Indices of all entries tied with the maximum up to a relative tolerance
    """
    values = np.asarray(values, dtype=float)
    best = values.max()
    return np.flatnonzero(values >= best - tol * max(1.0, abs(best)))


def _potential_array(game, phi):
    if isinstance(phi, Mapping):
        table = np.full(game.sizes, np.nan)
        for profile, value in phi.items():
            profile = tuple(profile)
            if len(profile) != game.num_players:
                raise DimensionMismatch("potential key {} has the wrong length".format(profile))
            table[profile] = value
        if np.isnan(table).any():
            raise DimensionMismatch("potential is not defined on every joint action")
        return table

    table = np.asarray(phi, dtype=float)
    if table.shape != game.sizes:
        raise DimensionMismatch(
            "potential of shape {} for a game of shape {}".format(table.shape, game.sizes))
    return table


def verify_potential(game, phi, tol=1e-9):
    """
    Largest gap between a potential difference and the deviator's utility
    difference over every unilateral deviation.
    """
    table = _potential_array(game, phi)
    payoffs = game.table()

    worst, quadruple = 0.0, None

    for player in range(game.num_players):
        size = game.sizes[player]
        others = game.sizes[:player] + game.sizes[player + 1:]

        utility = np.moveaxis(payoffs[..., player], player, 0).reshape(size, -1)
        potential = np.moveaxis(table, player, 0).reshape(size, -1)

        # gap[a1, a2, context] = (phi[a2] - phi[a1]) - (u[a2] - u[a1])
        gap = np.abs((potential[None, :, :] - potential[:, None, :]) -
                     (utility[None, :, :] - utility[:, None, :]))
        first, second, context = np.unravel_index(np.argmax(gap), gap.shape)

        if gap[first, second, context] > worst:
            worst = float(gap[first, second, context])
            opponents = tuple(int(a) for a in np.unravel_index(context, others)) if others else ()
            quadruple = (player, int(first), int(second), opponents)

    if worst <= tol:
        quadruple = None
    return PotentialCertificate(table, worst, tol, quadruple)


def construct_potential(game, tol=1e-9):
    """
    Recover a potential by summing unilateral utility differences along the
    coordinate path from the all-first-actions profile. Returns None when the
    result fails the potential identity (the game is not a potential game).
    """
    payoffs = game.table()
    phi = np.zeros(game.sizes)

    for profile in game.profiles():
        current = [0] * game.num_players
        value = 0.0
        for player in range(game.num_players):
            before = payoffs[tuple(current) + (player,)]
            current[player] = profile[player]
            value += payoffs[tuple(current) + (player,)] - before
        phi[profile] = value

    if not verify_potential(game, phi, tol).holds:
        return None
    return phi


def best_response_set(game, player, context):
    return frozenset(int(a) for a in maximisers(game.payoffs(player, context)))


def is_pure_nash(game, profile):
    profile = game.check_profile(profile)
    return all(profile[player] in best_response_set(game, player, profile)
               for player in range(game.num_players))


def expected_utility(game, player, profile):
    if len(profile) != game.num_players:
        raise DimensionMismatch("need one mixed strategy per player")

    value = game.table()[..., player]
    for size, strategy in reversed(list(zip(game.sizes, profile))):
        value = value @ check_mixed_strategy(strategy, size)
    return float(value)


def logit_map(scores, temperature):
    """
    x_a proportional to exp(score_a / temperature), stable for any finite scores
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive, got {}".format(temperature))

    scores = np.asarray(scores, dtype=float)
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")

    return softmax((scores - scores.max()) / temperature)


def improvement_path(game, start, max_steps=1000):
    """
    Improvement path: the lowest-index player that can strictly improve moves
    to its lowest-index strictly improving action, until nobody can.
    """
    current = list(game.check_profile(start))
    path = [tuple(current)]

    while True:
        for player in range(game.num_players):
            values = np.asarray(game.payoffs(player, current), dtype=float)
            own = values[current[player]]
            better = np.flatnonzero(values - own > TIE_TOLERANCE * max(1.0, abs(own)))
            if len(better):
                current[player] = int(better[0])
                break
        else:
            return path

        if len(path) > max_steps:
            raise ImprovementPathExceeded(
                "no equilibrium after {} improvement steps".format(max_steps))
        path.append(tuple(current))
