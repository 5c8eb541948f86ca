"""
Log-linear learners: LLL, binary LLL (BLLL) and partial-synchronous binary
LLL (P-SBLLL), with constrained action sets and revision probabilities.

Step functions mutate the state they are given and return it.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import networkx as nx
import numpy as np

from .games import logit_map


logger = logging.getLogger(__name__)

P_MIN = 1e-6


class ConstrainedActionMap(object):
    """
    A^i_c: for every player and current action, the actions reachable next.
    ``reachable(player, action)`` returns a sequence of action indices.
    """

    def __init__(self, sizes, reachable):
        self.sizes = tuple(sizes)
        self._reachable = reachable

    @classmethod
    def complete(cls, sizes):
        sizes = tuple(sizes)
        everything = [tuple(range(size)) for size in sizes]
        return cls(sizes, lambda player, action: everything[player])

    @classmethod
    def from_mapping(cls, mappings, sizes=None):
        """
        One dict per player: action -> iterable of reachable actions.
        Actions missing from a dict have no moves.
        """
        tables = [{int(a): tuple(sorted(int(b) for b in targets)) for a, targets in mapping.items()}
                  for mapping in mappings]
        if sizes is None:
            sizes = [len(table) for table in tables]
        return cls(sizes, lambda player, action: tables[player].get(action, ()))

    def moves(self, player, action):
        return tuple(self._reachable(player, action))


@dataclass
class ConstraintReport:
    connected: Tuple[bool, ...]
    asymmetric: list = field(default_factory=list)
    empty: list = field(default_factory=list)

    @property
    def reachability(self):
        return all(self.connected)

    @property
    def reversibility(self):
        return not self.asymmetric

    @property
    def holds(self):
        return self.reachability and self.reversibility and not self.empty


def validate_constraints(constraints):
    """
    Check reachability (strong connectivity of each player's move graph) and
    reversibility (b reachable from a iff a reachable from b).
    """
    connected = []
    report = ConstraintReport(connected=())

    for player, size in enumerate(constraints.sizes):
        graph = nx.DiGraph()
        graph.add_nodes_from(range(size))
        for action in range(size):
            targets = constraints.moves(player, action)
            if not targets:
                report.empty.append((player, action))
            graph.add_edges_from((action, target) for target in targets if target != action)

        for source, target in graph.edges():
            if not graph.has_edge(target, source):
                report.asymmetric.append((player, source, target))

        connected.append(size == 1 or nx.is_strongly_connected(graph))

    report.connected = tuple(connected)
    return report


@dataclass(frozen=True)
class RevisionPolicy:
    """
    Wake-up probabilities rp^i. Rates come from ``fixed_rate`` when set,
    otherwise from ``sensor(player, action) -> (F, G)`` through
    revision_probability, otherwise a2.
    """

    a1: float = 1.0
    a2: float = 0.5
    a3: float = 0.1
    drop_rate: float = 4.0
    p_min: float = P_MIN
    fixed_rate: Optional[float] = None
    sensor: Optional[Callable[[int, int], Tuple[float, float]]] = None

    def __post_init__(self):
        if self.a1 <= 0:
            raise ValueError("a1 must be positive")
        if not 0 < self.a2 <= 1:
            raise ValueError("a2 must lie in (0, 1]")
        if self.drop_rate <= 0:
            raise ValueError("drop rate k must be positive")
        if not 0 < self.p_min < 0.5:
            raise ValueError("p_min must lie in (0, 0.5)")
        if self.fixed_rate is not None and not 0 < self.fixed_rate < 1:
            raise ValueError("a fixed revision rate must lie in (0, 1)")

    @property
    def c(self):
        return math.log(self.a1) / self.drop_rate

    def clamp(self, probability):
        return min(max(probability, self.p_min), 1.0 - self.p_min)

    def rate(self, player, action):
        if self.fixed_rate is not None:
            return self.clamp(self.fixed_rate)
        if self.sensor is not None:
            signal, gradient = self.sensor(player, action)
            return revision_probability(self, signal, gradient)
        return self.clamp(self.a2)


def revision_probability(policy, signal, gradient):
    """
    rp(F, G) = (a2 - e^{-k(F-c)}) G + e^{-k(F-c)}, clamped into [p_min, 1 - p_min]
    """
    if not 0.0 <= signal <= 1.0 or not 0.0 <= gradient <= 1.0:
        raise ValueError("F and G must be normalised to [0, 1], got F={} G={}".format(signal, gradient))

    base = math.exp(-policy.drop_rate * (signal - policy.c))
    return policy.clamp((policy.a2 - base) * gradient + base)


@dataclass
class LoglinearState:
    profile: list
    temperature: float
    rng: np.random.Generator
    iteration: int = 0
    awake: tuple = ()
    adopted: tuple = ()

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        self.profile = [int(a) for a in self.profile]

    @property
    def epsilon(self):
        return math.exp(-1.0 / self.temperature)


def binary_choice(current_utility, trial_utility, temperature):
    """
    (keep, switch) probabilities of the two-point logit
    """
    keep, switch = logit_map([current_utility, trial_utility], temperature)
    return float(keep), float(switch)


def lll_step(game, state):
    player = int(state.rng.integers(game.num_players))
    probabilities = logit_map(game.payoffs(player, state.profile), state.temperature)
    action = int(state.rng.choice(len(probabilities), p=probabilities))

    state.awake = (player,)
    state.adopted = (player,) if action != state.profile[player] else ()
    state.profile[player] = action
    state.iteration += 1
    return state


def _draw_trial(constraints, player, action, rng):
    options = constraints.moves(player, action)
    return int(options[int(rng.integers(len(options)))])


def blll_step(game, state, constraints):
    player = int(state.rng.integers(game.num_players))
    profile = tuple(state.profile)
    trial = _draw_trial(constraints, player, profile[player], state.rng)

    trial_profile = list(profile)
    trial_profile[player] = trial
    _, switch = binary_choice(game.utility(player, profile),
                              game.utility(player, tuple(trial_profile)),
                              state.temperature)

    state.awake = (player,)
    state.adopted = ()
    if state.rng.random() < switch and trial != profile[player]:
        state.profile[player] = trial
        state.adopted = (player,)
    state.iteration += 1
    return state


def psblll_step(game, state, constraints, policy, single_wake=False):
    """
    Every player wakes independently with probability rp^i (or exactly one
    uniformly chosen player wakes when ``single_wake``); the awake players draw
    trials, and each compares its utility at the current profile with its
    utility at the profile where all awake players play their trials.
    """
    rng = state.rng
    profile = tuple(state.profile)

    if single_wake:
        awake = [int(rng.integers(game.num_players))]
    else:
        awake = [player for player in range(game.num_players)
                 if rng.random() < policy.rate(player, profile[player])]

    trials = {player: _draw_trial(constraints, player, profile[player], rng) for player in awake}
    trial_profile = list(profile)
    for player, trial in trials.items():
        trial_profile[player] = trial
    trial_profile = tuple(trial_profile)

    adopted = []
    for player in awake:
        _, switch = binary_choice(game.utility(player, profile),
                                  game.utility(player, trial_profile),
                                  state.temperature)
        if rng.random() < switch and trials[player] != profile[player]:
            state.profile[player] = trials[player]
            adopted.append(player)

    state.awake = tuple(awake)
    state.adopted = tuple(adopted)
    state.iteration += 1
    return state


def simulate(game, state, step, iterations, potential=None):
    """
    Yield (n, joint action, potential) after each of ``iterations`` steps.
    ``step`` is a one-argument callable advancing the state.
    """
    for _ in range(iterations):
        step(state)
        profile = tuple(state.profile)
        value = float(potential[profile]) if potential is not None else float("nan")
        yield state.iteration, profile, value
