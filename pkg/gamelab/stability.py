"""
Stochastic-stability oracle for the perturbed chain P-SBLLL induces on a
small finite game.

The kernel over joint actions is assembled from the independent-wake product:
for every player the options are "stays" (asleep, or awake and keeps / redraws
its own action) and "moves to t" (awake, draws t, accepts it). Multi-deviator
edges fall out of the product; the self-loop takes whatever mass is left.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import networkx as nx
import numpy as np
import scipy.linalg
import scipy.sparse
from django.conf import settings

from .exceptions import (
    InfeasibleTransition, NonConvergence, NotSeparable, RootUnreachable, StateSpaceTooLarge,
)
from .games import construct_potential
from .loglinear import ConstrainedActionMap, validate_constraints


logger = logging.getLogger(__name__)

DEFAULT_EPSILONS = (1e-1, 1e-2, 1e-3)
DEFAULT_MASS_THRESHOLD = 0.05
BALANCE_TOLERANCE = 1e-12
MASS_SLACK = 1e-12


@dataclass(frozen=True)
class TransitionResistance:
    source: tuple
    target: tuple
    deviators: frozenset
    resistance: float


@dataclass
class PerturbedChain:
    states: list
    epsilon: float
    kernel: object
    index: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.index:
            self.index = {state: position for position, state in enumerate(self.states)}

    @property
    def size(self):
        return len(self.states)

    @property
    def temperature(self):
        return -1.0 / math.log(self.epsilon)

    @staticmethod
    def deviators(source, target):
        return frozenset(player for player, (a, b) in enumerate(zip(source, target)) if a != b)

    def dense(self):
        if scipy.sparse.issparse(self.kernel):
            return self.kernel.toarray()
        return np.asarray(self.kernel)


def _constraints_for(game, constraints):
    return constraints if constraints is not None else ConstrainedActionMap.complete(game.sizes)


def _check_feasible(constraints, source, target):
    for player, (current, trial) in enumerate(zip(source, target)):
        if current != trial and trial not in constraints.moves(player, current):
            raise InfeasibleTransition(
                "player {} cannot move from {} to {}".format(player, current, trial))


def _resistance_terms(source_payoffs, target_payoffs, deviators):
    return sum(max(source_payoffs[i], target_payoffs[i]) - target_payoffs[i] for i in deviators)


def _log_acceptance(source_utility, target_utility, log_epsilon):
    # eps^{-u_t} / (eps^{-u_s} + eps^{-u_t}), shifted by the larger utility
    top = max(source_utility, target_utility)
    numerator = (top - target_utility) * log_epsilon
    return numerator - np.logaddexp((top - source_utility) * log_epsilon, numerator)


def _check_epsilon(epsilon):
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1), got {}".format(epsilon))


def resistance(game, source, target, constraints=None):
    source = game.check_profile(source)
    target = game.check_profile(target)
    constraints = _constraints_for(game, constraints)
    _check_feasible(constraints, source, target)

    deviators = PerturbedChain.deviators(source, target)
    source_payoffs = [game.utility(i, source) for i in range(game.num_players)]
    target_payoffs = [game.utility(i, target) for i in range(game.num_players)]
    return TransitionResistance(source, target, deviators,
                                _resistance_terms(source_payoffs, target_payoffs, deviators))


def transition_probability(game, source, target, policy, constraints, epsilon):
    """
    Probability that exactly the players in S = {i : source^i != target^i} wake,
    draw their target actions and accept them, while everyone else sleeps.
    """
    _check_epsilon(epsilon)
    source = game.check_profile(source)
    target = game.check_profile(target)
    constraints = _constraints_for(game, constraints)
    _check_feasible(constraints, source, target)

    log_epsilon = math.log(epsilon)
    log_probability = 0.0
    for player in range(game.num_players):
        rate = policy.rate(player, source[player])
        if source[player] == target[player]:
            log_probability += math.log1p(-rate)
            continue
        options = constraints.moves(player, source[player])
        log_probability += math.log(rate) - math.log(len(options))
        log_probability += _log_acceptance(game.utility(player, source), game.utility(player, target),
                                           log_epsilon)
    return math.exp(log_probability)


def build_chain(game, policy, constraints, epsilon, state_cap=None):
    _check_epsilon(epsilon)
    cap = settings.LAB_STATE_CAP if state_cap is None else state_cap
    if game.num_profiles > cap:
        raise StateSpaceTooLarge(
            "{} joint actions exceed the oracle cap of {}".format(game.num_profiles, cap))

    constraints = _constraints_for(game, constraints)
    payoffs = game.table()
    states = list(game.profiles())
    chain = PerturbedChain(states=states, epsilon=epsilon, kernel=None)
    log_epsilon = math.log(epsilon)

    rows, columns, values = [], [], []
    for position, source in enumerate(states):
        options = []
        for player in range(game.num_players):
            rate = policy.rate(player, source[player])
            moves = constraints.moves(player, source[player])
            share = rate / len(moves)
            stay = (1.0 - rate) + (share if source[player] in moves else 0.0)
            options.append([(source[player], stay)] +
                           [(action, share) for action in moves if action != source[player]])

        leaving = 0.0
        for combination in itertools.product(*options):
            target = tuple(action for action, _ in combination)
            if target == source:
                continue
            probability = math.prod(weight for _, weight in combination)
            for player in chain.deviators(source, target):
                probability *= math.exp(_log_acceptance(payoffs[source + (player,)],
                                                        payoffs[target + (player,)], log_epsilon))
            rows.append(position)
            columns.append(chain.index[target])
            values.append(probability)
            leaving += probability

        rows.append(position)
        columns.append(position)
        values.append(1.0 - leaving)

    size = len(states)
    kernel = scipy.sparse.coo_matrix((values, (rows, columns)), shape=(size, size)).tocsr()
    chain.kernel = kernel.toarray() if size <= settings.LAB_DENSE_SOLVE_LIMIT else kernel
    return chain


def stationary_distribution(chain, tol=1e-10, max_iterations=100000, dense_limit=None):
    """
    pi with pi P = pi. Dense linear solve up to ``dense_limit`` states (one
    balance equation replaced by the normalisation), power iteration above.
    """
    kernel = chain.kernel if isinstance(chain, PerturbedChain) else chain
    if not scipy.sparse.issparse(kernel):
        kernel = np.asarray(kernel, dtype=float)
    size = kernel.shape[0]
    limit = settings.LAB_DENSE_SOLVE_LIMIT if dense_limit is None else dense_limit

    if size <= limit:
        dense = kernel.toarray() if scipy.sparse.issparse(kernel) else kernel
        system = dense.T - np.eye(size)
        system[-1, :] = 1.0
        rhs = np.zeros(size)
        rhs[-1] = 1.0
        pi = scipy.linalg.solve(system, rhs)
        pi = np.clip(pi, 0.0, None)
        pi /= pi.sum()
        residual = np.abs(pi @ dense - pi).max()
    else:
        transposed = scipy.sparse.csr_matrix(kernel).T.tocsr()
        pi = np.full(size, 1.0 / size)
        for iteration in range(max_iterations):
            updated = transposed @ pi
            updated /= updated.sum()
            change = np.abs(updated - pi).sum()
            pi = updated
            if change < tol:
                break
        else:
            raise NonConvergence(
                "power iteration did not settle within {} iterations".format(max_iterations))
        residual = np.abs(transposed @ pi - pi).max()

    if residual > tol:
        raise NonConvergence("stationary residual {} exceeds {}".format(residual, tol))
    return pi


def stationary_table(game, policy, constraints, epsilons=DEFAULT_EPSILONS):
    epsilons = tuple(epsilons)
    for epsilon in epsilons:
        _check_epsilon(epsilon)
    if any(later >= earlier for earlier, later in zip(epsilons, epsilons[1:])):
        raise ValueError("epsilons must be strictly decreasing, got {}".format(epsilons))

    states = list(game.profiles())
    distributions = []
    for epsilon in epsilons:
        chain = build_chain(game, policy, constraints, epsilon)
        distributions.append(stationary_distribution(chain))
        logger.debug("stationary distribution at epsilon={} solved over {} states".format(
            epsilon, chain.size))
    return states, distributions


def stochastically_stable_states(game, policy, constraints, epsilons=DEFAULT_EPSILONS,
                                 mass_threshold=DEFAULT_MASS_THRESHOLD):
    states, distributions = stationary_table(game, policy, constraints, epsilons)
    return stable_set(states, distributions, mass_threshold)


def stable_set(states, distributions, mass_threshold=DEFAULT_MASS_THRESHOLD):
    """
    States holding at least ``mass_threshold`` at the smallest epsilon whose
    mass never drops from one epsilon of the schedule to the next
    """
    masses = np.vstack(distributions)
    rising = np.all(np.diff(masses, axis=0) >= -MASS_SLACK, axis=0)
    keep = (masses[-1] >= mass_threshold) & rising
    return frozenset(state for state, flag in zip(states, keep) if flag)


def _separability_witness(payoffs, player):
    size = payoffs.shape[player]
    others = payoffs.shape[:player] + payoffs.shape[player + 1:-1]
    utility = np.moveaxis(payoffs[..., player], player, 0).reshape(size, -1)

    gaps = np.abs(utility - utility[:, :1])
    scale = max(1.0, float(np.abs(utility).max()))
    if gaps.max() <= BALANCE_TOLERANCE * scale:
        return None

    action, context = np.unravel_index(np.argmax(gaps), gaps.shape)
    first = tuple(int(a) for a in np.unravel_index(0, others)) if others else ()
    second = tuple(int(a) for a in np.unravel_index(context, others)) if others else ()
    return first, second


def check_separable(game):
    payoffs = game.table()
    for player in range(game.num_players):
        witness = _separability_witness(payoffs, player)
        if witness is not None:
            raise NotSeparable(player, *witness)


def _feasible_targets(constraints, source):
    return itertools.product(*[constraints.moves(player, action) for player, action in enumerate(source)])


def sub_edge_decomposition(game, source, target):
    """
    Forward-minus-backward resistance of a multi-deviator transition, directly
    and as the sum over the single-deviator sub-edges that move the deviators
    one at a time in player order.
    """
    payoffs = game.table()
    source = game.check_profile(source)
    target = game.check_profile(target)

    def net(a, b):
        deviators = PerturbedChain.deviators(a, b)
        return (_resistance_terms(payoffs[a], payoffs[b], deviators) -
                _resistance_terms(payoffs[b], payoffs[a], deviators))

    direct = net(source, target)
    summed, current = 0.0, list(source)
    for player in sorted(PerturbedChain.deviators(source, target)):
        following = list(current)
        following[player] = target[player]
        summed += net(tuple(current), tuple(following))
        current = following
    return direct, summed


@dataclass
class ResistanceBalanceReport:
    transitions_checked: int = 0
    max_residual: float = 0.0
    max_sub_edge_residual: float = 0.0
    violations: list = field(default_factory=list)

    @property
    def holds(self):
        return not self.violations


def verify_resistance_balance(game, constraints=None, tol=BALANCE_TOLERANCE):
    """
    For every feasible transition check
    (R(a1 -> a2) - R(a2 -> a1)) - (Phi(a1) - Phi(a2)) == 0.
    Raises NotSeparable when some utility depends on the other players.
    """
    check_separable(game)
    constraints = _constraints_for(game, constraints)
    phi = construct_potential(game)
    payoffs = game.table()
    report = ResistanceBalanceReport()

    for source in game.profiles():
        for target in _feasible_targets(constraints, source):
            deviators = PerturbedChain.deviators(source, target)
            reverse_feasible = all(source[i] in constraints.moves(i, target[i]) for i in deviators)
            report.transitions_checked += 1

            if not reverse_feasible:
                report.violations.append((source, target, math.inf))
                continue

            forward = _resistance_terms(payoffs[source], payoffs[target], deviators)
            backward = _resistance_terms(payoffs[target], payoffs[source], deviators)
            residual = abs((forward - backward) - (phi[source] - phi[target]))
            report.max_residual = max(report.max_residual, residual)
            if residual > tol:
                report.violations.append((source, target, residual))

            if len(deviators) > 1:
                direct, summed = sub_edge_decomposition(game, source, target)
                report.max_sub_edge_residual = max(report.max_sub_edge_residual, abs(direct - summed))

    return report


def resistance_graph(game, constraints=None, policy=None):
    """
    Feasible transitions as a DiGraph with edge attribute ``weight`` = resistance.
    A transition is left out when some deviator can never wake or some
    sleeper can never sleep under ``policy``.
    """
    constraints = _constraints_for(game, constraints)
    payoffs = game.table()
    graph = nx.DiGraph()
    graph.add_nodes_from(game.profiles())

    for source in list(graph.nodes):
        for target in _feasible_targets(constraints, source):
            target = tuple(int(a) for a in target)
            if target == source:
                continue
            deviators = PerturbedChain.deviators(source, target)
            if policy is not None:
                rates = [policy.rate(i, source[i]) for i in range(game.num_players)]
                if any(rates[i] <= 0 for i in deviators) or any(
                        rates[i] >= 1 for i in range(game.num_players) if i not in deviators):
                    continue
            graph.add_edge(source, target,
                           weight=_resistance_terms(payoffs[source], payoffs[target], deviators))
    return graph


def min_resistance_tree(game, policy, constraints, root, max_states=None, graph=None):
    """
    Minimum-resistance spanning tree with every edge directed toward ``root``.
    Returns (edges, total) where edges are (child, parent) transitions.
    """
    cap = settings.LAB_TREE_STATE_CAP if max_states is None else max_states
    if game.num_profiles > cap:
        raise StateSpaceTooLarge(
            "{} joint actions exceed the tree search cap of {}".format(game.num_profiles, cap))

    root = game.check_profile(root)
    if graph is None:
        graph = resistance_graph(game, constraints, policy)
    if graph.number_of_nodes() == 1:
        return [], 0.0

    # An arborescence rooted at `root` in the reversed graph is a tree toward `root`.
    reversed_graph = graph.reverse(copy=True)
    reversed_graph.remove_edges_from(list(reversed_graph.in_edges(root)))

    try:
        arborescence = nx.minimum_spanning_arborescence(reversed_graph, attr="weight")
    except nx.NetworkXException as exc:
        raise RootUnreachable("no spanning tree directed toward {}".format(root)) from exc

    edges = sorted((child, parent) for parent, child in arborescence.edges())
    total = sum(graph[child][parent]["weight"] for child, parent in edges)
    return edges, float(total)


def stochastic_potentials(game, policy=None, constraints=None, max_states=None):
    graph = resistance_graph(game, constraints, policy)
    return {state: min_resistance_tree(game, policy, constraints, state, max_states, graph)[1]
            for state in graph.nodes}


@dataclass
class OracleReport:
    states: list
    epsilons: tuple
    distributions: list
    stable_states: frozenset
    resistances: list
    potential: Optional[np.ndarray] = None
    balance: Optional[ResistanceBalanceReport] = None
    separability_note: str = ""
    potentials: dict = field(default_factory=dict)
    constraint_report: object = None

    @property
    def maximisers(self):
        if self.potential is None:
            return frozenset()
        best = self.potential.max()
        return frozenset(state for state in self.states
                         if self.potential[state] >= best - 1e-12 * max(1.0, abs(best)))


def analyse(game, policy, constraints=None, epsilons=DEFAULT_EPSILONS,
            mass_threshold=DEFAULT_MASS_THRESHOLD):
    """
    Everything the oracle report shows for one game
    """
    constraints = _constraints_for(game, constraints)
    states, distributions = stationary_table(game, policy, constraints, epsilons)
    stable = stable_set(states, distributions, mass_threshold)

    resistances = []
    for source in states:
        for target in _feasible_targets(constraints, source):
            resistances.append(resistance(game, source, target, constraints))

    report = OracleReport(states=states, epsilons=tuple(epsilons), distributions=distributions,
                          stable_states=stable, resistances=resistances,
                          potential=construct_potential(game),
                          constraint_report=validate_constraints(constraints))

    try:
        report.balance = verify_resistance_balance(game, constraints)
    except NotSeparable as exc:
        report.separability_note = str(exc)

    if game.num_profiles <= settings.LAB_TREE_STATE_CAP:
        try:
            report.potentials = stochastic_potentials(game, policy, constraints)
        except RootUnreachable as exc:
            logger.warning("stochastic potentials unavailable: {}".format(exc))

    logger.info("oracle: {} states, stable set {}".format(len(states), sorted(stable)))
    return report
