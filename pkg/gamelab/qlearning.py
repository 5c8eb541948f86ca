"""
Tabular Q-learning: the first-order learner with Boltzmann selection and the
second-order learner (SOQL) with greedy strategy mixing and a perturbation
zone near the simplex vertices.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .games import check_mixed_strategy, logit_map, maximisers


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SOQLParams:
    mu: float = 0.97
    theta: float = 0.5
    xi: float = 0.01
    zeta: float = 0.9999
    temperature: float = 0.1

    def __post_init__(self):
        if not 0 < self.theta < self.mu < 1:
            raise ValueError("need 0 < theta < mu < 1, got theta={} mu={}".format(self.theta, self.mu))
        if not 0 < self.xi < 1:
            raise ValueError("xi must lie in (0, 1)")
        if not 0 < self.zeta < 1:
            raise ValueError("zeta must lie in (0, 1)")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")


@dataclass
class QState:
    """
    P and Q aggregates, mixed strategies X and the last joint action played
    """

    P: list
    Q: list
    X: list
    profile: list
    iteration: int = 0
    in_zone: bool = False
    token: Optional[int] = None
    payoffs: list = field(default_factory=list)

    @classmethod
    def initial(cls, sizes, profile):
        return cls(P=[np.zeros(size) for size in sizes],
                   Q=[np.zeros(size) for size in sizes],
                   X=[np.full(size, 1.0 / size) for size in sizes],
                   profile=[int(a) for a in profile])

    def __post_init__(self):
        if not len(self.P) == len(self.Q) == len(self.X) == len(self.profile):
            raise ValueError("P, Q, X and the profile must cover the same players")
        for x in self.X:
            check_mixed_strategy(x)

    @property
    def num_players(self):
        return len(self.X)

    def max_norms(self):
        return [float(x.max()) for x in self.X]


def _check_step(step):
    if not 0 < step <= 1:
        raise ValueError("step must lie in (0, 1], got {}".format(step))


def standard_q_update(state, player, played, payoff, step):
    _check_step(step)
    q = state.Q[player]
    q[played] += step * (payoff - q[played])
    return state


def boltzmann_selection(state, player, temperature):
    return logit_map(state.Q[player], temperature)


def soql_update(state, player, played, payoff, params, step=None):
    """
    P_b <- P_b + mu (u - P_b); Q_b <- Q_b + mu (P_b_old - Q_b) for the played
    action b only.
    """
    mu = params.mu if step is None else step
    p, q = state.P[player], state.Q[player]
    previous = p[played]
    p[played] = previous + mu * (payoff - previous)
    q[played] = q[played] + mu * (previous - q[played])
    return state


def greedy_strategy_update(state, player, params, rng=None):
    """
    X <- (1 - theta) X + theta e_b with b a maximal-Q action; tied maxima are
    broken uniformly at random when ``rng`` is given, else by lowest index.
    """
    if rng is None:
        target = int(maximisers(state.Q[player])[0])
    else:
        target = _greedy_target(state.Q[player], rng)

    x = (1.0 - params.theta) * state.X[player]
    x[target] += params.theta
    state.X[player] = x
    return x


def closed_form_P(P0, u, mu, m):
    if m < 0:
        raise ValueError("m must be non-negative")
    decay = (1.0 - mu) ** m
    return decay * P0 + (1.0 - decay) * u


def closed_form_Q(Qn, Qn1, u, mu, m):
    """
    Q after m repetitions of the same payoff, from its values at n and n+1
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    lag = (1.0 - mu) ** (m - 1)
    decay = (1.0 - mu) ** m
    return m * lag * Qn1 - (m - 1) * decay * Qn + ((m - 1) * decay - m * lag + 1.0) * u


def closed_form_strategy(X0, target, theta, m):
    x = (1.0 - theta) ** m * np.asarray(X0, dtype=float)
    x[target] += 1.0 - (1.0 - theta) ** m
    return x


def perturbation_magnitude(X, params):
    top = float(np.max(X))
    return params.xi * min(1.0, max(0.0, (top - params.zeta) / (1.0 - params.zeta)))


def perturb_strategy(X, params, zone_entered, support=None):
    """
    (1 - rho) X + rho spread evenly over ``support`` (every action when None)
    """
    x = np.asarray(X, dtype=float)
    if not zone_entered:
        return x.copy()
    rho = perturbation_magnitude(x, params)
    if support is None:
        return (1.0 - rho) * x + rho / len(x)
    support = np.asarray(support, dtype=int)
    perturbed = (1.0 - rho) * x
    perturbed[support] += rho / len(support)
    return perturbed


def adaptive_step(X_tilde, action):
    return 1.0 - float(X_tilde[action])


def perturbation_lower_bound(theta, m, players=1):
    """
    (prod_{c<=m} (1 - (1 - theta)^c))^players and the log-series behind it
    """
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    log_series = sum(math.log1p(-(1.0 - theta) ** c) for c in range(1, m + 1))
    return math.exp(players * log_series), log_series


def _restricted_draw(weights, allowed, rng):
    masked = weights[allowed]
    total = masked.sum()
    if not total > 0:
        return None
    return int(allowed[rng.choice(len(allowed), p=masked / total)])


def _uniform_fallback(player, allowed, target, rng):
    return int(allowed[rng.integers(len(allowed))])


def _greedy_target(q, rng):
    ties = maximisers(q)
    return int(ties[0]) if len(ties) == 1 else int(rng.choice(ties))


def _draw(weights, allowed, player, state, fallback, rng):
    action = _restricted_draw(weights, allowed, rng)
    if action is None:
        action = fallback(player, allowed, _greedy_target(state.Q[player], rng), rng)
    return action


def soql_episode_step(game, state, params, constraints, rng, perturbation=True, fallback=None):
    """
    One SOQL iteration for every player at once.

    Inside the perturbation zone every player draws from its perturbed strategy,
    spread over its constrained moves. Players are visited in random order and
    only the first one whose draw leaves the mode of X keeps it; it becomes the
    token holder and the others redraw from X.

    ``fallback(player, allowed, target, rng)`` picks the action when X puts no
    mass on the constrained set; ``target`` is the player's greedy action.
    """
    fallback = fallback or _uniform_fallback
    players = range(game.num_players)

    state.in_zone = perturbation and all(state.X[i].max() > params.zeta for i in players)
    state.token = None

    perturbed, played = [None] * game.num_players, [None] * game.num_players
    order = rng.permutation(game.num_players) if state.in_zone else players
    for player in order:
        player = int(player)
        allowed = np.asarray(constraints.moves(player, state.profile[player]))
        x = state.X[player]
        x_tilde = perturb_strategy(x, params, zone_entered=state.in_zone, support=allowed)
        action = _draw(x_tilde, allowed, player, state, fallback, rng)

        if state.in_zone and action != int(allowed[np.argmax(x[allowed])]):
            if state.token is None:
                state.token = player
            else:
                action = _draw(x, allowed, player, state, fallback, rng)
        perturbed[player] = x_tilde
        played[player] = action

    joint = tuple(played)
    state.payoffs = []
    for player in players:
        payoff = game.utility(player, joint)
        state.payoffs.append(payoff)
        step = adaptive_step(perturbed[player], joint[player]) if state.in_zone else None
        soql_update(state, player, joint[player], payoff, params, step)
        greedy_strategy_update(state, player, params, rng)

    state.profile = list(joint)
    state.iteration += 1
    return state


def ql_episode_step(game, state, params, constraints, rng, fallback=None):
    """
    First-order Q-learning: Boltzmann draws over the constrained set at
    ``params.temperature``, Q updated with step mu.
    """
    fallback = fallback or _uniform_fallback
    players = range(game.num_players)

    played = []
    for player in players:
        allowed = np.asarray(constraints.moves(player, state.profile[player]))
        weights = np.zeros(len(state.Q[player]))
        weights[allowed] = logit_map(state.Q[player][allowed], params.temperature)
        played.append(_draw(weights, allowed, player, state, fallback, rng))

    joint = tuple(played)
    state.payoffs = []
    for player in players:
        payoff = game.utility(player, joint)
        state.payoffs.append(payoff)
        standard_q_update(state, player, joint[player], payoff, params.mu)
        state.X[player] = boltzmann_selection(state, player, params.temperature)

    state.profile = list(joint)
    state.iteration += 1
    return state
