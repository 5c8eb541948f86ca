"""
Per-robot estimation of the worth field: weighted EM over observed cell
centroids, AIC-driven component-count proposals, and split/merge moves that
refit only the components they create.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp
from scipy.stats import multivariate_normal

from .environment import centroids
from .exceptions import DegenerateLikelihood, EmptyLog
from .games import logit_map, make_rng


logger = logging.getLogger(__name__)

COVARIANCE_FLOOR = 1e-3
STARVATION_FRACTION = 1e-6
CONVERGENCE_TOLERANCE = 1e-6
SPLIT_OFFSET = 0.005


class ObservationLog(object):
    """
    O^i: observed points with repetition multiplicities. Repeated points are
    folded into one weighted row for the EM sums.
    """

    def __init__(self, size=None):
        self.size = size
        self.entries = []
        self._counts = {}

    def append(self, point, multiplicity=1):
        x, y = float(point[0]), float(point[1])
        if multiplicity < 1:
            raise ValueError("multiplicity must be at least 1")
        if self.size is not None:
            for coordinate in (x, y):
                cell = coordinate - 0.5
                if cell != int(cell) or not 0 <= cell < self.size:
                    raise ValueError("({}, {}) is not a cell centroid".format(x, y))

        self.entries.append((x, y, int(multiplicity)))
        self._counts[(x, y)] = self._counts.get((x, y), 0) + int(multiplicity)

    @classmethod
    def from_points(cls, points, weights=None, size=None):
        log = cls(size)
        points = np.asarray(points, dtype=float)
        weights = np.ones(len(points), dtype=int) if weights is None else weights
        for point, weight in zip(points, weights):
            log.append(point, weight)
        return log

    def __len__(self):
        return sum(self._counts.values())

    @property
    def points(self):
        return np.array(list(self._counts.keys()), dtype=float).reshape(-1, 2)

    @property
    def weights(self):
        return np.array(list(self._counts.values()), dtype=float)

    @property
    def span(self):
        """
        Length of the region the log lives on: the grid diagonal when known
        """
        if self.size is not None:
            return math.sqrt(2.0) * self.size
        extent = np.ptp(self.points, axis=0) if len(self._counts) > 1 else np.ones(2)
        return float(np.hypot(*extent)) or 1.0


def floor_covariance(covariance, floor=COVARIANCE_FLOOR):
    values, vectors = np.linalg.eigh(covariance)
    if values.min() >= floor:
        return covariance
    values = np.maximum(values, floor)
    floored = (vectors * values) @ vectors.T
    return 0.5 * (floored + floored.T)


@dataclass(eq=False)
class GmmEstimate:
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    starved: Optional[np.ndarray] = None
    responsibilities: Optional[np.ndarray] = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        self.means = np.asarray(self.means, dtype=float).reshape(-1, 2)
        self.covariances = np.asarray(self.covariances, dtype=float).reshape(-1, 2, 2)
        if not len(self.weights) == len(self.means) == len(self.covariances):
            raise ValueError("weights, means and covariances disagree on the component count")
        if self.starved is None:
            self.starved = np.zeros(len(self.weights), dtype=bool)

    @property
    def count(self):
        return len(self.weights)

    @classmethod
    def single(cls, mean, covariance):
        return cls(np.ones(1), np.asarray(mean)[None, :], np.asarray(covariance)[None, :, :])

    def copy(self):
        return GmmEstimate(self.weights.copy(), self.means.copy(), self.covariances.copy(),
                           self.starved.copy())

    def component_log_densities(self, points):
        """
        log(w_j) + log g(x | mu_j, Sigma_j), shape (points, components)
        """
        points = np.atleast_2d(points)
        columns = []
        with np.errstate(divide="ignore"):
            for weight, mean, covariance in zip(self.weights, self.means, self.covariances):
                columns.append(np.log(weight) + multivariate_normal.logpdf(points, mean, covariance))
        return np.column_stack([np.atleast_1d(column) for column in columns])

    def log_density(self, points):
        return logsumexp(self.component_log_densities(points), axis=1)

    def density(self, points):
        return np.exp(self.log_density(points))

    def posterior(self, points):
        joint = self.component_log_densities(points)
        return np.exp(joint - logsumexp(joint, axis=1, keepdims=True))

    def log_likelihood(self, log):
        return float(log.weights @ self.log_density(log.points))

    def raster(self, size):
        return self.density(centroids(size)).reshape(size, size)

    def to_rows(self):
        return [{
            "component": j,
            "weight": float(self.weights[j]),
            "mean_x": float(self.means[j, 0]),
            "mean_y": float(self.means[j, 1]),
            "cov_xx": float(self.covariances[j, 0, 0]),
            "cov_xy": float(self.covariances[j, 0, 1]),
            "cov_yy": float(self.covariances[j, 1, 1]),
        } for j in range(self.count)]


def _require_observations(log):
    if len(log) == 0:
        raise EmptyLog("the observation log is empty")


def initial_estimate(log, spread=None, floor=COVARIANCE_FLOOR):
    """
    One component at the weighted observation mean
    """
    _require_observations(log)
    points, counts = log.points, log.weights
    mean = counts @ points / counts.sum()

    if len(points) >= 3:
        centred = points - mean
        covariance = (counts * centred.T) @ centred / counts.sum()
    else:
        spread = spread if spread is not None else (log.size / 8.0 if log.size else 1.0)
        covariance = spread ** 2 * np.eye(2)
    return GmmEstimate.single(mean, floor_covariance(covariance, floor))


def _weighted_covariance(points, weights, mean, floor):
    centred = points - mean
    return floor_covariance((weights * centred.T) @ centred / weights.sum(), floor)


def em_iterate(log, estimate, iters=10, tol=CONVERGENCE_TOLERANCE, floor=COVARIANCE_FLOOR):
    """
    Weighted EM: responsibilities, then weights, means and covariances, until
    ``iters`` passes or the largest parameter change drops below ``tol``.
    """
    _require_observations(log)
    if estimate.count < 1:
        raise ValueError("an estimate needs at least one component")

    points, counts = log.points, log.weights
    total = counts.sum()
    current = estimate.copy()

    for iteration in range(iters):
        responsibilities = current.posterior(points)
        weighted = responsibilities * counts[:, None]
        mass = weighted.sum(axis=0)
        starved = mass < STARVATION_FRACTION * total

        weights = np.where(starved, STARVATION_FRACTION, mass / total)
        weights /= weights.sum()
        means = current.means.copy()
        covariances = current.covariances.copy()

        for j in np.flatnonzero(~starved):
            means[j] = weighted[:, j] @ points / mass[j]
            covariances[j] = _weighted_covariance(points, weighted[:, j], means[j], floor)

        if starved.any():
            logger.warning("EM: components {} starved, weights floored".format(np.flatnonzero(starved).tolist()))

        change = max(np.abs(weights - current.weights).max(),
                     np.abs(means - current.means).max(),
                     np.abs(covariances - current.covariances).max())
        current = GmmEstimate(weights, means, covariances, starved)
        if change < tol:
            break

    current.responsibilities = current.posterior(points)
    return current


def worth_weighted_multiplicity(f_value, f_mode, repetitions=3):
    if f_mode <= 0:
        raise ValueError("f_mode must be positive")
    if f_value < f_mode:
        return 1
    # round half up
    return 1 + repetitions * int(math.floor(f_value / f_mode + 0.5))


def parameter_count(components):
    return 6 * components - 1


def aic_value(parameters, log_likelihood):
    return 2.0 * parameters - 2.0 * log_likelihood


def aic(estimate, log):
    _require_observations(log)
    log_likelihood = estimate.log_likelihood(log)
    if not np.isfinite(log_likelihood):
        raise DegenerateLikelihood("log-likelihood is {}".format(log_likelihood))
    return aic_value(parameter_count(estimate.count), log_likelihood)


@dataclass
class AICState:
    period: int = 50
    temperature: float = 0.1
    last_proposal: Optional[int] = None
    iaic_current: Optional[float] = None
    iaic_proposal: Optional[float] = None

    def __post_init__(self):
        if self.period < 1:
            raise ValueError("the AIC period must be at least 1")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")

    @staticmethod
    def proposals(count):
        return (count + 1,) if count == 1 else (count + 1, count - 1)


def count_choice_probabilities(iaic_current, iaic_proposal, temperature):
    """
    (keep, switch): two-point logit over IAIC = -AIC
    """
    keep, switch = logit_map([iaic_current, iaic_proposal], temperature)
    return float(keep), float(switch)


def propose_component_count(state, current, candidate, log, rng):
    state.iaic_current = -aic(current, log)
    state.iaic_proposal = -aic(candidate, log)
    state.last_proposal = candidate.count

    _, switch = count_choice_probabilities(state.iaic_current, state.iaic_proposal, state.temperature)
    return candidate.count if rng.random() < switch else current.count


def merge_select(estimate, log):
    """
    The pair (j, j') maximising the responsibility inner product
    """
    if estimate.count < 2:
        raise ValueError("merging needs at least two components")
    _require_observations(log)

    responsibilities = estimate.posterior(log.points)
    overlap = (responsibilities * log.weights[:, None]).T @ responsibilities
    upper = np.triu_indices(estimate.count, k=1)
    best = int(np.argmax(overlap[upper]))
    return int(upper[0][best]), int(upper[1][best])


def _refit_children(points, counts, share, budget, weights, means, covariances,
                    iters, tol, floor):
    """
    Partial EM over new components only. ``share`` is the posterior mass the
    replaced components held per point; the children split it among
    themselves and together keep the weight ``budget``.
    """
    weights, means, covariances = weights.copy(), means.copy(), covariances.copy()

    for iteration in range(iters):
        joint = np.column_stack([
            np.log(weight) + np.atleast_1d(multivariate_normal.logpdf(points, mean, covariance))
            for weight, mean, covariance in zip(weights, means, covariances)
        ])
        posterior = share[:, None] * np.exp(joint - logsumexp(joint, axis=1, keepdims=True))
        weighted = posterior * counts[:, None]
        mass = weighted.sum(axis=0)
        if not mass.sum() > 0:
            break

        new_weights = budget * mass / mass.sum()
        new_means = means.copy()
        new_covariances = covariances.copy()
        for c in np.flatnonzero(mass > 0):
            new_means[c] = weighted[:, c] @ points / mass[c]
            new_covariances[c] = _weighted_covariance(points, weighted[:, c], new_means[c], floor)

        change = max(np.abs(new_weights - weights).max(),
                     np.abs(new_means - means).max(),
                     np.abs(new_covariances - covariances).max())
        weights, means, covariances = new_weights, new_means, new_covariances
        if change < tol:
            break

    return weights, means, covariances


def merge_components(estimate, pair, log, iters=100, tol=CONVERGENCE_TOLERANCE, floor=COVARIANCE_FLOOR):
    j, k = sorted(int(index) for index in pair)
    if j == k or not 0 <= j < estimate.count or not 0 <= k < estimate.count:
        raise ValueError("{} is not a pair of distinct components".format(pair))
    _require_observations(log)

    points, counts = log.points, log.weights
    responsibilities = estimate.posterior(points)
    share = responsibilities[:, j] + responsibilities[:, k]

    budget = estimate.weights[j] + estimate.weights[k]
    mean = (estimate.weights[j] * estimate.means[j] + estimate.weights[k] * estimate.means[k]) / budget
    covariance = (estimate.weights[j] * estimate.covariances[j] +
                  estimate.weights[k] * estimate.covariances[k]) / budget

    weights, means, covariances = _refit_children(
        points, counts, share, budget, np.array([budget]), mean[None, :], covariance[None, :, :],
        iters, tol, floor)

    keep = [index for index in range(estimate.count) if index != k]
    merged = GmmEstimate(estimate.weights[keep], estimate.means[keep], estimate.covariances[keep],
                         estimate.starved[keep])
    merged.weights[j] = weights[0]
    merged.means[j] = means[0]
    merged.covariances[j] = covariances[0]
    merged.starved[j] = False
    return merged


def split_select(estimate, log):
    """
    The component whose responsibility-weighted empirical density, binned on
    unit cells, is furthest (KL) from its own Gaussian
    """
    _require_observations(log)
    points, counts = log.points, log.weights
    responsibilities = estimate.posterior(points)
    cells, inverse = np.unique(np.floor(points).astype(int), axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    centres = cells + 0.5

    scores = np.full(estimate.count, -np.inf)
    for k in range(estimate.count):
        binned = np.bincount(inverse, weights=counts * responsibilities[:, k], minlength=len(cells))
        if not binned.sum() > 0:
            continue
        local = binned / binned.sum()
        model = np.atleast_1d(multivariate_normal.pdf(centres, estimate.means[k], estimate.covariances[k]))
        occupied = local > 0
        scores[k] = float(np.sum(local[occupied] *
                                 np.log(local[occupied] / np.maximum(model[occupied], 1e-300))))

    return int(np.argmax(scores)), scores


def split_component(estimate, k, log, seed=None, offset=None, iters=100, tol=CONVERGENCE_TOLERANCE,
                    floor=COVARIANCE_FLOOR):
    """
    Replace component k by two children placed symmetrically along its
    principal axis (``offset`` from the parent mean, default 0.5 % of the grid
    diagonal) with isotropic covariance det(Sigma_k)^(1/2) I, then refit the
    children. Child one takes index k, child two index k + 1.
    """
    if not 0 <= k < estimate.count:
        raise ValueError("no component {}".format(k))
    _require_observations(log)
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed if seed is not None else 0)

    points, counts = log.points, log.weights
    share = estimate.posterior(points)[:, k]

    parent = estimate.covariances[k]
    _, vectors = np.linalg.eigh(parent)
    principal = vectors[:, -1]
    distance = offset if offset is not None else SPLIT_OFFSET * log.span
    direction = 1.0 if rng.random() < 0.5 else -1.0
    displacement = direction * distance * principal

    budget = estimate.weights[k]
    isotropic = math.sqrt(np.linalg.det(parent)) * np.eye(2)
    weights, means, covariances = _refit_children(
        points, counts, share, budget,
        np.array([budget / 2.0, budget / 2.0]),
        np.array([estimate.means[k] + displacement, estimate.means[k] - displacement]),
        np.array([isotropic, isotropic]),
        iters, tol, floor)

    split = GmmEstimate(np.insert(estimate.weights, k + 1, 0.0),
                        np.insert(estimate.means, k + 1, 0.0, axis=0),
                        np.insert(estimate.covariances, k + 1, 0.0, axis=0),
                        np.insert(estimate.starved, k + 1, False))
    split.weights[k:k + 2] = weights
    split.means[k:k + 2] = means
    split.covariances[k:k + 2] = covariances
    split.starved[k:k + 2] = False
    return split


def aic_round(log, estimate, state, rng, em_iterations=10, floor=COVARIANCE_FLOOR):
    """
    One proposal: pick T_AIC from {M+1, M-1}, build the candidate by split or
    merge, polish it with full EM and keep whichever count the logit draws.
    """
    options = state.proposals(estimate.count)
    proposal = options[int(rng.integers(len(options)))]

    if proposal > estimate.count:
        k, _ = split_select(estimate, log)
        candidate = split_component(estimate, k, log, seed=rng, floor=floor)
    else:
        candidate = merge_components(estimate, merge_select(estimate, log), log, floor=floor)
    candidate = em_iterate(log, candidate, em_iterations, floor=floor)

    chosen = propose_component_count(state, estimate, candidate, log, rng)
    logger.debug("AIC round: {} -> proposal {}, kept {}".format(estimate.count, proposal, chosen))
    return candidate if chosen == candidate.count else estimate


def select_component_count(log, estimate=None, state=None, rng=None, rounds=30, em_iterations=50,
                           floor=COVARIANCE_FLOOR):
    rng = rng if rng is not None else make_rng(0)
    state = state if state is not None else AICState()
    if estimate is None:
        estimate = em_iterate(log, initial_estimate(log, floor=floor), em_iterations, floor=floor)

    for _ in range(rounds):
        estimate = aic_round(log, estimate, state, rng, em_iterations, floor)
    return estimate
