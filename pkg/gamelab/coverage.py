"""
The multi-robot coverage game on the L x L grid.

Robot utilities are evaluated against a snapshot: the other robots' positions
and flag traces as they stood before the current iteration. Under that
convention each u^i depends only on robot i's own (new, old) cells and
sum_j u^j is an exact potential.

Cells are (ix, iy) tuples; as game actions they are indexed ix * L + iy.

A world built with ``normalise=True`` evaluates utilities and payoff rows with
worth in units of the raster maximum, so the logit temperature means the same
thing on every field. Covered worth always stays in raw units.
"""

import logging
import math
from functools import cached_property, lru_cache

import numpy as np
from scipy import ndimage

from .environment import raster_gradient
from .estimation import ObservationLog, worth_weighted_multiplicity
from .exceptions import InfeasibleTransition
from .games import GameDefinition
from .loglinear import ConstrainedActionMap


logger = logging.getLogger(__name__)

DEFAULT_DELTA = 1.5
DEFAULT_MOTION_RADIUS = 1.5
DEFAULT_ENERGY = 3e-5
DISTANCE_SLACK = 1e-9


@lru_cache(maxsize=None)
def _offsets(radius):
    reach = int(math.floor(radius))
    return tuple((dx, dy) for dx in range(-reach, reach + 1) for dy in range(-reach, reach + 1)
                 if dx * dx + dy * dy <= radius * radius + DISTANCE_SLACK)


@lru_cache(maxsize=None)
def _disc_kernel(radius):
    reach = int(math.floor(radius))
    kernel = np.zeros((2 * reach + 1, 2 * reach + 1))
    for dx, dy in _offsets(radius):
        kernel[dx + reach, dy + reach] = 1.0
    return kernel


def distance(a, b):
    return math.hypot(a[0] - b[0], a[1] - b[1])


def utility_scale(worth):
    top = float(np.max(worth))
    return top if top > 0 else 1.0


class CoverageWorld(object):

    def __init__(self, worth, positions, delta=DEFAULT_DELTA, motion_radius=DEFAULT_MOTION_RADIUS,
                 energy=DEFAULT_ENERGY, detection_range=None, field=None, normalise=False):
        worth = np.asarray(worth, dtype=float)
        if worth.ndim != 2 or worth.shape[0] != worth.shape[1]:
            raise ValueError("worth raster must be square, got shape {}".format(worth.shape))
        if delta <= 0:
            raise ValueError("covering range delta must be positive")

        self.worth = worth
        self.size = worth.shape[0]
        self.field = field
        self.normalise = bool(normalise)
        self.delta = float(delta)
        self.motion_radius = float(motion_radius)
        self.detection_range = 2.0 * self.delta if detection_range is None else float(detection_range)

        self.positions = [self._check_cell(cell) for cell in positions]
        self.previous = list(self.positions)

        energy = [energy] * len(self.positions) if np.isscalar(energy) else list(energy)
        if len(energy) != len(self.positions) or min(energy) <= 0:
            raise ValueError("need one positive energy coefficient K per robot")
        self.energy = [float(k) for k in energy]

        self.flags = [set() for _ in self.positions]
        self.observations = [ObservationLog(self.size) for _ in self.positions]
        self.observed_worth = [{} for _ in self.positions]
        self.observed_gradient = [{} for _ in self.positions]

    @classmethod
    def from_field(cls, field, positions, **kwargs):
        return cls(field.raster, positions, field=field, **kwargs)

    def _check_cell(self, cell):
        ix, iy = int(cell[0]), int(cell[1])
        if not (0 <= ix < self.size and 0 <= iy < self.size):
            raise ValueError("cell {} is off the {}x{} grid".format(cell, self.size, self.size))
        return ix, iy

    @property
    def num_robots(self):
        return len(self.positions)

    @property
    def num_cells(self):
        return self.size * self.size

    def cell_index(self, cell):
        return cell[0] * self.size + cell[1]

    def cell(self, index):
        return divmod(int(index), self.size)

    @staticmethod
    def centroid(cell):
        return cell[0] + 0.5, cell[1] + 0.5

    def advance(self, cells):
        """
        Apply one iteration's joint move at the barrier
        """
        self.previous = list(self.positions)
        self.positions = [self._check_cell(cell) for cell in cells]

    def covered_total(self, worth=None):
        """
        sum_i C^i over current positions, overlap not deducted
        """
        return sum(covered_worth(self, robot, worth=worth) for robot in range(self.num_robots))

    @cached_property
    def worth_scale(self):
        return utility_scale(self.worth)

    def scale_for(self, worth=None):
        if not self.normalise:
            return 1.0
        if worth is None or worth is self.worth:
            return self.worth_scale
        return utility_scale(worth)

    @cached_property
    def gradient_raster(self):
        if self.field is not None:
            return self.field.gradient_raster
        return raster_gradient(self.worth)


@lru_cache(maxsize=65536)
def _ball(size, cell, radius):
    ix, iy = cell
    return tuple((ix + dx, iy + dy) for dx, dy in _offsets(radius)
                 if 0 <= ix + dx < size and 0 <= iy + dy < size)


def neighbor_cells(world, position, radius):
    return frozenset(_ball(world.size, tuple(position), float(radius)))


def _worth_sum(worth, cells):
    return float(sum(worth[cell] for cell in cells))


def covered_worth(world, robot, position=None, worth=None):
    worth = world.worth if worth is None else worth
    position = world.positions[robot] if position is None else tuple(position)
    return _worth_sum(worth, _ball(world.size, position, world.delta))


def overlap_worth(world, robot, position=None, worth=None):
    """
    sum over other robots j of the worth in N_delta(i) intersected with N_delta(j)
    """
    worth = world.worth if worth is None else worth
    position = world.positions[robot] if position is None else tuple(position)
    mine = set(_ball(world.size, position, world.delta))

    total = 0.0
    for other, where in enumerate(world.positions):
        if other == robot or distance(position, where) > 2 * world.delta + DISTANCE_SLACK:
            continue
        total += _worth_sum(worth, mine.intersection(_ball(world.size, where, world.delta)))
    return total


def foreign_flag(world, robot, cell):
    """
    True when another robot's flag lies on ``cell`` within detection range of the robot
    """
    if distance(cell, world.positions[robot]) > world.detection_range + DISTANCE_SLACK:
        return False
    return any(cell in flags for other, flags in enumerate(world.flags) if other != robot)


def constrained_moves(world, robot):
    return sorted(_ball(world.size, world.positions[robot], world.motion_radius))


def utility(world, robot, new_pos, old_pos, worth=None, check=True):
    new_pos, old_pos = tuple(new_pos), tuple(old_pos)
    if check and new_pos not in _ball(world.size, old_pos, world.motion_radius):
        raise InfeasibleTransition("robot {} cannot move from {} to {}".format(robot, old_pos, new_pos))

    gain = 0.0
    if not foreign_flag(world, robot, new_pos):
        gain = covered_worth(world, robot, new_pos, worth) - overlap_worth(world, robot, new_pos, worth)
        gain /= world.scale_for(worth)
    return gain - world.energy[robot] * distance(new_pos, old_pos)


def potential(world, joint_new, joint_old, worth=None):
    return sum(utility(world, robot, new, old, worth, check=False)
               for robot, (new, old) in enumerate(zip(joint_new, joint_old)))


def lay_flag(world, robot):
    world.flags[robot].add(world.positions[robot])


def observe(world, robot, repetitions=3, percentile=60.0):
    """
    Sense the current cell and log it with worth-weighted multiplicity;
    f_mode is the ``percentile`` of the worths this robot has sensed so far.
    """
    cell = world.positions[robot]
    value = float(world.worth[cell])
    world.observed_worth[robot][cell] = value
    world.observed_gradient[robot][cell] = float(world.gradient_raster[cell])

    f_mode = float(np.percentile(list(world.observed_worth[robot].values()), percentile))
    multiplicity = worth_weighted_multiplicity(value, f_mode, repetitions) if f_mode > 0 else 1
    world.observations[robot].append(world.centroid(cell), multiplicity)
    return multiplicity


def lay_flag_and_observe(world, robot, repetitions=3, percentile=60.0):
    lay_flag(world, robot)
    return observe(world, robot, repetitions, percentile)


def coverage_constraints(world):
    size, radius = world.size, world.motion_radius

    @lru_cache(maxsize=None)
    def reachable(action):
        return tuple(sorted(world.cell_index(cell) for cell in _ball(size, divmod(action, size), radius)))

    return ConstrainedActionMap([world.num_cells] * world.num_robots,
                                lambda player, action: reachable(int(action)))


def covered_raster(world, worth=None):
    """
    C at every cell: the worth summed over the delta-disc, truncated at the border
    """
    worth = world.worth if worth is None else worth
    return ndimage.correlate(worth, _disc_kernel(world.delta), mode="constant", cval=0.0)


def _payoff_raster(world, robot, worth, covered):
    kernel = _disc_kernel(world.delta)
    own = world.positions[robot]

    overlap = np.zeros_like(worth)
    for other, where in enumerate(world.positions):
        if other == robot:
            continue
        mask = np.zeros_like(worth)
        for cell in _ball(world.size, where, world.delta):
            mask[cell] = 1.0
        overlap += ndimage.correlate(worth * mask, kernel, mode="constant", cval=0.0)

    gain = (covered - overlap) / world.scale_for(worth)
    for other, flags in enumerate(world.flags):
        if other == robot:
            continue
        for cell in flags:
            if distance(cell, own) <= world.detection_range + DISTANCE_SLACK:
                gain[cell] = 0.0

    xs, ys = np.meshgrid(np.arange(world.size), np.arange(world.size), indexing="ij")
    moved = np.hypot(xs - own[0], ys - own[1])
    return gain - world.energy[robot] * moved


def coverage_game(world, worth=None):
    """
    The game seen from the current snapshot. ``worth`` is None for the true
    field, or a list with one raster per robot when each robot plays on its own
    estimate. The list is read on every call, so callers may swap rasters in it.
    """
    covered = {}

    def raster_for(player):
        return world.worth if worth is None else worth[player]

    def payoff(player, profile):
        return utility(world, player, world.cell(profile[player]), world.positions[player],
                       raster_for(player), check=False)

    def payoff_row(player, profile):
        raster = raster_for(player)
        if worth is not None:
            return _payoff_raster(world, player, raster, covered_raster(world, raster)).ravel()
        if "true" not in covered:
            covered["true"] = covered_raster(world)
        return _payoff_raster(world, player, raster, covered["true"]).ravel()

    return GameDefinition(range(world.num_robots), [range(world.num_cells)] * world.num_robots,
                          payoff, payoff_row=payoff_row)


def step_towards(world):
    """
    Fallback draw for empty masked strategies: the allowed cell closest to the target
    """
    def fallback(player, allowed, target, rng):
        goal = world.cell(target)
        return int(min(allowed, key=lambda index: (distance(world.cell(index), goal), index)))
    return fallback


def flag_sensor(world, worth_scale=None, gradient_scale=None):
    """
    (F, G) for the revision policy: sensed worth and gradient at a cell,
    normalised by the largest values the robot has sensed so far
    """
    def sensor(player, action):
        cell = world.cell(action)
        worth_seen = world.observed_worth[player]
        gradient_seen = world.observed_gradient[player]
        top_worth = worth_scale or max(worth_seen.values(), default=0.0)
        top_gradient = gradient_scale or max(gradient_seen.values(), default=0.0)

        signal = float(world.worth[cell]) / top_worth if top_worth > 0 else 0.0
        gradient = float(world.gradient_raster[cell]) / top_gradient if top_gradient > 0 else 0.0
        return min(signal, 1.0), min(gradient, 1.0)
    return sensor
