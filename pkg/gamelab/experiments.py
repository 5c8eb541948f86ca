"""
Experiment harness: the coverage-control run loops for every learner, the
steady-state guard, and seeded sweeps over configs.
"""

import dataclasses
import logging
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from django.conf import settings

from . import coverage
from .environment import WorthField, generate_scenario
from .estimation import AICState, aic_round, em_iterate, initial_estimate
from .games import spawn_rngs
from .loglinear import LoglinearState, RevisionPolicy, blll_step, lll_step, psblll_step
from .qlearning import QState, SOQLParams, ql_episode_step, soql_episode_step


logger = logging.getLogger(__name__)

LOGLINEAR_ALGORITHMS = ("lll", "blll", "psblll")
Q_ALGORITHMS = ("ql", "soql")
ALGORITHMS = LOGLINEAR_ALGORITHMS + Q_ALGORITHMS
ENVIRONMENTS = ("known-field", "estimated-field")


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: str = "psblll"
    environment: str = "known-field"
    name: str = ""

    # scenario: inline component list, or generated from scenario_seed
    scenario: Optional[dict] = None
    scenario_seed: int = 0
    grid: int = 40
    min_targets: int = 1
    max_targets: int = 5
    robots: int = 5

    temperature: float = 0.1
    aic_temperature: Optional[float] = None

    # log-linear
    a1: float = 1.0
    a2: float = 0.5
    a3: float = 0.1
    drop_rate: float = 4.0
    p_min: float = 1e-6

    # Q-learning
    mu: float = 0.97
    theta: float = 0.5
    xi: float = 0.01
    zeta: float = 0.9999
    perturbation: bool = True

    # coverage
    energy: float = 3e-5
    delta: float = 1.5
    motion_radius: float = 1.5
    r_com: float = 56.0
    normalise_worth: bool = True

    # estimation
    f_mode_percentile: float = 60.0
    repetitions: int = 3
    aic_period: int = 50
    em_iterations: int = 10
    covariance_floor: float = 1e-3

    seeds: tuple = (0,)
    iterations: int = 20000
    steady_window: int = 200
    steady_tolerance: float = 1e-4
    steady_warmup: int = 5000

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError("unknown algorithm {}".format(self.algorithm))
        if self.environment not in ENVIRONMENTS:
            raise ValueError("unknown environment mode {}".format(self.environment))
        object.__setattr__(self, "seeds", tuple(int(seed) for seed in self.seeds))

    @property
    def label(self):
        return self.name or self.algorithm

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        data = dataclasses.asdict(self)
        data["seeds"] = list(self.seeds)
        return data

    def revision_policy(self, sensor=None):
        return RevisionPolicy(a1=self.a1, a2=self.a2, a3=self.a3, drop_rate=self.drop_rate,
                              p_min=self.p_min, sensor=sensor)

    def soql_params(self):
        return SOQLParams(mu=self.mu, theta=self.theta, xi=self.xi, zeta=self.zeta,
                          temperature=self.temperature)


@dataclass
class RunRecord:
    algorithm: str
    seed: int
    config: ExperimentConfig
    field: WorthField
    initial_positions: list
    rows: list = field(default_factory=list)
    covered: list = field(default_factory=list)
    final_positions: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    estimates: list = field(default_factory=list)
    steady: bool = False
    wall_time: float = 0.0

    @property
    def iterations(self):
        return len(self.rows)

    @property
    def covered_series(self):
        return np.asarray(self.covered, dtype=float)

    @property
    def final_covered(self):
        return self.covered[-1] if self.covered else 0.0

    @property
    def final_potential(self):
        return self.rows[-1]["potential"] if self.rows else 0.0


def steady_state(record, window=200, tol=1e-4, warmup=0):
    """
    True once the spread of total covered worth over the trailing ``window``
    iterations is at most ``tol``. Nothing is steady before ``warmup``
    iterations: robots idling on near-zero worth look flat too.
    """
    if window < 2:
        raise ValueError("the steady-state window must be at least 2")
    if warmup < 0:
        raise ValueError("the steady-state warm-up cannot be negative")
    series = record.covered if isinstance(record, RunRecord) else list(record)
    if len(series) < max(window, warmup):
        return False
    tail = series[-window:]
    return max(tail) - min(tail) <= tol


def time_to_fraction(series, fraction=0.9):
    """
    First iteration (1-based) at which the series reaches ``fraction`` of its final value
    """
    series = np.asarray(series, dtype=float)
    if not len(series) or series[-1] <= 0:
        return 0
    return int(np.argmax(series >= fraction * series[-1])) + 1


def resolve_scenario(config):
    if config.scenario is not None:
        data = dict(config.scenario)
        data.setdefault("size", config.grid)
        return WorthField.from_dict(data)
    return generate_scenario(config.scenario_seed, config.grid, (config.min_targets, config.max_targets))


class _Run(object):
    """
    State shared by every run loop: world, streams, record and bookkeeping
    """

    def __init__(self, config, seed, log):
        self.config = config
        self.log = log
        self.field = resolve_scenario(config)

        placement, self.dynamics, *self.estimation_rngs = spawn_rngs(seed, 2 + config.robots)
        cells = placement.choice(config.grid * config.grid, size=config.robots, replace=False)
        positions = [divmod(int(index), config.grid) for index in cells]

        self.world = coverage.CoverageWorld.from_field(
            self.field, positions, delta=config.delta, motion_radius=config.motion_radius,
            energy=config.energy, normalise=config.normalise_worth)
        self.constraints = coverage.coverage_constraints(self.world)
        self.steady_tolerance = config.steady_tolerance * self.field.total_mass
        self.record = RunRecord(algorithm=config.algorithm, seed=seed, config=config, field=self.field,
                                initial_positions=list(positions))
        self.started = time.perf_counter()

    @property
    def profile(self):
        return [self.world.cell_index(cell) for cell in self.world.positions]

    def advance(self, joint, diagnostics):
        """
        Record the iteration that moves the robots to ``joint`` (cell indices)
        """
        world = self.world
        new = [world.cell(index) for index in joint]
        old = list(world.positions)
        phi = coverage.potential(world, new, old)
        world.advance(new)

        covered = world.covered_total()
        self.record.covered.append(covered)
        self.record.rows.append(dict(
            n=len(self.record.rows) + 1,
            covered=covered,
            potential=phi,
            positions=tuple(new),
            **diagnostics))

        if self.record.iterations % settings.LAB_LOG_EVERY == 0:
            self.log.info("{} seed {}: iteration {}, covered worth {:.6f}".format(
                self.config.label, self.record.seed, self.record.iterations, covered))
        return steady_state(self.record, self.config.steady_window, self.steady_tolerance,
                            self.config.steady_warmup)

    def finish(self):
        self.record.final_positions = list(self.world.positions)
        self.record.flags = [sorted(flags) for flags in self.world.flags]
        self.record.wall_time = time.perf_counter() - self.started
        self.log.info("{} seed {}: {} iterations, final covered worth {:.6f}{}".format(
            self.config.label, self.record.seed, self.record.iterations, self.record.final_covered,
            " (steady)" if self.record.steady else ""))
        return self.record


def _run_loglinear(config, seed, log):
    run = _Run(config, seed, log)
    world = run.world
    estimated = config.environment == "estimated-field"

    for robot in range(world.num_robots):
        coverage.lay_flag_and_observe(world, robot, config.repetitions, config.f_mode_percentile)

    estimates, rasters, aic_states = [], None, []
    if estimated:
        for robot in range(world.num_robots):
            estimate = initial_estimate(world.observations[robot], floor=config.covariance_floor)
            estimates.append(em_iterate(world.observations[robot], estimate, config.em_iterations,
                                        floor=config.covariance_floor))
        rasters = [estimate.raster(world.size) for estimate in estimates]
        aic_states = [AICState(config.aic_period, config.aic_temperature or config.temperature)
                      for _ in range(world.num_robots)]

    game = coverage.coverage_game(world, rasters)
    policy = config.revision_policy(sensor=coverage.flag_sensor(world))
    state = LoglinearState(profile=run.profile, temperature=config.temperature, rng=run.dynamics)

    for n in range(1, config.iterations + 1):
        if estimated and n % config.aic_period == 0:
            for robot in range(world.num_robots):
                estimates[robot] = aic_round(world.observations[robot], estimates[robot], aic_states[robot],
                                             run.estimation_rngs[robot], config.em_iterations,
                                             config.covariance_floor)
                rasters[robot] = estimates[robot].raster(world.size)
            run.record.estimates.append((n, [estimate.to_rows() for estimate in estimates]))

        if config.algorithm == "lll":
            lll_step(game, state)
        elif config.algorithm == "blll":
            blll_step(game, state, run.constraints)
        else:
            psblll_step(game, state, run.constraints, policy)

        diagnostics = {"awake": len(state.awake), "adopted": len(state.adopted)}
        run.record.steady = run.advance(state.profile, diagnostics)

        for robot in state.adopted:
            coverage.lay_flag_and_observe(world, robot, config.repetitions, config.f_mode_percentile)
            if estimated:
                estimates[robot] = em_iterate(world.observations[robot], estimates[robot],
                                              config.em_iterations, floor=config.covariance_floor)
                rasters[robot] = estimates[robot].raster(world.size)

        if estimated:
            run.record.rows[-1]["estimated_covered"] = sum(
                coverage.covered_worth(world, robot, worth=rasters[robot])
                for robot in range(world.num_robots))
            run.record.rows[-1]["components"] = tuple(estimate.count for estimate in estimates)

        if run.record.steady:
            break

    return run.finish()


def _run_q(config, seed, log):
    run = _Run(config, seed, log)
    world = run.world
    params = config.soql_params()
    fallback = coverage.step_towards(world)

    for robot in range(world.num_robots):
        coverage.lay_flag(world, robot)

    game = coverage.coverage_game(world)
    state = QState.initial([world.num_cells] * world.num_robots, run.profile)

    for n in range(1, config.iterations + 1):
        if config.algorithm == "soql":
            soql_episode_step(game, state, params, run.constraints, run.dynamics,
                              perturbation=config.perturbation, fallback=fallback)
        else:
            ql_episode_step(game, state, params, run.constraints, run.dynamics, fallback=fallback)

        diagnostics = {"max_norm": tuple(state.max_norms()), "in_zone": state.in_zone}
        run.record.steady = run.advance(state.profile, diagnostics)
        for robot in range(world.num_robots):
            coverage.lay_flag(world, robot)

        if run.record.steady:
            break

    return run.finish()


def run_psblll(config, seed=None, log=None):
    if config.algorithm != "psblll":
        raise ValueError("run_psblll needs algorithm psblll, got {}".format(config.algorithm))
    return _run_loglinear(config, config.seeds[0] if seed is None else seed, log or logger)


def run_soql(config, seed=None, log=None):
    if config.algorithm != "soql":
        raise ValueError("run_soql needs algorithm soql, got {}".format(config.algorithm))
    return _run_q(config, config.seeds[0] if seed is None else seed, log or logger)


def run_comparators(config, seed=None, log=None):
    seed = config.seeds[0] if seed is None else seed
    if config.algorithm in ("lll", "blll"):
        return _run_loglinear(config, seed, log or logger)
    if config.algorithm == "ql":
        return _run_q(config, seed, log or logger)
    raise ValueError("{} is not a comparator".format(config.algorithm))


def run_experiment(config, seed=None, log=None):
    if config.algorithm == "psblll":
        return run_psblll(config, seed, log)
    if config.algorithm == "soql":
        return run_soql(config, seed, log)
    return run_comparators(config, seed, log)


@dataclass
class Band:
    label: str
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    members: int
    final_mean: float
    time_to_fraction_mean: float


@dataclass
class SweepReport:
    bands: dict = field(default_factory=dict)
    records: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)


def band(label, records):
    """
    Per-iteration mean and min/max envelope; shorter runs hold their final value
    """
    length = max(record.iterations for record in records)
    stacked = np.vstack([
        np.pad(record.covered_series, (0, length - record.iterations), mode="edge")
        if record.iterations else np.zeros(length)
        for record in records
    ])
    return Band(label=label, mean=stacked.mean(axis=0), lower=stacked.min(axis=0),
                upper=stacked.max(axis=0), members=len(records),
                final_mean=float(np.mean([record.final_covered for record in records])),
                time_to_fraction_mean=float(np.mean([time_to_fraction(record.covered) for record in records])))


def _labels(configs):
    labels, seen = [], {}
    for config in configs:
        label = config.label
        seen[label] = seen.get(label, 0) + 1
        labels.append(label if seen[label] == 1 else "{}-{}".format(label, seen[label]))
    return labels


def _run_cell(config, seed):
    return run_experiment(config, seed)


def sweep(configs, seeds=None, workers=None, log=None):
    """
    Run every (config, seed) cell; failed cells are logged and listed, the
    rest of the sweep carries on.
    """
    log = log or logger
    workers = settings.LAB_WORKERS if workers is None else workers
    configs = list(configs)
    labels = _labels(configs)
    cells = [(label, config, seed) for label, config in zip(labels, configs)
             for seed in (seeds if seeds is not None else config.seeds)]

    report = SweepReport()

    def collect(label, seed, outcome):
        try:
            report.records[(label, seed)] = outcome()
        except Exception as exc:
            log.exception("Sweep cell {} seed {} failed".format(label, seed))
            report.failures.append((label, seed, str(exc)))

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(_run_cell, config, seed): (label, seed) for label, config, seed in cells}
            for future in as_completed(futures):
                label, seed = futures[future]
                collect(label, seed, future.result)
    else:
        for label, config, seed in cells:
            collect(label, seed, lambda config=config, seed=seed: run_experiment(config, seed, log))

    for label in labels:
        members = [record for (name, _), record in sorted(report.records.items(), key=lambda item: item[0][1])
                   if name == label]
        if members:
            report.bands[label] = band(label, members)
    return report
