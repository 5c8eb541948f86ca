import numpy as np
from django.test import SimpleTestCase, override_settings

from gamelab.coverage import CoverageWorld, distance
from gamelab.experiments import (
    ExperimentConfig, RunRecord, band, resolve_scenario, run_comparators, run_experiment, run_psblll,
    run_soql, steady_state, sweep, time_to_fraction,
)

from .factories import single_peak_field


SCENARIO = {
    "components": [
        {"weight": 0.7, "mean": [2.0, 2.0], "covariance": [[2.0, 0.0], [0.0, 2.0]]},
        {"weight": 0.3, "mean": [6.0, 5.0], "covariance": [[1.0, 0.0], [0.0, 1.0]]},
    ],
}


def small_config(algorithm, **changes):
    options = dict(algorithm=algorithm, grid=8, robots=2, iterations=30, scenario=SCENARIO, energy=1e-3)
    options.update(changes)
    return ExperimentConfig(**options)


def record_with(covered):
    config = small_config("blll")
    return RunRecord(algorithm="blll", seed=0, config=config, field=single_peak_field(8, (4, 4)),
                     initial_positions=[], rows=[{} for _ in covered], covered=list(covered))


class ExperimentConfigTestCase(SimpleTestCase):

    def test_rejects_unknown_algorithm(self):
        with self.assertRaises(ValueError):
            ExperimentConfig(algorithm="sarsa")

    def test_rejects_unknown_environment(self):
        with self.assertRaises(ValueError):
            ExperimentConfig(environment="partial")

    def test_label(self):
        self.assertEqual(ExperimentConfig(algorithm="ql").label, "ql")
        self.assertEqual(ExperimentConfig(algorithm="ql", name="baseline").label, "baseline")

    def test_seeds_are_a_tuple(self):
        config = ExperimentConfig(seeds=[3, 4])
        self.assertEqual(config.seeds, (3, 4))
        self.assertEqual(config.to_dict()["seeds"], [3, 4])

    def test_replace(self):
        config = ExperimentConfig().replace(iterations=5)
        self.assertEqual(config.iterations, 5)

    def test_builds_parameters(self):
        config = ExperimentConfig(mu=0.8, temperature=0.2, a2=0.3)
        self.assertEqual(config.soql_params().mu, 0.8)
        self.assertEqual(config.soql_params().temperature, 0.2)
        self.assertEqual(config.revision_policy().a2, 0.3)

    def test_inline_scenario_takes_grid(self):
        field = resolve_scenario(small_config("blll"))
        self.assertEqual(field.size, 8)
        self.assertEqual(field.num_components, 2)

    def test_generated_scenario(self):
        field = resolve_scenario(ExperimentConfig(grid=16, scenario_seed=3, min_targets=2, max_targets=2))
        self.assertEqual(field.size, 16)
        self.assertEqual(field.num_components, 2)


class SteadyStateTestCase(SimpleTestCase):

    def test_flat_tail(self):
        self.assertTrue(steady_state([1.0, 2.0, 3.0, 3.0, 3.0], window=3, tol=0.0))

    def test_short_series(self):
        self.assertFalse(steady_state([3.0, 3.0], window=3))

    def test_moving_tail(self):
        self.assertFalse(steady_state([1.0, 2.0, 3.0], window=3, tol=0.5))

    def test_rejects_tiny_window(self):
        with self.assertRaises(ValueError):
            steady_state([1.0], window=1)

    def test_idle_on_zero_worth_is_not_steady_before_warmup(self):
        idle = [0.0] * 400
        self.assertFalse(steady_state(idle, window=200, tol=1e-4, warmup=1000))
        self.assertTrue(steady_state(idle + [0.0] * 600, window=200, tol=1e-4, warmup=1000))

    def test_rejects_negative_warmup(self):
        with self.assertRaises(ValueError):
            steady_state([1.0, 1.0], window=2, warmup=-1)

    def test_time_to_fraction(self):
        self.assertEqual(time_to_fraction([1.0, 5.0, 9.0, 10.0]), 3)
        self.assertEqual(time_to_fraction([]), 0)


class BandTestCase(SimpleTestCase):

    def test_shorter_runs_hold_final_value(self):
        result = band("blll", [record_with([1.0, 2.0, 3.0]), record_with([3.0])])

        np.testing.assert_array_equal(result.mean, [2.0, 2.5, 3.0])
        np.testing.assert_array_equal(result.lower, [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(result.upper, [3.0, 3.0, 3.0])
        self.assertEqual(result.members, 2)
        self.assertEqual(result.final_mean, 3.0)


class RunLoopTestCase(SimpleTestCase):

    def assert_feasible(self, record):
        previous = record.initial_positions
        for row in record.rows:
            for old, new in zip(previous, row["positions"]):
                self.assertLessEqual(distance(old, new), record.config.motion_radius + 1e-9)
            previous = row["positions"]

    def assert_covered_matches(self, record):
        world = CoverageWorld.from_field(record.field, record.final_positions, delta=record.config.delta)
        self.assertAlmostEqual(world.covered_total(), record.final_covered, places=10)

    def test_every_algorithm_runs(self):
        for algorithm in ("lll", "blll", "psblll", "ql", "soql"):
            with self.subTest(algorithm=algorithm):
                record = run_experiment(small_config(algorithm), seed=1)

                self.assertEqual(record.iterations, 30)
                self.assertEqual(len(record.covered), 30)
                self.assertEqual(len(record.final_positions), 2)
                self.assertFalse(record.steady)
                self.assertEqual([row["n"] for row in record.rows], list(range(1, 31)))
                self.assert_covered_matches(record)

    def test_constrained_learners_stay_feasible(self):
        for algorithm in ("blll", "psblll", "ql", "soql"):
            with self.subTest(algorithm=algorithm):
                self.assert_feasible(run_experiment(small_config(algorithm), seed=2))

    def test_same_seed_same_trajectory(self):
        for algorithm in ("psblll", "soql"):
            with self.subTest(algorithm=algorithm):
                first = run_experiment(small_config(algorithm), seed=5)
                second = run_experiment(small_config(algorithm), seed=5)
                self.assertEqual([row["positions"] for row in first.rows],
                                 [row["positions"] for row in second.rows])
                self.assertEqual(first.covered, second.covered)

    def test_robots_start_on_distinct_cells(self):
        record = run_experiment(small_config("blll", robots=6, iterations=1), seed=3)
        self.assertEqual(len(set(record.initial_positions)), 6)

    def test_steady_state_stops_early(self):
        for algorithm in ("psblll", "soql"):
            with self.subTest(algorithm=algorithm):
                record = run_experiment(small_config(algorithm, steady_window=2, steady_tolerance=10.0,
                                                     steady_warmup=0), seed=0)
                self.assertTrue(record.steady)
                self.assertEqual(record.iterations, 2)

    def test_flat_start_runs_through_warmup(self):
        for algorithm in ("psblll", "soql"):
            with self.subTest(algorithm=algorithm):
                record = run_experiment(small_config(algorithm, steady_window=2, steady_tolerance=10.0,
                                                     steady_warmup=12), seed=0)
                self.assertTrue(record.steady)
                self.assertEqual(record.iterations, 12)

    def test_default_warmup_outlasts_short_runs(self):
        record = run_experiment(small_config("soql", steady_window=2, steady_tolerance=10.0), seed=0)
        self.assertFalse(record.steady)
        self.assertEqual(record.iterations, 30)

    def test_flags_are_recorded(self):
        record = run_experiment(small_config("psblll"), seed=4)
        for robot, flags in enumerate(record.flags):
            self.assertIn(record.initial_positions[robot], flags)

    def test_loglinear_diagnostics(self):
        record = run_experiment(small_config("psblll"), seed=6)
        for row in record.rows:
            self.assertLessEqual(row["adopted"], row["awake"])
            self.assertLessEqual(row["awake"], 2)

    def test_q_diagnostics(self):
        record = run_experiment(small_config("soql"), seed=6)
        for row in record.rows:
            self.assertEqual(len(row["max_norm"]), 2)
            self.assertIn(row["in_zone"], (True, False))

    def test_estimated_field_run(self):
        config = small_config("psblll", environment="estimated-field", iterations=10, aic_period=5,
                              em_iterations=3)
        record = run_experiment(config, seed=7)

        self.assertEqual([n for n, _ in record.estimates], [5, 10])
        for row in record.rows:
            self.assertEqual(len(row["components"]), 2)
            self.assertGreaterEqual(row["estimated_covered"], 0.0)

    @override_settings(LAB_LOG_EVERY=10)
    def test_progress_is_logged(self):
        with self.assertLogs("gamelab.experiments", "INFO") as logs:
            run_experiment(small_config("blll", iterations=20), seed=0)
        self.assertTrue(any("iteration 10," in line for line in logs.output))
        self.assertTrue(any("final covered worth" in line for line in logs.output))

    def test_entry_points_check_algorithm(self):
        with self.assertRaises(ValueError):
            run_psblll(small_config("blll"))
        with self.assertRaises(ValueError):
            run_soql(small_config("ql"))
        with self.assertRaises(ValueError):
            run_comparators(small_config("soql"))


class SweepTestCase(SimpleTestCase):

    def test_bands_per_label(self):
        configs = [small_config("blll", iterations=5), small_config("blll", iterations=5),
                   small_config("ql", iterations=5)]
        report = sweep(configs, seeds=[0, 1], workers=1)

        self.assertEqual(sorted(report.bands), ["blll", "blll-2", "ql"])
        self.assertEqual(report.bands["ql"].members, 2)
        self.assertEqual(len(report.records), 6)
        self.assertEqual(report.failures, [])

    def test_failed_cell_does_not_stop_sweep(self):
        broken = small_config("blll", iterations=5, name="broken", scenario={"components": [
            {"weight": 0.5, "mean": [2.0, 2.0], "covariance": [[1.0, 0.0], [0.0, 1.0]]}]})

        with self.assertLogs("gamelab.experiments", "ERROR"):
            report = sweep([broken, small_config("blll", iterations=5)], seeds=[0], workers=1)

        self.assertEqual([label for label, _, _ in report.failures], ["broken"])
        self.assertIn("blll", report.bands)
        self.assertNotIn("broken", report.bands)

    def test_config_seeds_by_default(self):
        report = sweep([small_config("blll", iterations=3, seeds=(4, 5))], workers=1)
        self.assertEqual(sorted(seed for _, seed in report.records), [4, 5])
