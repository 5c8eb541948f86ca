import os
import shutil
import tempfile
from io import StringIO
from unittest import mock

import yaml
from django.core.management import CommandError, call_command
from django.test import TestCase

from gamelab import experiments
from gamelab.models import Experiment, Failure, Run


RUN_CONFIG = """
algorithm: psblll
grid: 8
robots: 2
iterations: 8
scenario_seed: 4
seeds: [0, 1]
"""

SWEEP_CONFIG = """
defaults:
  grid: 8
  robots: 2
  iterations: 5
  seeds: [0, 1]
experiments:
  - algorithm: blll
  - algorithm: soql
    name: soql-fast
"""

BROKEN_SWEEP = """
defaults:
  grid: 8
  robots: 2
  iterations: 3
experiments:
  - algorithm: blll
  - algorithm: blll
    name: broken
"""

COORDINATION_SPEC = """
actions: [[a, b], [a, b]]
utilities: [[1, 1], [0, 0], [0, 0], [1, 1]]
epsilons: [0.1, 0.01]
"""


class CommandTestCase(TestCase):

    def setUp(self):
        self.directory = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.directory)

    def write(self, name, text):
        path = os.path.join(self.directory, name)
        with open(path, "w") as handle:
            handle.write(text)
        return path

    def call(self, *args, **options):
        out = StringIO()
        call_command(*args, stdout=out, **options)
        return out.getvalue()


class RunCommandTestCase(CommandTestCase):

    def test_runs_every_seed(self):
        out_dir = os.path.join(self.directory, "out")
        output = self.call("run", self.write("run.yml", RUN_CONFIG), out_dir=out_dir)

        self.assertEqual(Experiment.objects.count(), 1)
        self.assertEqual(Run.objects.count(), 2)
        self.assertIn("psblll seed 0: covered worth", output)
        self.assertIn("psblll seed 1: covered worth", output)
        for seed in (0, 1):
            for name in ("run.csv", "world.svg"):
                self.assertTrue(os.path.exists(os.path.join(out_dir, "psblll-seed{}".format(seed), name)))

        run = Run.objects.get(seed=1)
        self.assertEqual(run.iterations, 8)
        self.assertTrue(run.csv_path.endswith("run.csv"))

    def test_seed_and_iterations_override(self):
        self.call("run", self.write("run.yml", RUN_CONFIG), seed=9, iterations=3,
                  out_dir=os.path.join(self.directory, "out"))

        run = Run.objects.get()
        self.assertEqual(run.seed, 9)
        self.assertEqual(run.iterations, 3)

    def test_estimated_field_writes_estimates(self):
        config = RUN_CONFIG + "environment: estimated-field\naic_period: 4\nem_iterations: 2\n"
        out_dir = os.path.join(self.directory, "out")
        self.call("run", self.write("run.yml", config), seed=0, out_dir=out_dir)
        self.assertTrue(os.path.exists(os.path.join(out_dir, "psblll-seed0", "estimates.csv")))

    def test_invalid_config(self):
        with self.assertRaisesMessage(CommandError, "unknown key"):
            self.call("run", self.write("bad.yml", "algorithm: blll\ncolour: red\n"))
        self.assertEqual(Experiment.objects.count(), 0)

    def test_missing_file(self):
        with self.assertRaises(CommandError):
            self.call("run", os.path.join(self.directory, "missing.yml"))


class SweepCommandTestCase(CommandTestCase):

    def test_sweep_outputs(self):
        out_dir = os.path.join(self.directory, "out")
        output = self.call("sweep", self.write("grid.yml", SWEEP_CONFIG), out_dir=out_dir, workers=1)

        experiment = Experiment.objects.get()
        self.assertEqual(experiment.name, "grid")
        self.assertEqual(experiment.runs.count(), 4)
        self.assertEqual(set(experiment.runs.values_list("label", flat=True)), {"blll", "soql-fast"})
        for name in ("band.csv", "band.svg", "summary.csv"):
            self.assertTrue(os.path.exists(os.path.join(out_dir, name)))
        self.assertIn("blll: 2 runs", output)
        self.assertIn("soql-fast: 2 runs", output)

    def test_failures_are_stored(self):
        out_dir = os.path.join(self.directory, "out")
        original = experiments.run_experiment

        def run_or_fail(config, seed=None, log=None):
            if config.label == "broken":
                raise ValueError("boom")
            return original(config, seed, log)

        with mock.patch("gamelab.experiments.run_experiment", side_effect=run_or_fail):
            with self.assertLogs("gamelab", "ERROR"):
                with self.assertRaisesMessage(CommandError, "1 of 2 sweep cells failed"):
                    self.call("sweep", self.write("broken.yml", BROKEN_SWEEP), out_dir=out_dir, workers=1,
                              name="broken-sweep")

        failure = Failure.objects.get()
        self.assertEqual(failure.label, "broken")
        self.assertEqual(failure.message, "boom")
        self.assertEqual(failure.experiment.name, "broken-sweep")
        self.assertEqual(Run.objects.count(), 1)
        self.assertTrue(os.path.exists(os.path.join(out_dir, "summary.csv")))

    def test_invalid_sweep_file(self):
        with self.assertRaises(CommandError):
            self.call("sweep", self.write("bad.yml", "defaults: {}\n"))


class OracleCommandTestCase(CommandTestCase):

    def test_report_and_csv(self):
        out_dir = os.path.join(self.directory, "oracle")
        output = self.call("oracle", self.write("game.yml", COORDINATION_SPEC), out_dir=out_dir)

        self.assertIn("Stochastic stability report", output)
        self.assertIn("(b, b)", output)
        self.assertTrue(os.path.exists(os.path.join(out_dir, "resistances.csv")))
        self.assertTrue(os.path.exists(os.path.join(out_dir, "stationary.csv")))

    def test_single_player_prefers_higher_payoff(self):
        spec = "actions: [[low, high]]\nutilities: [[0], [1]]\nepsilons: [0.1, 0.01, 0.001]\n"
        output = self.call("oracle", self.write("one.yml", spec))

        stable = output.split("Stable states")[1].split("Potential maximisers")[0]
        self.assertIn("(high)", stable)
        self.assertNotIn("(low)", stable)

    def test_trajectory_csv(self):
        path = os.path.join(self.directory, "paths", "trajectory.csv")
        self.call("oracle", self.write("game.yml", COORDINATION_SPEC), trajectory=path, steps=40, seed=3)

        with open(path) as handle:
            rows = [line.rstrip("\n").split(",") for line in handle]
        self.assertEqual(rows[0], ["n", "profile", "potential"])
        self.assertEqual([row[0] for row in rows[1:]], [str(n) for n in range(1, 41)])
        for row in rows[1:]:
            self.assertIn(row[1], ("0;0", "0;1", "1;0", "1;1"))
            self.assertEqual(float(row[2]), 0.0 if row[1] in ("0;0", "1;1") else -1.0)

    def test_trajectory_needs_positive_steps(self):
        with self.assertRaises(CommandError):
            self.call("oracle", self.write("game.yml", COORDINATION_SPEC),
                      trajectory=os.path.join(self.directory, "t.csv"), steps=0)

    def test_invalid_spec(self):
        with self.assertRaisesMessage(CommandError, "utilities"):
            self.call("oracle", self.write("bad.yml", "actions: [2, 2]\nutilities: [[1, 1]]\n"))


class ScenarioCommandTestCase(CommandTestCase):

    def test_writes_yaml_and_csv(self):
        output = self.call("scenario", seed=3, grid=12, out_dir=self.directory)

        yaml_path = os.path.join(self.directory, "scenario-3.yml")
        csv_path = os.path.join(self.directory, "scenario-3.csv")
        self.assertEqual(output.split(), [yaml_path, csv_path])
        with open(yaml_path) as handle:
            self.assertEqual(yaml.safe_load(handle)["scenario"]["size"], 12)

    def test_generated_scenario_runs(self):
        self.call("scenario", seed=5, grid=8, out_dir=self.directory)
        with open(os.path.join(self.directory, "scenario-5.yml")) as handle:
            scenario = yaml.safe_load(handle)["scenario"]

        config = yaml.safe_dump({"algorithm": "blll", "grid": 8, "robots": 2, "iterations": 2,
                                 "scenario": scenario})
        self.call("run", self.write("run.yml", config), out_dir=os.path.join(self.directory, "out"))
        self.assertEqual(Run.objects.count(), 1)

    def test_grid_too_small(self):
        with self.assertRaises(CommandError):
            self.call("scenario", grid=4, out_dir=self.directory)
