import logging
import os

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from gamelab import reports
from gamelab.exceptions import GameLabError
from gamelab.experiments import run_experiment
from gamelab.forms import load_experiment_config
from gamelab.models import Experiment, Run


def write_run_outputs(record, directory):
    """
    run.csv, world.svg and, for estimated-field runs, estimates.csv
    """
    csv_path = reports.write_run_csv(record, os.path.join(directory, "run.csv"))
    svg_path = reports.write_svg(reports.render_world_svg(record), os.path.join(directory, "world.svg"))
    if record.estimates:
        reports.write_estimates_csv(record, os.path.join(directory, "estimates.csv"))
    return csv_path, svg_path


class Command(BaseCommand):
    help = "Run one coverage experiment from a YAML config"

    def add_arguments(self, parser):
        parser.add_argument("config", help="experiment config (YAML)")
        parser.add_argument("--seed", type=int, default=None)
        parser.add_argument("--iterations", type=int, default=None)
        parser.add_argument("--out-dir", default=None)

    def handle(self, *args, **options):
        logger = logging.getLogger(__name__)

        try:
            with open(options["config"]) as handle:
                text = handle.read()
        except OSError as exc:
            raise CommandError("cannot read {}: {}".format(options["config"], exc))

        out_dir = options["out_dir"] or settings.LAB_OUTPUT_DIR

        try:
            config = load_experiment_config(text, seed=options["seed"], iterations=options["iterations"])
            experiment = Experiment.objects.create(name=config.label, config_text=text)

            for seed in config.seeds:
                logger.info("Running {} seed {}".format(config.label, seed))
                record = run_experiment(config, seed, logger)

                directory = os.path.join(out_dir, "{}-seed{}".format(config.label, seed))
                csv_path, svg_path = write_run_outputs(record, directory)
                run = Run.objects.create_from_record(experiment, record, csv_path=csv_path, svg_path=svg_path)

                self.stdout.write("{} seed {}: covered worth {:.6f} after {} iterations{} -> {}".format(
                    config.label, seed, record.final_covered, record.iterations,
                    " (steady)" if record.steady else "", csv_path))
                logger.info("Stored run {}".format(run.pk))
        except GameLabError as exc:
            raise CommandError(str(exc))
