import logging
import os

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from gamelab import reports
from gamelab.environment import generate_scenario


class Command(BaseCommand):
    help = "Generate a random Gaussian-mixture worth field and dump it"

    def add_arguments(self, parser):
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument("--grid", type=int, default=40)
        parser.add_argument("--min-targets", type=int, default=1)
        parser.add_argument("--max-targets", type=int, default=5)
        parser.add_argument("--out-dir", default=None)

    def handle(self, *args, **options):
        logger = logging.getLogger(__name__)

        try:
            field = generate_scenario(options["seed"], options["grid"],
                                      (options["min_targets"], options["max_targets"]))
        except ValueError as exc:
            raise CommandError(str(exc))

        out_dir = options["out_dir"] or settings.LAB_OUTPUT_DIR
        stem = os.path.join(out_dir, "scenario-{}".format(options["seed"]))
        yaml_path = reports.dump_scenario(field, stem + ".yml")
        csv_path = reports.write_field_csv(field.raster, stem + ".csv")

        logger.info("Scenario {} has {} components".format(options["seed"], len(field.components)))
        self.stdout.write("{}\n{}".format(yaml_path, csv_path))
