import logging
import os

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from gamelab import reports
from gamelab.exceptions import GameLabError
from gamelab.experiments import sweep
from gamelab.forms import load_sweep_configs
from gamelab.models import Experiment, Failure, Run

from .run import write_run_outputs


class Command(BaseCommand):
    help = "Run a config x seed grid and write the covered-worth bands"

    def add_arguments(self, parser):
        parser.add_argument("config", help="sweep file (YAML) with an experiments list")
        parser.add_argument("--seed", type=int, default=None)
        parser.add_argument("--iterations", type=int, default=None)
        parser.add_argument("--out-dir", default=None)
        parser.add_argument("--workers", type=int, default=None)
        parser.add_argument("--name", default=None)

    def handle(self, *args, **options):
        logger = logging.getLogger(__name__)

        try:
            with open(options["config"]) as handle:
                text = handle.read()
        except OSError as exc:
            raise CommandError("cannot read {}: {}".format(options["config"], exc))

        out_dir = options["out_dir"] or settings.LAB_OUTPUT_DIR
        name = options["name"] or os.path.splitext(os.path.basename(options["config"]))[0]

        try:
            configs, seeds = load_sweep_configs(text, seed=options["seed"], iterations=options["iterations"])
        except GameLabError as exc:
            raise CommandError(str(exc))

        logger.info("Sweeping {} configs".format(len(configs)))
        report = sweep(configs, seeds=seeds, workers=options["workers"], log=logger)

        experiment = Experiment.objects.create(name=name, config_text=text)

        for (label, seed), record in sorted(report.records.items()):
            directory = os.path.join(out_dir, "{}-seed{}".format(label, seed))
            csv_path, svg_path = write_run_outputs(record, directory)
            Run.objects.create_from_record(experiment, record, label=label, csv_path=csv_path, svg_path=svg_path)

        for label, seed, message in report.failures:
            Failure.objects.create(experiment=experiment, label=label, seed=seed, message=message)

        if report.bands:
            reports.write_band_csv(report, os.path.join(out_dir, "band.csv"))
            reports.write_svg(reports.render_band_svg(report), os.path.join(out_dir, "band.svg"))
        reports.write_summary_csv(report, os.path.join(out_dir, "summary.csv"))

        for label, item in report.bands.items():
            self.stdout.write("{}: {} runs, mean final covered worth {:.6f}, mean time to 90% {:.1f}".format(
                label, item.members, item.final_mean, item.time_to_fraction_mean))

        if report.failures:
            raise CommandError("{} of {} sweep cells failed, see summary.csv".format(
                len(report.failures), len(report.failures) + len(report.records)))
