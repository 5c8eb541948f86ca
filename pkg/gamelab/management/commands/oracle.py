import logging

from django.core.management.base import BaseCommand, CommandError

from gamelab import reports
from gamelab.exceptions import GameLabError
from gamelab.forms import load_game_spec
from gamelab.games import make_rng
from gamelab.loglinear import LoglinearState, psblll_step, simulate
from gamelab.stability import analyse


class Command(BaseCommand):
    help = "Brute-force stochastic stability analysis of a small game"

    def add_arguments(self, parser):
        parser.add_argument("spec", help="game spec (YAML)")
        parser.add_argument("--out-dir", default=None,
                            help="also write resistances.csv and stationary.csv here")
        parser.add_argument("--trajectory", default=None,
                            help="simulate P-SBLLL from the first joint action and write the path to this CSV")
        parser.add_argument("--steps", type=int, default=1000, help="iterations for --trajectory")
        parser.add_argument("--temperature", type=float, default=0.1, help="tau for --trajectory")
        parser.add_argument("--seed", type=int, default=0, help="seed for --trajectory")

    def handle(self, *args, **options):
        logger = logging.getLogger(__name__)

        try:
            with open(options["spec"]) as handle:
                text = handle.read()
        except OSError as exc:
            raise CommandError("cannot read {}: {}".format(options["spec"], exc))

        try:
            game, constraints, policy, spec = load_game_spec(text)
            logger.info("Analysing {} joint actions".format(game.num_profiles))
            report = analyse(game, policy, constraints, spec["epsilons"], spec["mass_threshold"])
        except GameLabError as exc:
            raise CommandError(str(exc))

        self.stdout.write(reports.render_oracle_report(report, spec["labels"]))

        if options["out_dir"]:
            for path in reports.write_oracle_csv(report, options["out_dir"], spec["labels"]):
                logger.info("Wrote {}".format(path))

        if options["trajectory"]:
            if options["steps"] < 1 or options["temperature"] <= 0:
                raise CommandError("--steps must be positive and --temperature above zero")
            state = LoglinearState([0] * game.num_players, options["temperature"], make_rng(options["seed"]))
            rows = simulate(game, state, lambda current: psblll_step(game, current, constraints, policy),
                            options["steps"], potential=report.potential)
            path = reports.write_trajectory_csv(rows, options["trajectory"])
            logger.info("Wrote {} steps of P-SBLLL to {}".format(options["steps"], path))
