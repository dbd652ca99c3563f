import json

from django.core.management.base import BaseCommand, CommandError

from experiments.cli import EXIT_CONFIG, EXIT_FAILURE
from experiments.suites import SUITES, SuiteOptions, run_suites


class Command(BaseCommand):

    help = "Run the property suites against independent oracles and print a pass/fail table"

    def add_arguments(self, parser):
        parser.add_argument("--only", help=f"Comma list of suites out of {', '.join(SUITES)}")
        parser.add_argument("--samples", type=int, default=SuiteOptions.samples, help="Estimator Monte Carlo slots")
        parser.add_argument("--seed", type=int, default=SuiteOptions.seed)
        parser.add_argument("--instances", type=int, default=SuiteOptions.instances, help="Random projection instances")
        parser.add_argument("--horizon", type=int, default=SuiteOptions.horizon, help="Slots per conservation and robust convergence run")
        parser.add_argument("--steps", type=int, default=SuiteOptions.steps, help="Noiseless convergence steps")
        parser.add_argument("--json", action="store_true", help="Print the results as JSON instead of a table")

    def handle(self, *args, **options):
        names = list(SUITES)
        if options["only"]:
            names = [name.strip() for name in options["only"].split(",") if name.strip()]
            unknown = [name for name in names if name not in SUITES]
            if unknown or not names:
                raise CommandError(f"Unknown suites {unknown}, expected some of {list(SUITES)}", returncode=EXIT_CONFIG)
        for key in ("samples", "instances", "horizon", "steps"):
            if options[key] < 1:
                raise CommandError(f"--{key} must be positive", returncode=EXIT_CONFIG)

        suite_options = SuiteOptions(
            seed=options["seed"],
            samples=options["samples"],
            instances=options["instances"],
            horizon=options["horizon"],
            steps=options["steps"],
        )
        results = run_suites(names, suite_options)
        if options["json"]:
            self.stdout.write(json.dumps(results.serialize(), indent=2))
        else:
            self.stdout.write(results.table())
        if not results.oll_korrect():
            raise CommandError(
                f"{results.num_failed} of {results.num_run} checks failed:\n{results.failure_summary()}",
                returncode=EXIT_FAILURE,
            )
