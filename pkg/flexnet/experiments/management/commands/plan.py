import argparse
import json

from django.core.management.base import BaseCommand

from experiments.cli import config_errors_exit
from experiments.config import as_jsonable, parse_numbers, resolve_run_config
from network.rates import nominal_rates
from network.validation import validate_spec
from planner.plan import BOUNDARY_TOLERANCE, capacity_boundary, solve_static_plan


class Command(BaseCommand):

    help = "Solve the static planning LP: rho*, the allocation and optionally a capacity boundary"

    def add_arguments(self, parser):
        source = parser.add_mutually_exclusive_group(required=True)
        source.add_argument("--spec", help="Network spec JSON file or bundled spec name")
        source.add_argument("--preset", help="Take the network and rates of a preset")
        parser.add_argument("--lambda", dest="arrival_rates", help="Arrival rate, or a comma list per class/queue")
        parser.add_argument("--direction", help="Comma list; also report the capacity boundary along it")
        parser.add_argument("--tolerance", type=float, default=BOUNDARY_TOLERANCE)
        parser.add_argument("--json-only", action=argparse.BooleanOptionalAction, default=True)

    def handle(self, *args, **options):
        with config_errors_exit():
            config = resolve_run_config(
                preset=options["preset"],
                overrides={"network": options["spec"], "lambda": parse_numbers(options["arrival_rates"])},
            )
            spec = config.network_spec()
            validate_spec(spec).raise_for_errors()
            direction = parse_numbers(options["direction"])
            nu = nominal_rates(spec)
            plan = solve_static_plan(spec, nu)
            rates = spec.arrival_rates if spec.kind == "dag" else spec.arrival_vector()
            result = {
                "network": spec.name,
                "lambda": [float(r) for r in rates],
                "nu": nu.tolist(),
                **plan.serialize(spec),
            }
            if spec.is_factorized:
                effective = plan.effective_allocation(spec.speeds())
                result["effective_allocation"] = {str(k): float(p) for k, p in zip(spec.task_ids, effective)}
            if direction is not None:
                result["direction"] = direction
                result["boundary"] = capacity_boundary(spec, direction, tolerance=options["tolerance"])

        if not options["json_only"]:
            line = f"rho* = {plan.rho_star:.9f} ({'inside' if plan.feasible else 'outside'} the capacity region)"
            if "boundary" in result:
                line += f", boundary {result['boundary']:.9f}"
            self.stdout.write(line)
        self.stdout.write(json.dumps(result, indent=2, default=as_jsonable))
