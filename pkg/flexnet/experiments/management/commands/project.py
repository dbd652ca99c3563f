import json
import sys

import numpy as np
from django.conf import settings
from django.core.management.base import BaseCommand

from experiments.cli import config_errors_exit
from experiments.config import as_jsonable, parse_numbers, resolve_run_config
from experiments.exceptions import InvalidRunConfig
from projection.polyhedron import PolyhedronMode, PolyhedronSpec, project


def read_point(text: str) -> np.ndarray:
    """A JSON array (nested for lifted points) or whitespace-separated numbers."""
    text = text.strip()
    if text.startswith("["):
        try:
            return np.asarray(json.loads(text), dtype=float)
        except (json.JSONDecodeError, TypeError, ValueError) as e:
            raise InvalidRunConfig(f"Cannot read the point: {e}") from e
    return np.asarray(parse_numbers(text), dtype=float)


class Command(BaseCommand):

    help = "Project a point read from stdin (or --point) onto a network's allocation polyhedron"
    stealth_options = ("stdin",)

    def add_arguments(self, parser):
        source = parser.add_mutually_exclusive_group(required=True)
        source.add_argument("--spec", help="Network spec JSON file or bundled spec name")
        source.add_argument("--preset", help="Use the network of a preset")
        parser.add_argument("--mode", choices=[m.value for m in PolyhedronMode], default=PolyhedronMode.C.value)
        parser.add_argument("--eps0", type=float, help="Lower bound for --mode c-eps (default: half min nu/mu)")
        parser.add_argument("--point", help="The point, instead of reading stdin")

    def handle(self, *args, **options):
        text = options["point"]
        if text is None:
            text = options.get("stdin", sys.stdin).read()
        with config_errors_exit():
            config = resolve_run_config(preset=options["preset"], overrides={"network": options["spec"]})
            spec = config.network_spec()
            poly = PolyhedronSpec.for_network(
                spec,
                options["mode"],
                epsilon0=options["eps0"],
                max_iter=settings.FLEXNET["PROJECTION_MAX_ITER"],
                tolerance=settings.FLEXNET["PROJECTION_TOL"],
            )
            x = read_point(text)
            if poly.lifted and x.ndim == 1 and x.size == np.prod(poly.shape):
                x = x.reshape(poly.shape)
            result = project(poly, x)
        output = {
            "network": spec.name,
            **poly.serialize(),
            "point": result.point,
            "witness": result.lifted_witness,
            "iterations": result.iterations,
            "residual": result.residual,
        }
        self.stdout.write(json.dumps(output, indent=2, default=as_jsonable))
