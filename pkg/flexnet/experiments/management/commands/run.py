import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from itertools import repeat
from pathlib import Path

import django
from celery import group
from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from django.utils import timezone

from experiments.cli import EXIT_CONFIG, EXIT_UNSTABLE, config_errors_exit
from experiments.config import RunConfig, p0_from_flag, parse_numbers, resolve_run_config
from experiments.exceptions import InvalidRunConfig
from experiments.output import run_directory, write_json
from experiments.replication import execute_replication, verdict
from experiments.tasks import run_replication
from policies.registry import POLICY_NAMES

logger = logging.getLogger(__name__)
reports = logging.getLogger("reports")


def with_mode_lambdas(config: RunConfig, rates: list[float]) -> RunConfig:
    """Replace the arrival rate of each mode, creating the modes if needed."""
    data = config.to_data()
    modes = data["modes"] or [{"lambda": None, "mu": None} for _ in rates]
    if len(modes) != len(rates):
        raise InvalidRunConfig(f"--mode-lambda gives {len(rates)} rates for {len(modes)} modes")
    data["modes"] = [{**mode, "lambda": rate} for mode, rate in zip(modes, rates)]
    return RunConfig.from_data(data)


class Command(BaseCommand):

    help = "Simulate a preset or configured run over several replications and write CSV and JSON results"

    def add_arguments(self, parser):
        parser.add_argument("--preset", help="Compiled-in preset, e.g. fig4a")
        parser.add_argument("--config", help="YAML or JSON run-config file, applied over the preset")
        parser.add_argument("--spec", dest="network", help="Network spec JSON file or bundled spec name")
        parser.add_argument("--policy", choices=POLICY_NAMES)
        parser.add_argument("--a", dest="exponent", type=float, help="Step-size exponent, beta^n = n^-a")
        parser.add_argument("--delta", type=float)
        parser.add_argument("--eps0", dest="epsilon0", type=float)
        parser.add_argument("--p0", help="Initial allocation: a scalar or a comma list")
        parser.add_argument("--lambda", dest="arrival_rates", help="Arrival rate, or a comma list")
        parser.add_argument("--horizon", type=int)
        parser.add_argument("--seed", type=int)
        parser.add_argument("--reps", dest="replications", type=int)
        parser.add_argument("--stride", type=int, help="Sample every this many slots")
        parser.add_argument("--out", help="Output directory (default FLEXNET_OUTPUT_DIR)")
        parser.add_argument("--run-id", help="Subdirectory of --out for this run")
        parser.add_argument("--batch", type=int, help="Batch size B of the arrivals")
        parser.add_argument("--period", type=int, help="Mode period T")
        parser.add_argument("--mode-lambda", help="Comma list of arrival rates, one per mode")
        placement = parser.add_mutually_exclusive_group()
        placement.add_argument("--literal-delta", dest="delta_placement", action="store_const", const="literal")
        placement.add_argument("--scaled-delta", dest="delta_placement", action="store_const", const="scaled")
        parser.add_argument("--threads", type=int, help="Worker processes (default FLEXNET_THREADS, then all cores)")
        parser.add_argument("--celery", action="store_true", help="Dispatch replications as celery tasks")

    def _resolve(self, options) -> RunConfig:
        overrides = {
            key: options[key]
            for key in (
                "network", "policy", "exponent", "delta", "epsilon0", "horizon", "seed",
                "replications", "stride", "out", "batch", "period", "delta_placement",
            )
        }
        overrides["p0"] = p0_from_flag(options["p0"])
        overrides["lambda"] = parse_numbers(options["arrival_rates"])
        if not (options["preset"] or options["config"] or options["network"]):
            raise InvalidRunConfig("Give --preset, --config or --spec")
        config = resolve_run_config(options["preset"], options["config"], overrides)
        if options["mode_lambda"]:
            config = with_mode_lambdas(config, parse_numbers(options["mode_lambda"]))
        config.check()
        return config

    def _workers(self, options, replications: int) -> int:
        threads = options["threads"] or settings.FLEXNET["THREADS"] or os.cpu_count() or 1
        if threads < 1:
            raise CommandError("--threads must be positive", returncode=EXIT_CONFIG)
        return min(threads, replications)

    def handle(self, *args, **options):
        with config_errors_exit():
            config = self._resolve(options)
        run_id = options["run_id"] or f"{config.preset or Path(config.network).stem}-{timezone.now():%Y%m%dT%H%M%S}"
        run_dir = run_directory(config.out, run_id)
        write_json(run_dir / "config.json", config.echo(run_id))

        config_data = config.to_data()
        indices = range(config.replications)
        workers = self._workers(options, config.replications)
        logger.info("Run %s: %d replications of %d slots", run_id, config.replications, config.horizon)
        if options["celery"]:
            job = group(run_replication.s(config_data, i, str(run_dir)) for i in indices)
            summaries = job.apply_async().get()
        elif workers == 1:
            summaries = [execute_replication(config_data, i, str(run_dir)) for i in indices]
        else:
            with ProcessPoolExecutor(max_workers=workers, initializer=django.setup) as pool:
                summaries = list(pool.map(execute_replication, repeat(config_data), indices, repeat(str(run_dir))))

        summaries.sort(key=lambda s: s["replication"])
        summary = {"run_id": run_id, "verdict": verdict(summaries), "replications": summaries}
        write_json(run_dir / "summary.json", summary)
        reports.info("%s: %s, max Q/N %s", run_id, summary["verdict"], [round(s["max_q_over_n"], 6) for s in summaries])
        self.stdout.write(
            json.dumps(
                {
                    "run_id": run_id,
                    "directory": str(run_dir),
                    "verdict": summary["verdict"],
                    "max_q_over_n": [s["max_q_over_n"] for s in summaries],
                },
                indent=2,
            )
        )

        aborted = [s["replication"] for s in summaries if s["aborted"]]
        if aborted:
            raise CommandError(
                f"unstable-suspect: memory guard tripped in replications {aborted}", returncode=EXIT_UNSTABLE
            )
