"""One replication of a configured run, executable in any worker."""

from __future__ import annotations

import logging

from network.rates import nominal_rates
from policies.updates import allocation_objective
from sim.engine import run
from sim.exceptions import MemoryGuardExceeded
from .config import RunConfig
from .output import write_replication_csv

logger = logging.getLogger(__name__)

# Largest final Q/N still reported as stable-suspect.
STABLE_Q_OVER_N = 0.02


def execute_replication(config_data: dict, index: int, run_dir: str) -> dict:
    """Run replication ``index`` (seed = config seed + index) and write its CSV.

    Takes and returns primitive data so that process pools and celery can
    carry it.
    """
    config = RunConfig.from_data(config_data)
    seed = config.seed + index
    spec = config.network_spec()
    policy = config.make_policy(spec)
    aborted = False
    try:
        metrics = run(
            spec,
            policy,
            config.arrival_process(),
            horizon=config.horizon,
            seed=seed,
            sample_every=config.stride,
            queue_cap=config.queue_cap,
            conservation_every=config.conservation_every,
        )
    except MemoryGuardExceeded as e:
        logger.warning("Replication %d aborted at slot %d: %s", index, e.slot, e)
        metrics = e.metrics
        aborted = True

    path = write_replication_csv(metrics.to_frame(), run_dir, index)
    rates = spec.rate_matrix() if policy.lifted else spec.task_rate_vector()
    return {
        "replication": index,
        "seed": seed,
        "csv": path.name,
        "aborted": aborted,
        "objective": allocation_objective(nominal_rates(spec).nu, rates, policy.allocation),
        **metrics.summary(),
    }


def verdict(replications: list[dict]) -> str:
    """stable-suspect when no replication tripped the guard or kept growing."""
    for summary in replications:
        if summary["aborted"] or summary["max_q_over_n"] > STABLE_Q_OVER_N:
            return "unstable-suspect"
    return "stable-suspect"
