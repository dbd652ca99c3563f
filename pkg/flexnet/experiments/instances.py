"""Random small instances for the verify suites and the tests."""

from __future__ import annotations

import numpy as np

from network.specs import DagJobClass, DagNetworkSpec, ServerSpec
from projection.polyhedron import PolyhedronMode, PolyhedronSpec


def random_factorized_spec(rng: np.random.Generator, K: int, J: int) -> DagNetworkSpec:
    """K single-task classes on J servers with random speeds and capabilities."""
    capable = [set() for _ in range(J)]
    for k in range(1, K + 1):
        for j in rng.choice(J, size=rng.integers(1, J + 1), replace=False):
            capable[j].add(k)
    speeds = rng.uniform(0.2, 1.0, size=J)
    servers = tuple(
        ServerSpec(j + 1, float(speeds[j]), frozenset(capable[j] or {int(rng.integers(1, K + 1))}))
        for j in range(J)
    )
    classes = tuple(DagJobClass(k, (k,), (), float(rng.uniform(0.01, 0.2))) for k in range(1, K + 1))
    spec = DagNetworkSpec(job_classes=classes, servers=servers, task_rates={k: 1.0 for k in range(1, K + 1)})
    total = spec.rate_matrix().sum(axis=1)
    # Scale mu_k so sum_j mu_kj stays below one.
    rates = {k: float(rng.uniform(0.2, 0.95) / total[i]) for i, k in enumerate(spec.task_ids)}
    return spec.with_task_rates(rates)


def random_generic_spec(rng: np.random.Generator) -> tuple[DagNetworkSpec, np.ndarray, np.ndarray]:
    """Two single-task classes on two fully flexible servers with raw rates mu_kj."""
    rates = rng.uniform(0.2, 0.45, size=(2, 2))
    nu = rng.uniform(0.02, 0.08, size=2)
    spec = DagNetworkSpec(
        job_classes=(DagJobClass(1, (1,), (), float(nu[0])), DagJobClass(2, (2,), (), float(nu[1]))),
        servers=(ServerSpec(1, 1.0, frozenset({1, 2})), ServerSpec(2, 1.0, frozenset({1, 2}))),
        task_rates={},
        service_rates={(k + 1, j + 1): float(rates[k, j]) for k in range(2) for j in range(2)},
    )
    return spec, rates, nu


def random_polyhedron(rng: np.random.Generator, max_tasks: int = 3, max_servers: int = 2) -> PolyhedronSpec:
    """C for K <= max_tasks, J <= max_servers, random speeds and capabilities."""
    K, J = int(rng.integers(1, max_tasks + 1)), int(rng.integers(1, max_servers + 1))
    mask = rng.random((K, J)) < 0.6
    for k in range(K):
        if not mask[k].any():
            mask[k, rng.integers(J)] = True
    return PolyhedronSpec(mode=PolyhedronMode.C, alpha=rng.uniform(0.3, 1.5, size=J), mask=mask)
