"""Monte Carlo check of the robust rate estimators.

With the allocation frozen at p and every queue kept deep, the per-slot
statistic sum_{H_k} dQ (DAG) or [(I - R^T)^-1 dQ]_k (FQN) should average
to nu_k - mu_k p_k.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from network.rates import nominal_rates, routing_inverse
from network.specs import DagNetworkSpec, NetworkSpec
from policies.registry import build_policy
from policies.state import estimator_path_matrix
from .engine import make_simulator

logger = logging.getLogger(__name__)


@dataclass
class EstimatorEstimate:
    mean: np.ndarray
    stderr: np.ndarray
    expected: np.ndarray
    samples: int

    def z_scores(self) -> np.ndarray:
        gap = np.abs(self.mean - self.expected)
        return np.divide(gap, self.stderr, out=np.where(gap > 0, np.inf, 0.0), where=self.stderr > 0)

    def within(self, standard_errors: float = 4.0) -> bool:
        return bool(np.all(self.z_scores() <= standard_errors))


def frozen_estimator_harness(spec: NetworkSpec, p, samples: int, seed: int = 0) -> EstimatorEstimate:
    """Empirical mean and standard error of the update statistic at a fixed p."""
    policy = build_policy("frozen", spec=spec)
    policy.state.p = np.array(p, dtype=float).reshape(policy.state.p.shape)
    simulator = make_simulator(spec, policy, seed=seed, conservation_every=max(samples, 1))
    simulator.preload(samples + 1)

    if isinstance(spec, DagNetworkSpec):
        transform = estimator_path_matrix(simulator.topology)
    else:
        transform = routing_inverse(spec)
    values = np.empty((samples, spec.num_tasks))
    for n in range(samples):
        obs = simulator.step()
        values[n] = transform @ obs.delta_q
    simulator.check_conservation()

    served = policy.service_probabilities(simulator.mode_rates[0])
    expected = nominal_rates(spec).nu - served
    mean = values.mean(axis=0)
    stderr = values.std(axis=0, ddof=1) / np.sqrt(samples)
    logger.debug("Estimator means %s, expected %s", mean, expected)
    return EstimatorEstimate(mean=mean, stderr=stderr, expected=expected, samples=samples)
