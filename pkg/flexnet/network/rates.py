from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .exceptions import NegativeNominalRate, SingularRouting
from .specs import DagNetworkSpec, FqnNetworkSpec, NetworkSpec

logger = logging.getLogger(__name__)

# Above this condition number I - R^T is treated as singular.
MAX_ROUTING_CONDITION = 1e12
NEGATIVE_RATE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class NominalRates:
    """Long-run arrival rate nu_k into every task type (or queue)."""

    nu: np.ndarray

    def __post_init__(self):
        nu = np.array(self.nu, dtype=float)
        nu.setflags(write=False)
        object.__setattr__(self, "nu", nu)

    def scaled(self, factor: float) -> "NominalRates":
        return NominalRates(self.nu * factor)

    def tolist(self) -> list[float]:
        return [float(v) for v in self.nu]


def traffic_matrix(spec: FqnNetworkSpec) -> np.ndarray:
    """I - R^T for a routed network."""
    return np.eye(spec.num_queues) - spec.routing_matrix().T


def routing_inverse(spec: FqnNetworkSpec) -> np.ndarray:
    """(I - R^T)^-1, the matrix mapping queue changes to rate estimates."""
    matrix = traffic_matrix(spec)
    _check_condition(matrix)
    try:
        return np.linalg.inv(matrix)
    except np.linalg.LinAlgError as e:
        raise SingularRouting("I - R^T is singular, the network is not open") from e


def _check_condition(matrix: np.ndarray) -> None:
    condition = np.linalg.cond(matrix)
    if not np.isfinite(condition) or condition > MAX_ROUTING_CONDITION:
        raise SingularRouting(
            f"I - R^T is numerically singular (condition estimate {condition:.3g})"
        )


def nominal_rates(spec: NetworkSpec) -> NominalRates:
    """nu_k = lambda_m(k) for DAGs, the solution of (I - R^T) nu = lambda otherwise."""
    if isinstance(spec, DagNetworkSpec):
        rates = spec.arrival_rates
        return NominalRates(np.array([rates[spec.class_of_task[k]] for k in spec.task_ids]))

    matrix = traffic_matrix(spec)
    _check_condition(matrix)
    try:
        nu = np.linalg.solve(matrix, spec.arrival_vector())
    except np.linalg.LinAlgError as e:
        raise SingularRouting("I - R^T is singular, the network is not open") from e
    if np.any(nu < -NEGATIVE_RATE_TOLERANCE):
        bad = [spec.task_ids[i] for i in np.flatnonzero(nu < -NEGATIVE_RATE_TOLERANCE)]
        raise NegativeNominalRate(f"Traffic equations give negative rates at queues {bad}")
    logger.debug("Nominal rates %s", nu)
    # Round-off below the tolerance is clamped to an exact zero.
    return NominalRates(np.maximum(nu, 0.0))
