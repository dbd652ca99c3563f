"""Static planning LP and the capacity region it defines.

    minimize rho
    s.t. nu_k <= sum_j mu_kj p_kj          for every task k
         sum_{k in T_j} p_kj <= rho        for every server j
         p_kj >= 0, and p_kj = 0 unless server j can serve task k
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from network.rates import NominalRates, nominal_rates
from network.specs import DagNetworkSpec, NetworkSpec
from .exceptions import NumericalFailure
from .simplex import solve_lp

logger = logging.getLogger(__name__)

BOUNDARY_TOLERANCE = 1e-6


@dataclass(frozen=True)
class StaticPlan:
    rho_star: float
    allocation: np.ndarray  # lifted p_kj, K x J
    feasible: bool

    def effective_allocation(self, speeds: np.ndarray) -> np.ndarray:
        """Factorized p_k = sum_j alpha_j p_kj."""
        return self.allocation @ speeds

    def serialize(self, spec: NetworkSpec) -> dict:
        return {
            "rho_star": self.rho_star,
            "feasible": self.feasible,
            "allocation": {
                str(k): {str(j): float(self.allocation[i, s]) for s, j in enumerate(spec.server_ids)}
                for i, k in enumerate(spec.task_ids)
            },
        }


def solve_static_plan(spec: NetworkSpec, nu: NominalRates | None = None) -> StaticPlan:
    if nu is None:
        nu = nominal_rates(spec)
    rates = spec.rate_matrix()
    mask = spec.capability_mask() > 0
    pairs = list(zip(*np.nonzero(mask)))
    K, J = mask.shape
    n = len(pairs) + 1
    rho = n - 1

    A_ub = np.zeros((K + J, n))
    b_ub = np.zeros(K + J)
    for col, (k, j) in enumerate(pairs):
        A_ub[k, col] = -rates[k, j]
        A_ub[K + j, col] = 1.0
    b_ub[:K] = -np.asarray(nu.nu, dtype=float)
    A_ub[K:, rho] = -1.0
    cost = np.zeros(n)
    cost[rho] = 1.0

    result = solve_lp(cost, A_ub, b_ub)
    if not result.optimal:
        # rho is unbounded above so the LP always has a feasible point.
        raise NumericalFailure(f"Static planning LP ended as {result.status}")
    allocation = np.zeros((K, J))
    for col, (k, j) in enumerate(pairs):
        allocation[k, j] = max(result.x[col], 0.0)
    rho_star = max(float(result.x[rho]), 0.0)
    logger.debug("rho* = %.9f after %d pivots", rho_star, result.iterations)
    return StaticPlan(rho_star=rho_star, allocation=allocation, feasible=rho_star <= 1.0 + 1e-9)


def _with_direction(spec: NetworkSpec, direction: np.ndarray, scale: float) -> NetworkSpec:
    return spec.with_arrival_rates(direction * scale)


def capacity_boundary(
    spec: NetworkSpec,
    direction,
    tolerance: float = BOUNDARY_TOLERANCE,
) -> float:
    """sup{t : t * direction in the capacity region}, by bisection on rho* = 1.

    ``direction`` has one entry per job class (DAG) or per queue (FQN).
    """
    direction = np.asarray(direction, dtype=float).ravel()
    size = len(spec.job_classes) if isinstance(spec, DagNetworkSpec) else spec.num_queues
    if direction.size != size:
        raise ValueError(f"Direction needs {size} entries, got {direction.size}")
    if np.any(direction < 0) or not np.any(direction > 0):
        raise ValueError("Direction must be nonnegative and nonzero")

    def rho(t: float) -> float:
        scaled = _with_direction(spec, direction, t)
        return solve_static_plan(scaled, nominal_rates(scaled)).rho_star

    if rho(1.0) <= 0.0:
        return math.inf
    low, high = 0.0, 1.0
    while rho(high) < 1.0:
        low, high = high, high * 2.0
    while high - low > tolerance * 0.5:
        middle = 0.5 * (low + high)
        if rho(middle) < 1.0:
            low = middle
        else:
            high = middle
    return 0.5 * (low + high)
