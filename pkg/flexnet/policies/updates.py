"""Allocation update rules.

Every rule takes the state and mutates it in place: it computes the
pre-projection target, projects it onto ``state.poly`` (warm-started from
the last witness) and advances the step counter. The state is returned
for chaining.
"""

from __future__ import annotations

import numpy as np

from planner.exceptions import InfeasiblePlan
from planner.plan import StaticPlan
from projection.polyhedron import project
from .exceptions import InvalidPolicyConfig
from .state import PolicyState, SlotObservation


def _commit(state: PolicyState, target: np.ndarray) -> PolicyState:
    result = project(state.poly, target, warm=state.witness)
    state.p = result.point
    state.witness = None if state.poly.lifted else result.lifted_witness
    state.n += 1
    return state


def _robust_step(state: PolicyState, gradient: np.ndarray, gate: np.ndarray) -> np.ndarray:
    beta = state.step_size()
    if state.scaled_delta:
        return beta * (gate * gradient + state.delta)
    return beta * gate * gradient + state.delta


def robust_dag_update(state: PolicyState, obs: SlotObservation) -> PolicyState:
    """p_k <- [p_k + beta^n 1_{E_k} sum_{H_k} dQ + delta].

    The literal delta raises every coordinate by delta each slot, so the
    projection settles p on a maximal face of C rather than at a target.
    The scaled form beta^n (1_{E_k} sum_{H_k} dQ + delta) is the one whose
    mean drift points at (nu + delta) / mu.
    """
    if state.paths is None:
        raise InvalidPolicyConfig("The DAG update needs estimator paths")
    gradient = state.paths @ obs.delta_q
    gate = np.asarray(obs.nonempty, dtype=float)
    return _commit(state, state.p + _robust_step(state, gradient, gate))


def robust_fqn_update(state: PolicyState, obs: SlotObservation) -> PolicyState:
    """p <- [p + beta^n E~ (I - R^T)^-1 dQ]."""
    if state.routing_inverse is None:
        raise InvalidPolicyConfig("The routed-network update needs (I - R^T)^-1")
    gradient = state.routing_inverse @ obs.delta_q
    gate = np.asarray(obs.nonempty, dtype=float)
    return _commit(state, state.p + _robust_step(state, gradient, gate))


def generic_lifted_update(state: PolicyState, obs: SlotObservation) -> PolicyState:
    """Every server capable of task k gets the same additive term."""
    if state.paths is None:
        raise InvalidPolicyConfig("The lifted update needs estimator paths")
    gradient = state.paths @ obs.delta_q
    gate = np.asarray(obs.nonempty, dtype=float)
    step = _robust_step(state, gradient, gate)
    return _commit(state, state.p + step[:, None] * state.poly.mask)


def skewed_drift(nu: np.ndarray, mu: np.ndarray, p: np.ndarray) -> np.ndarray:
    """nu_k - mu_k p_k, the mean of the robust estimator at p."""
    return nu - mu * p


def oracle_gradient_update(
    state: PolicyState, nu: np.ndarray, mu: np.ndarray, premultiply: bool = False
) -> PolicyState:
    """Noiseless update with known rates.

    The default skewed form steps along nu - mu p. ``premultiply`` gives
    plain gradient descent on sum_k (nu_k - mu_k p_k)^2 / 2.
    """
    drift = skewed_drift(nu, mu, state.p)
    if premultiply:
        drift = mu * drift
    return _commit(state, state.p + state.step_size() * drift)


def oracle_lifted_update(
    state: PolicyState, nu: np.ndarray, rates: np.ndarray, premultiply: bool = True
) -> PolicyState:
    """Noiseless lifted update for raw rates mu_kj.

    With ``premultiply`` the step is mu_kj (nu_k - sum_j mu_kj P_kj), the
    gradient. Without it every capable server gets nu_k - sum_j mu_kj P_kj.
    """
    drift = nu - (rates * state.p).sum(axis=1)
    step = rates * drift[:, None] if premultiply else drift[:, None] * state.poly.mask
    return _commit(state, state.p + state.step_size() * step)


def static_oracle_policy(plan: StaticPlan, speeds: np.ndarray | None = None) -> np.ndarray:
    """The fixed allocation of a static plan, factorized when speeds are given."""
    if not plan.feasible:
        raise InfeasiblePlan(f"rho* = {plan.rho_star:.6g} > 1, no static allocation is stabilizing")
    if speeds is None:
        return plan.allocation.copy()
    return plan.effective_allocation(np.asarray(speeds, dtype=float))


def allocation_objective(nu: np.ndarray, rates: np.ndarray, p: np.ndarray) -> float:
    """sum_k (nu_k - served_k)^2 / 2 for factorized (mu_k, p_k) or lifted (mu_kj, P_kj)."""
    served = (rates * p).sum(axis=1) if np.ndim(p) == 2 else rates * p
    return float(0.5 * np.sum((np.asarray(nu) - served) ** 2))
