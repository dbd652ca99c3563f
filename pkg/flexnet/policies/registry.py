"""Policy names used in run configs and the objects they build."""

from __future__ import annotations

import logging
from typing import Callable

import numpy as np

from network.rates import NominalRates, nominal_rates, routing_inverse
from network.specs import DagNetworkSpec, NetworkSpec
from network.topology import build_topology
from planner.plan import solve_static_plan
from projection.polyhedron import PolyhedronMode, PolyhedronSpec, project
from . import updates
from .exceptions import InvalidPolicyConfig, UnknownPolicy
from .schedule import StepSizeSchedule
from .state import PolicyState, SlotObservation, estimator_path_matrix

logger = logging.getLogger(__name__)

POLICY_NAMES = (
    "robust",
    "robust-eps",
    "robust-delta",
    "generic-lifted",
    "oracle-gradient",
    "oracle-lifted",
    "static-lp",
    "frozen",
)

Update = Callable[[PolicyState, SlotObservation], PolicyState]


class Policy:
    """One policy instance bound to one run."""

    def __init__(self, name: str, state: PolicyState, update: Update | None, description: dict):
        self.name = name
        self.state = state
        self.update = update
        self.description = description

    @property
    def allocation(self) -> np.ndarray:
        """Factorized p^n, or the lifted K x J matrix."""
        return self.state.p

    @property
    def lifted(self) -> bool:
        return self.state.poly.lifted

    def service_probabilities(self, rates: np.ndarray) -> np.ndarray:
        """Per-task success probability: mu_k p_k, or sum_j mu_kj P_kj when lifted."""
        if self.lifted:
            return (rates * self.state.p).sum(axis=1)
        return rates * self.state.p

    def observe(self, obs: SlotObservation) -> None:
        if self.update is not None:
            self.update(self.state, obs)

    def describe(self) -> dict:
        return {
            "name": self.name,
            **self.description,
            "p0": np.asarray(self.description["p0"]).tolist(),
        }


def _initial_allocation(poly: PolyhedronSpec, p0) -> tuple[np.ndarray, np.ndarray | None]:
    """p0 broadcast to the polyhedron's shape and projected onto it."""
    start = np.zeros(poly.shape) if p0 is None else np.broadcast_to(np.asarray(p0, dtype=float), poly.shape)
    result = project(poly, np.array(start))
    witness = None if poly.lifted else result.lifted_witness
    return result.point, witness


def _oracle_gradient(nu: np.ndarray, mu: np.ndarray, premultiply: bool) -> Update:
    def update(state: PolicyState, obs: SlotObservation) -> PolicyState:
        return updates.oracle_gradient_update(state, nu, mu, premultiply=premultiply)

    return update


def _oracle_lifted(nu: np.ndarray, rates: np.ndarray, premultiply: bool) -> Update:
    def update(state: PolicyState, obs: SlotObservation) -> PolicyState:
        return updates.oracle_lifted_update(state, nu, rates, premultiply=premultiply)

    return update


def build_policy(
    name: str,
    *,
    spec: NetworkSpec,
    schedule: StepSizeSchedule | None = None,
    delta: float = 0.0,
    epsilon0: float | None = None,
    p0=None,
    nu: NominalRates | None = None,
    scaled_delta: bool = False,
    premultiply: bool | None = None,
    projection_options: dict | None = None,
) -> Policy:
    """Build a named policy for ``spec``.

    ``robust`` and ``robust-eps`` project onto C and C_eps0. On a routed
    network both use the (I - R^T)^-1 update and project onto C_eps0.
    ``robust-delta`` is ``robust`` with a required positive delta.
    """
    if name not in POLICY_NAMES:
        raise UnknownPolicy(f"Unknown policy {name!r}, expected one of {', '.join(POLICY_NAMES)}")
    if delta < 0:
        raise InvalidPolicyConfig(f"delta must be nonnegative, got {delta}")
    if name == "robust-delta" and delta <= 0:
        raise InvalidPolicyConfig("robust-delta needs a positive delta")
    schedule = schedule or StepSizeSchedule()
    nu = nu or nominal_rates(spec)
    options = projection_options or {}
    is_dag = isinstance(spec, DagNetworkSpec)

    lifted = name in ("generic-lifted", "oracle-lifted") or (
        name in ("static-lp", "frozen") and not spec.is_factorized
    )
    if not lifted and not spec.is_factorized:
        raise InvalidPolicyConfig(f"{name} needs factorized rates mu_kj = mu_k alpha_j, use generic-lifted")
    if name == "generic-lifted" and not is_dag:
        raise InvalidPolicyConfig("generic-lifted is only defined for DAG networks")

    if lifted:
        mode = PolyhedronMode.LIFTED
    elif name == "robust-eps" or (name.startswith("robust") and not is_dag):
        mode = PolyhedronMode.C_EPS
    else:
        mode = PolyhedronMode.C
    poly = PolyhedronSpec.for_network(spec, mode, epsilon0=epsilon0, **options)

    if name == "static-lp":
        plan = solve_static_plan(spec, nu)
        fixed = updates.static_oracle_policy(plan, None if lifted else spec.speeds())
        p, witness = _initial_allocation(poly, fixed)
    else:
        p, witness = _initial_allocation(poly, p0)

    state = PolicyState(
        p=p,
        poly=poly,
        schedule=schedule,
        delta=float(delta),
        witness=witness,
        scaled_delta=scaled_delta,
    )
    update: Update | None
    if name in ("robust", "robust-eps", "robust-delta"):
        if is_dag:
            state.paths = estimator_path_matrix(build_topology(spec))
            update = updates.robust_dag_update
        else:
            state.routing_inverse = routing_inverse(spec)
            update = updates.robust_fqn_update
    elif name == "generic-lifted":
        state.paths = estimator_path_matrix(build_topology(spec))
        update = updates.generic_lifted_update
    elif name == "oracle-gradient":
        update = _oracle_gradient(nu.nu, spec.task_rate_vector(), bool(premultiply))
    elif name == "oracle-lifted":
        update = _oracle_lifted(nu.nu, spec.rate_matrix(), True if premultiply is None else premultiply)
    else:
        update = None

    description = {
        "polyhedron": poly.serialize(),
        "step_size": schedule.serialize(),
        "delta": float(delta),
        "delta_placement": "scaled" if scaled_delta else "literal",
        "p0": p,
    }
    logger.debug("Built policy %s with %s", name, description["polyhedron"])
    return Policy(name, state, update, description)
