"""Structural checks for network specs.

All violations are collected before anything is raised so a bad spec
file can be fixed in one pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from . import exceptions
from .rates import nominal_rates
from .specs import RATE_TOLERANCE, DagNetworkSpec, FqnNetworkSpec, NetworkSpec, ServerPoolMixin
from .topology import class_graph


@dataclass
class Violation:
    error: type[exceptions.NetworkSpecError]
    message: str
    ids: tuple = ()

    @property
    def code(self) -> str:
        return self.error.__name__


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, error: type[exceptions.NetworkSpecError], message: str, *ids) -> None:
        self.violations.append(Violation(error, message, tuple(ids)))

    def codes(self) -> list[str]:
        return [v.code for v in self.violations]

    def summary(self) -> str:
        return "\n".join(f"{v.code}: {v.message}" for v in self.violations)

    def raise_for_errors(self) -> None:
        """Raise the first violation's error type, listing every violation."""
        if self.violations:
            raise self.violations[0].error(self.summary())

    def serialize(self) -> list[dict]:
        return [{"code": v.code, "message": v.message, "ids": list(v.ids)} for v in self.violations]


def _check_servers(spec: ServerPoolMixin, report: ValidationReport) -> None:
    known = set(spec.task_ids)
    seen = set()
    for server in spec.servers:
        if server.server_id in seen:
            report.add(exceptions.MalformedServer, f"Duplicate server id {server.server_id}", server.server_id)
        seen.add(server.server_id)
        if not server.capable_tasks:
            report.add(exceptions.MalformedServer, f"Server {server.server_id} cannot serve any task", server.server_id)
        unknown = sorted(set(server.capable_tasks) - known)
        if unknown:
            report.add(
                exceptions.MalformedServer,
                f"Server {server.server_id} lists unknown tasks {unknown}",
                server.server_id,
            )
        if not server.speed > 0:
            report.add(exceptions.MalformedServer, f"Server {server.server_id} has speed {server.speed}", server.server_id)


def _check_rates(spec: ServerPoolMixin, report: ValidationReport) -> None:
    rates = spec.rate_matrix()
    mask = spec.capability_mask()
    for i, k in enumerate(spec.task_ids):
        if not mask[i].any():
            report.add(exceptions.UnservableTask, f"No server can serve task {k}", k)
            continue
        if spec.is_factorized and not spec.task_rates.get(k, 0.0) > 0:
            report.add(exceptions.RateScalingViolation, f"Task {k} needs a positive rate mu_k", k)
            continue
        if not spec.is_factorized and np.any(rates[i][mask[i] > 0] <= 0):
            report.add(exceptions.RateScalingViolation, f"Task {k} has a non-positive mu_kj", k)
            continue
        total = rates[i].sum()
        if total > 1.0 + RATE_TOLERANCE:
            report.add(
                exceptions.RateScalingViolation,
                f"Task {k}: sum of service rates {total:.6g} exceeds 1 per slot, rescale the clock",
                k,
            )


def validate_dag_spec(spec: DagNetworkSpec) -> ValidationReport:
    report = ValidationReport()
    owner: dict[int, int] = {}
    for job_class in spec.job_classes:
        cid = job_class.class_id
        if not job_class.nodes:
            report.add(exceptions.MalformedClass, f"Class {cid} has no nodes", cid)
            continue
        if len(set(job_class.nodes)) != len(job_class.nodes):
            report.add(exceptions.MalformedClass, f"Class {cid} repeats a node", cid)
        for k in job_class.nodes:
            if k in owner and owner[k] != cid:
                report.add(exceptions.MalformedClass, f"Task {k} belongs to classes {owner[k]} and {cid}", k)
            owner.setdefault(k, cid)
        stray = sorted({k for edge in job_class.edges for k in edge} - set(job_class.nodes))
        if stray:
            report.add(exceptions.MalformedClass, f"Class {cid} has edges to foreign nodes {stray}", cid)
            continue
        graph = class_graph(job_class)
        if not nx.is_directed_acyclic_graph(graph):
            report.add(exceptions.CyclicGraph, f"Class {cid} has a directed cycle", cid)
        if not nx.is_weakly_connected(graph):
            report.add(exceptions.DisconnectedClass, f"Class {cid} is not connected", cid)
        if not 0.0 < job_class.arrival_rate < 1.0:
            report.add(
                exceptions.ArrivalRateOutOfRange,
                f"Class {cid} arrival rate {job_class.arrival_rate} is outside (0, 1)",
                cid,
            )
    _check_servers(spec, report)
    _check_rates(spec, report)
    return report


def validate_fqn_spec(spec: FqnNetworkSpec) -> ValidationReport:
    report = ValidationReport()
    K = spec.num_queues
    if len(spec.arrival_rates) != K:
        report.add(exceptions.ArrivalRateOutOfRange, f"Expected {K} arrival rates, got {len(spec.arrival_rates)}")
    for k, rate in zip(spec.task_ids, spec.arrival_rates):
        if not 0.0 <= rate < 1.0:
            report.add(exceptions.ArrivalRateOutOfRange, f"Queue {k} arrival rate {rate} is outside [0, 1)", k)
    if len(spec.routing) != K or any(len(row) != K for row in spec.routing):
        report.add(exceptions.InvalidRouting, f"Routing matrix must be {K}x{K}")
        _check_servers(spec, report)
        return report
    routing = spec.routing_matrix()
    for i, k in enumerate(spec.task_ids):
        if np.any(routing[i] < 0) or np.any(routing[i] > 1):
            report.add(exceptions.InvalidRouting, f"Row {k} has entries outside [0, 1]", k)
        elif routing[i].sum() > 1.0 + RATE_TOLERANCE:
            report.add(exceptions.InvalidRouting, f"Row {k} sums to {routing[i].sum():.6g} > 1", k)
    _check_servers(spec, report)
    _check_rates(spec, report)
    if report.ok:
        try:
            nominal_rates(spec)
        except (exceptions.SingularRouting, exceptions.NegativeNominalRate) as e:
            report.add(type(e), str(e))
    return report


def validate_spec(spec: NetworkSpec) -> ValidationReport:
    if isinstance(spec, DagNetworkSpec):
        return validate_dag_spec(spec)
    return validate_fqn_spec(spec)
