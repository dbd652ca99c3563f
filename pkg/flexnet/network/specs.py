"""Immutable descriptions of fork-join DAG networks and flexible queueing networks."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

TaskId = int
ServerId = int
QueueId = tuple[int, int]

# Slack applied to the "sum of rates at most one" precondition.
RATE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class DagJobClass:
    """A job type: one DAG of task types arriving as a Bernoulli stream."""

    class_id: int
    nodes: tuple[TaskId, ...]
    edges: tuple[tuple[TaskId, TaskId], ...]
    arrival_rate: float

    @cached_property
    def roots(self) -> tuple[TaskId, ...]:
        """Nodes without an incoming edge."""
        targets = {child for _, child in self.edges}
        return tuple(sorted(k for k in self.nodes if k not in targets))


@dataclass(frozen=True)
class ServerSpec:
    """A server with speed alpha_j that can work on the tasks in T_j."""

    server_id: ServerId
    speed: float
    capable_tasks: frozenset[TaskId]


class ServerPoolMixin:
    """Shared server/rate bookkeeping for both network kinds.

    Classes using this mixin provide ``servers``, ``task_rates``,
    ``service_rates`` and ``task_ids``.
    """

    servers: tuple[ServerSpec, ...]
    task_rates: Mapping[TaskId, float]
    service_rates: Mapping[tuple[TaskId, ServerId], float] | None

    @property
    def num_tasks(self) -> int:
        return len(self.task_ids)

    @property
    def num_servers(self) -> int:
        return len(self.servers)

    @cached_property
    def task_index(self) -> dict[TaskId, int]:
        return {k: i for i, k in enumerate(self.task_ids)}

    @cached_property
    def server_ids(self) -> tuple[ServerId, ...]:
        return tuple(s.server_id for s in self.servers)

    @property
    def is_factorized(self) -> bool:
        """True when mu_kj = mu_k * alpha_j, False for raw per-pair rates."""
        return self.service_rates is None

    def capable_servers(self, task: TaskId) -> tuple[ServerId, ...]:
        """The set S_k of servers able to work on a task."""
        return tuple(s.server_id for s in self.servers if task in s.capable_tasks)

    def speeds(self) -> np.ndarray:
        return np.array([s.speed for s in self.servers], dtype=float)

    def capability_mask(self) -> np.ndarray:
        """K x J float mask, 1.0 where server j can work on task k."""
        mask = np.zeros((self.num_tasks, self.num_servers))
        for j, server in enumerate(self.servers):
            for k in server.capable_tasks:
                if k in self.task_index:
                    mask[self.task_index[k], j] = 1.0
        return mask

    def task_rate_vector(self) -> np.ndarray:
        """mu_k in task order (zeros where only raw rates are given)."""
        return np.array([self.task_rates.get(k, 0.0) for k in self.task_ids], dtype=float)

    def rate_matrix(self) -> np.ndarray:
        """Lifted service rates mu_kj, zero outside the capability mask."""
        mask = self.capability_mask()
        if self.service_rates is None:
            return np.outer(self.task_rate_vector(), self.speeds()) * mask
        rates = np.zeros_like(mask)
        for (k, j), value in self.service_rates.items():
            if k in self.task_index and j in self.server_ids:
                rates[self.task_index[k], self.server_ids.index(j)] = value
        return rates * mask

    def max_service_probability(self) -> np.ndarray:
        """sum_{j in S_k} mu_kj, the service probability at full effort."""
        return self.rate_matrix().sum(axis=1)


@dataclass(frozen=True)
class DagNetworkSpec(ServerPoolMixin):
    """Job classes, each a DAG of task types, served by cooperative servers."""

    job_classes: tuple[DagJobClass, ...]
    servers: tuple[ServerSpec, ...]
    task_rates: Mapping[TaskId, float]
    service_rates: Mapping[tuple[TaskId, ServerId], float] | None = None
    name: str = ""
    assumed: tuple[str, ...] = field(default=(), compare=False)

    kind = "dag"

    @cached_property
    def task_ids(self) -> tuple[TaskId, ...]:
        return tuple(sorted(k for c in self.job_classes for k in c.nodes))

    @cached_property
    def class_of_task(self) -> dict[TaskId, int]:
        """m(k): index of the job class owning each task type."""
        return {k: m for m, c in enumerate(self.job_classes) for k in c.nodes}

    @property
    def arrival_rates(self) -> np.ndarray:
        return np.array([c.arrival_rate for c in self.job_classes], dtype=float)

    def with_arrival_rates(self, rates: Sequence[float]) -> "DagNetworkSpec":
        """A copy with one arrival rate per class, in class order."""
        if len(rates) != len(self.job_classes):
            raise ValueError(
                f"Expected {len(self.job_classes)} arrival rates, got {len(rates)}"
            )
        classes = tuple(replace(c, arrival_rate=float(r)) for c, r in zip(self.job_classes, rates))
        return replace(self, job_classes=classes)

    def with_task_rates(self, task_rates: Mapping[TaskId, float]) -> "DagNetworkSpec":
        return replace(self, task_rates=dict(task_rates))


@dataclass(frozen=True)
class FqnNetworkSpec(ServerPoolMixin):
    """K queues with Markov routing R, per-queue arrivals and flexible servers."""

    num_queues: int
    servers: tuple[ServerSpec, ...]
    task_rates: Mapping[TaskId, float]
    arrival_rates: tuple[float, ...]
    routing: tuple[tuple[float, ...], ...]
    service_rates: Mapping[tuple[TaskId, ServerId], float] | None = None
    name: str = ""
    assumed: tuple[str, ...] = field(default=(), compare=False)

    kind = "fqn"

    @cached_property
    def task_ids(self) -> tuple[TaskId, ...]:
        # Queues are numbered 1..K, a queue and its task type share the id.
        return tuple(range(1, self.num_queues + 1))

    def routing_matrix(self) -> np.ndarray:
        return np.array(self.routing, dtype=float).reshape(self.num_queues, self.num_queues)

    def arrival_vector(self) -> np.ndarray:
        return np.array(self.arrival_rates, dtype=float)

    def with_arrival_rates(self, rates: Sequence[float]) -> "FqnNetworkSpec":
        if len(rates) != self.num_queues:
            raise ValueError(f"Expected {self.num_queues} arrival rates, got {len(rates)}")
        return replace(self, arrival_rates=tuple(float(r) for r in rates))

    def with_task_rates(self, task_rates: Mapping[TaskId, float]) -> "FqnNetworkSpec":
        return replace(self, task_rates=dict(task_rates))


NetworkSpec = DagNetworkSpec | FqnNetworkSpec
