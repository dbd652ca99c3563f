"""Virtual-queue view of a DAG network.

Every edge (k', k) of a job class gets a FIFO queue holding jobs whose
task k' finished and whose task k has not started. Every root k gets a
queue (0, k) fed by exogenous arrivals.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Mapping

import networkx as nx

from .specs import DagNetworkSpec, QueueId, TaskId

ROOT = 0


@dataclass(frozen=True)
class VirtualQueueTopology:
    queues: tuple[QueueId, ...]
    parents: Mapping[TaskId, tuple[TaskId, ...]]
    children: Mapping[TaskId, tuple[TaskId, ...]]
    roots: frozenset[TaskId]
    longest_path_depth: Mapping[TaskId, int]
    estimator_paths: Mapping[TaskId, tuple[QueueId, ...]]
    class_of_task: Mapping[TaskId, int]

    @cached_property
    def queue_index(self) -> dict[QueueId, int]:
        return {q: i for i, q in enumerate(self.queues)}

    @cached_property
    def task_ids(self) -> tuple[TaskId, ...]:
        return tuple(sorted(self.parents))

    def input_queues(self, task: TaskId) -> tuple[QueueId, ...]:
        """Queues a task of this type consumes from: (0, k) or every (k', k)."""
        if task in self.roots:
            return ((ROOT, task),)
        return tuple((parent, task) for parent in self.parents[task])

    def output_queues(self, task: TaskId) -> tuple[QueueId, ...]:
        return tuple((task, child) for child in self.children[task])

    def root_queues(self, class_index: int) -> tuple[QueueId, ...]:
        """Root queues of one job class, where its arrivals are pushed."""
        return tuple(
            (ROOT, k)
            for k in sorted(self.roots)
            if self.class_of_task[k] == class_index
        )

    def queue_class(self, queue: QueueId) -> int:
        return self.class_of_task[queue[1]]


def class_graph(job_class) -> nx.DiGraph:
    graph = nx.DiGraph()
    graph.add_nodes_from(job_class.nodes)
    graph.add_edges_from(job_class.edges)
    return graph


def build_topology(spec: DagNetworkSpec) -> VirtualQueueTopology:
    """Build queues, parent sets, L_k and the estimator paths H_k.

    Queue order is per class: sorted root queues then sorted edges. H_k walks
    back from k along a longest path, taking the smallest parent id on ties.
    """
    queues: list[QueueId] = []
    parents: dict[TaskId, tuple[TaskId, ...]] = {}
    children: dict[TaskId, tuple[TaskId, ...]] = {}
    depth: dict[TaskId, int] = {}
    roots: set[TaskId] = set()
    class_of_task: dict[TaskId, int] = {}

    for m, job_class in enumerate(spec.job_classes):
        graph = class_graph(job_class)
        for k in nx.lexicographical_topological_sort(graph):
            class_of_task[k] = m
            parents[k] = tuple(sorted(graph.predecessors(k)))
            children[k] = tuple(sorted(graph.successors(k)))
            depth[k] = 1 + max(depth[p] for p in parents[k]) if parents[k] else 0
            if not parents[k]:
                roots.add(k)
        queues.extend((ROOT, k) for k in job_class.roots)
        queues.extend(sorted(tuple(e) for e in job_class.edges))

    paths: dict[TaskId, tuple[QueueId, ...]] = {}
    for k in sorted(parents):
        path: list[QueueId] = []
        current = k
        while parents[current]:
            previous = min(p for p in parents[current] if depth[p] == depth[current] - 1)
            path.append((previous, current))
            current = previous
        path.append((ROOT, current))
        paths[k] = tuple(reversed(path))

    return VirtualQueueTopology(
        queues=tuple(queues),
        parents=parents,
        children=children,
        roots=frozenset(roots),
        longest_path_depth=depth,
        estimator_paths=paths,
        class_of_task=class_of_task,
    )
