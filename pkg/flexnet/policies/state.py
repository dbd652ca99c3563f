"""Mutable per-run state of an allocation policy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from network.topology import VirtualQueueTopology
from projection.polyhedron import PolyhedronSpec
from .schedule import StepSizeSchedule


@dataclass
class SlotObservation:
    """What the policy sees at the end of one slot.

    ``delta_q`` is indexed like the simulator's queues (topology order for
    DAGs, queue order for FQNs). ``nonempty`` holds 1_{E^n_k} per task, or
    1{Q^n_k > 0} per queue.
    """

    delta_q: np.ndarray
    nonempty: np.ndarray


@dataclass
class PolicyState:
    """p^n with everything the update rules need.

    A state has a single owner. ``n`` is the index of the next step size.
    """

    p: np.ndarray
    poly: PolyhedronSpec
    schedule: StepSizeSchedule
    delta: float = 0.0
    paths: np.ndarray | None = None
    routing_inverse: np.ndarray | None = None
    witness: np.ndarray | None = None
    scaled_delta: bool = False
    n: int = 1

    def step_size(self) -> float:
        return self.schedule(self.n)


def estimator_path_matrix(topology: VirtualQueueTopology) -> np.ndarray:
    """K x Q incidence of the estimator paths: row k selects the queues of H_k."""
    matrix = np.zeros((len(topology.task_ids), len(topology.queues)))
    for row, task in enumerate(topology.task_ids):
        for queue in topology.estimator_paths[task]:
            matrix[row, topology.queue_index[queue]] = 1.0
    return matrix
