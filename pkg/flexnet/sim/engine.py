"""Slotted-time simulation of DAG networks and flexible queueing networks.

One slot, in order:

1. read which task types are available from the start-of-slot queues;
2. serve every available task type with one Bernoulli draw at its
   aggregate probability, moving the head-of-line job id downstream;
3. append exogenous arrivals;
4. hand the start-to-start queue changes to the policy.

Each run owns three Philox streams spawned from its seed: arrivals,
services and routing. Every stream is consumed at a fixed rate per slot
so the arrival sample path does not depend on the policy.
"""

from __future__ import annotations

import logging
from collections import deque

import numpy as np

from network.specs import DagNetworkSpec, FqnNetworkSpec, NetworkSpec
from network.topology import build_topology
from policies.registry import Policy
from policies.state import SlotObservation
from .arrivals import ArrivalProcess
from .exceptions import (
    ConservationViolation,
    IdentityMismatch,
    MemoryGuardExceeded,
    ProbabilityOverflow,
)
from .metrics import MetricsSeries

logger = logging.getLogger(__name__)

DEFAULT_QUEUE_CAP = 10**8
DEFAULT_CONSERVATION_EVERY = 1000
DEFAULT_SAMPLE_EVERY = 1000
PROBABILITY_TOLERANCE = 1e-12
CLASS_BITS = 8
BLOCK_SIZE = 4096


def job_id(serial: int, class_id: int) -> int:
    """Monotone serial tagged with the job's class in the low bits."""
    return (serial << CLASS_BITS) | class_id


class UniformStream:
    """Uniforms drawn in blocks, handed out one row of ``width`` per slot."""

    def __init__(self, seed: np.random.SeedSequence, width: int, block: int = BLOCK_SIZE):
        self.generator = np.random.Generator(np.random.Philox(seed))
        self.width = width
        self.block = block
        self._rows = np.empty((0, width))
        self._next = 0

    def next(self) -> np.ndarray:
        if self._next >= len(self._rows):
            self._rows = self.generator.random((self.block, self.width))
            self._next = 0
        row = self._rows[self._next]
        self._next += 1
        return row


class Simulator:
    """Shared bookkeeping: queues, counters, streams and safety checks."""

    kind = ""
    queue_labels: list[str]
    num_sources: int

    def __init__(
        self,
        spec: NetworkSpec,
        policy: Policy,
        arrivals: ArrivalProcess | None = None,
        seed: int = 0,
        queue_cap: int = DEFAULT_QUEUE_CAP,
        conservation_every: int = DEFAULT_CONSERVATION_EVERY,
    ):
        self.spec = spec
        self.policy = policy
        self.arrivals = arrivals or ArrivalProcess.bernoulli()
        self.seed = seed
        self.queue_cap = queue_cap
        self.conservation_every = conservation_every
        self.mode_specs = self.arrivals.mode_specs(spec)
        self.mode_rates = [
            s.rate_matrix() if policy.lifted else s.task_rate_vector() for s in self.mode_specs
        ]
        self.slot = 0
        self.serial = 0
        self.departures = np.zeros(spec.num_tasks, dtype=np.int64)
        self.queues: list[deque] = [deque() for _ in self.queue_labels]
        self.initial_lengths = np.zeros(len(self.queues), dtype=np.int64)
        arrival_seed, service_seed, routing_seed = np.random.SeedSequence(seed).spawn(3)
        self.arrival_stream = UniformStream(arrival_seed, self.num_sources)
        self.service_stream = UniformStream(service_seed, spec.num_tasks)
        self.routing_stream = UniformStream(routing_seed, spec.num_tasks)
        self.arrived = np.zeros(self.num_sources, dtype=np.int64)

    def lengths(self) -> np.ndarray:
        return np.fromiter(map(len, self.queues), dtype=np.int64, count=len(self.queues))

    def preload(self, depth: int) -> None:
        """Fill queues before the first slot (used by the estimator harness)."""
        raise NotImplementedError

    def _mark_initial(self) -> None:
        self.initial_lengths = self.lengths()

    def current_mode(self) -> int:
        return self.arrivals.mode_index(self.slot)

    def service_probabilities(self, mode: int) -> np.ndarray:
        probabilities = self.policy.service_probabilities(self.mode_rates[mode])
        if np.any(probabilities > 1.0 + PROBABILITY_TOLERANCE):
            worst = int(np.argmax(probabilities))
            raise ProbabilityOverflow(
                f"Slot {self.slot}: task {self.spec.task_ids[worst]} would be served "
                f"with probability {probabilities[worst]:.12g}"
            )
        return probabilities

    def _draw_batches(self, mode: int) -> np.ndarray:
        """Number of jobs arriving at each source this slot."""
        rates = self.source_rates(mode)
        u = self.arrival_stream.next()
        size = self.arrivals.batch_size
        return np.where(u < rates / size, size, 0)

    def source_rates(self, mode: int) -> np.ndarray:
        raise NotImplementedError

    def expected_lengths(self) -> np.ndarray:
        raise NotImplementedError

    def check_conservation(self) -> None:
        expected = self.expected_lengths()
        actual = self.lengths()
        if not np.array_equal(expected, actual):
            bad = [self.queue_labels[i] for i in np.flatnonzero(expected != actual)]
            logger.error("Conservation broken at slot %d on queues %s", self.slot, bad)
            raise ConservationViolation(f"Slot {self.slot}: queue lengths disagree with counters on {bad}")

    def _after_slot(self, lengths: np.ndarray) -> None:
        self.slot += 1
        total = int(lengths.sum())
        if total > self.queue_cap:
            logger.warning("Memory guard tripped at slot %d with %d queued jobs", self.slot, total)
            raise MemoryGuardExceeded(
                f"{total} jobs queued after slot {self.slot}, above the cap of {self.queue_cap}",
                slot=self.slot,
                total=total,
            )
        if self.conservation_every and self.slot % self.conservation_every == 0:
            self.check_conservation()

    def allocation_labels(self) -> list[str]:
        if self.policy.lifted:
            return [f"{k}_{j}" for k in self.spec.task_ids for j in self.spec.server_ids]
        return [str(k) for k in self.spec.task_ids]

    def step(self) -> SlotObservation:
        raise NotImplementedError

    def run(self, horizon: int, sample_every: int = DEFAULT_SAMPLE_EVERY) -> MetricsSeries:
        """Simulate ``horizon`` slots and return the sampled metrics.

        On a memory-guard abort the exception carries the metrics so far.
        """
        if horizon < 1:
            raise ValueError(f"Horizon must be at least one slot, got {horizon}")
        metrics = MetricsSeries(
            sample_every=sample_every,
            queue_labels=list(self.queue_labels),
            allocation_labels=self.allocation_labels(),
            horizon=horizon,
            tail_start=horizon // 2,
        )
        try:
            for _ in range(horizon):
                start = self.lengths()
                metrics.record_slot(self.slot, start, bool(np.all(start > 0)))
                self.step()
                if self.slot % sample_every == 0 or self.slot == horizon:
                    metrics.sample(self.slot, self.lengths(), self.policy.allocation, self.departures)
        except MemoryGuardExceeded as e:
            metrics.sample(self.slot, self.lengths(), self.policy.allocation, self.departures)
            e.metrics = metrics
            raise
        self.check_conservation()
        return metrics


class DagSimulator(Simulator):
    kind = "dag"

    def __init__(self, spec: DagNetworkSpec, policy: Policy, **kwargs):
        self.topology = build_topology(spec)
        self.queue_labels = [f"{a}-{b}" for a, b in self.topology.queues]
        self.num_sources = len(spec.job_classes)
        super().__init__(spec, policy, **kwargs)
        index = self.topology.queue_index
        self.inputs = [[index[q] for q in self.topology.input_queues(k)] for k in spec.task_ids]
        self.outputs = [[index[q] for q in self.topology.output_queues(k)] for k in spec.task_ids]
        self.root_queues = [
            [index[q] for q in self.topology.root_queues(m)] for m in range(len(spec.job_classes))
        ]
        self.class_ids = [c.class_id for c in spec.job_classes]
        task_position = spec.task_index
        # Expected queue length = initial + inflow counter - outflow counter.
        self._outflow = [task_position[b] for _, b in self.topology.queues]
        self._inflow = [
            ("class", self.topology.queue_class((a, b))) if a == 0 else ("task", task_position[a])
            for a, b in self.topology.queues
        ]

    def source_rates(self, mode: int) -> np.ndarray:
        return self.mode_specs[mode].arrival_rates

    def preload(self, depth: int) -> None:
        """Put the same ``depth`` job ids, in the same order, on every queue of each class."""
        for m, class_id in enumerate(self.class_ids):
            ids = [job_id(serial, class_id) for serial in range(self.serial, self.serial + depth)]
            for i, queue in enumerate(self.topology.queues):
                if self.topology.queue_class(queue) == m:
                    self.queues[i].extend(ids)
        self.serial += depth
        self._mark_initial()

    def available(self, lengths: np.ndarray) -> np.ndarray:
        """1_{E_k}: every input queue of task k is nonempty."""
        return np.array([all(lengths[i] > 0 for i in inputs) for inputs in self.inputs])

    def expected_lengths(self) -> np.ndarray:
        expected = self.initial_lengths.copy()
        for i, ((source, position), out) in enumerate(zip(self._inflow, self._outflow)):
            inflow = self.arrived[position] if source == "class" else self.departures[position]
            expected[i] += inflow - self.departures[out]
        return expected

    def _serve(self, task: int) -> None:
        heads = [self.queues[i].popleft() for i in self.inputs[task]]
        job = heads[0]
        if any(h != job for h in heads):
            logger.error("Head-of-line ids %s differ for task %s", heads, self.spec.task_ids[task])
            raise IdentityMismatch(
                f"Slot {self.slot}: task {self.spec.task_ids[task]} sees head-of-line jobs {heads}"
            )
        for i in self.outputs[task]:
            self.queues[i].append(job)
        self.departures[task] += 1

    def step(self) -> SlotObservation:
        start = self.lengths()
        mode = self.current_mode()
        available = self.available(start)
        probabilities = self.service_probabilities(mode)
        u = self.service_stream.next()
        for task in np.flatnonzero(available & (u < probabilities)):
            self._serve(task)

        for m, count in enumerate(self._draw_batches(mode)):
            for _ in range(count):
                job = job_id(self.serial, self.class_ids[m])
                self.serial += 1
                for i in self.root_queues[m]:
                    self.queues[i].append(job)
            self.arrived[m] += count

        end = self.lengths()
        obs = SlotObservation(delta_q=(end - start).astype(float), nonempty=available)
        self.policy.observe(obs)
        self._after_slot(end)
        return obs


class FqnSimulator(Simulator):
    kind = "fqn"

    def __init__(self, spec: FqnNetworkSpec, policy: Policy, **kwargs):
        self.queue_labels = [str(k) for k in spec.task_ids]
        self.num_sources = spec.num_queues
        super().__init__(spec, policy, **kwargs)
        self.routed_in = np.zeros(spec.num_queues, dtype=np.int64)
        self.cumulative_routing = [np.cumsum(s.routing_matrix(), axis=1) for s in self.mode_specs]

    def source_rates(self, mode: int) -> np.ndarray:
        return self.mode_specs[mode].arrival_vector()

    def preload(self, depth: int) -> None:
        for k, queue in enumerate(self.queues):
            queue.extend(job_id(serial, k + 1) for serial in range(self.serial, self.serial + depth))
            self.serial += depth
        self._mark_initial()

    def expected_lengths(self) -> np.ndarray:
        return self.initial_lengths + self.arrived + self.routed_in - self.departures

    def route(self, queue: int, u: float, mode: int) -> int | None:
        """Destination of a job finishing at ``queue``, None when it leaves."""
        row = self.cumulative_routing[mode][queue]
        destination = int(np.searchsorted(row, u, side="right"))
        return destination if destination < len(row) else None

    def step(self) -> SlotObservation:
        start = self.lengths()
        mode = self.current_mode()
        nonempty = start > 0
        probabilities = self.service_probabilities(mode)
        u = self.service_stream.next()
        routing = self.routing_stream.next()
        moved = []
        for k in np.flatnonzero(nonempty & (u < probabilities)):
            job = self.queues[k].popleft()
            self.departures[k] += 1
            destination = self.route(k, routing[k], mode)
            if destination is not None:
                moved.append((destination, job))
        for destination, job in moved:
            self.queues[destination].append(job)
            self.routed_in[destination] += 1

        for k, count in enumerate(self._draw_batches(mode)):
            for _ in range(count):
                self.queues[k].append(job_id(self.serial, k + 1))
                self.serial += 1
            self.arrived[k] += count

        end = self.lengths()
        obs = SlotObservation(delta_q=(end - start).astype(float), nonempty=nonempty)
        self.policy.observe(obs)
        self._after_slot(end)
        return obs


def make_simulator(spec: NetworkSpec, policy: Policy, **kwargs) -> Simulator:
    if isinstance(spec, DagNetworkSpec):
        return DagSimulator(spec, policy, **kwargs)
    return FqnSimulator(spec, policy, **kwargs)


def run(
    spec: NetworkSpec,
    policy: Policy,
    arrivals: ArrivalProcess | None = None,
    horizon: int = 1,
    seed: int = 0,
    sample_every: int = DEFAULT_SAMPLE_EVERY,
    **options,
) -> MetricsSeries:
    """Simulate one replication. Deterministic given the seed."""
    simulator = make_simulator(spec, policy, arrivals=arrivals, seed=seed, **options)
    logger.info("Run start: %s, policy %s, seed %d, horizon %d", spec.name or spec.kind, policy.name, seed, horizon)
    metrics = simulator.run(horizon, sample_every=sample_every)
    logger.info("Run end: seed %d, max Q/N %.4g", seed, metrics.max_q_over_n())
    return metrics
