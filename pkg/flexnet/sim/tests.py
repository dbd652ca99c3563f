import mock
import numpy as np
import pandas as pd
import pytest
from django.test import SimpleTestCase

from network.rates import nominal_rates
from network.serializers import load_bundled_spec
from network.specs import DagJobClass, DagNetworkSpec, ServerSpec
from policies.registry import build_policy
from policies.schedule import StepSizeSchedule
from projection.polyhedron import membership
from .arrivals import ArrivalMode, ArrivalProcess
from .engine import DagSimulator, FqnSimulator, job_id, run
from .exceptions import (
    IdentityMismatch,
    InvalidArrivalProcess,
    MemoryGuardExceeded,
    ProbabilityOverflow,
)
from .harness import frozen_estimator_harness
from .metrics import MetricsSeries


def single_node_spec(rate=0.2):
    return DagNetworkSpec(
        job_classes=(DagJobClass(1, (1,), (), rate),),
        servers=(ServerSpec(1, 1.0, frozenset({1})),),
        task_rates={1: 0.5},
    )


def dag5_target():
    spec = load_bundled_spec("dag5")
    return nominal_rates(spec).nu / spec.task_rate_vector()


class TestDagStep(SimpleTestCase):
    def setUp(self):
        self.spec = load_bundled_spec("diamond")
        self.policy = build_policy("frozen", spec=self.spec, p0=0.5)
        self.simulator = DagSimulator(self.spec, self.policy, seed=1)
        self.index = self.simulator.topology.queue_index

    def test_empty_network_without_arrivals(self):
        with mock.patch.object(self.simulator.arrival_stream, "next", return_value=np.ones(1)):
            obs = self.simulator.step()
        assert not obs.delta_q.any()
        assert not obs.nonempty.any()

    def test_synchronized_service(self):
        first, second = job_id(0, 1), job_id(1, 1)
        self.simulator.queues[self.index[(2, 4)]].extend([first, second])
        self.simulator.queues[self.index[(3, 4)]].append(first)
        self.simulator._mark_initial()
        no_arrival = np.ones(1)
        serve_only_4 = np.array([1.0, 1.0, 1.0, 0.0])
        with mock.patch.object(self.simulator.arrival_stream, "next", return_value=no_arrival), mock.patch.object(
            self.simulator.service_stream, "next", return_value=serve_only_4
        ):
            obs = self.simulator.step()
        np.testing.assert_array_equal(obs.nonempty, [False, False, False, True])
        assert obs.delta_q[self.index[(2, 4)]] == -1
        assert obs.delta_q[self.index[(3, 4)]] == -1
        assert list(self.simulator.queues[self.index[(2, 4)]]) == [second]
        self.simulator.check_conservation()

    def test_identity_mismatch(self):
        self.simulator.queues[self.index[(2, 4)]].append(job_id(0, 1))
        self.simulator.queues[self.index[(3, 4)]].append(job_id(1, 1))
        with mock.patch.object(self.simulator.service_stream, "next", return_value=np.zeros(4)):
            with self.assertRaises(IdentityMismatch):
                self.simulator.step()

    def test_probability_overflow(self):
        self.policy.state.p = np.full(4, 2.5)
        with self.assertRaises(ProbabilityOverflow):
            self.simulator.step()


class TestFqnStep(SimpleTestCase):
    def setUp(self):
        spec = load_bundled_spec("fqn3")
        self.simulator = FqnSimulator(spec, build_policy("frozen", spec=spec, p0=0.3), seed=0)

    def test_routing_from_queue_two(self):
        assert self.simulator.route(1, 0.3, 0) == 0
        assert self.simulator.route(1, 0.7, 0) == 2
        assert self.simulator.route(0, 0.0, 0) == 1
        assert self.simulator.route(2, 0.5, 0) is None

    def test_split_matches_routing_probability(self):
        self.simulator.preload(20_000)
        for _ in range(10_000):
            self.simulator.step()
        self.simulator.check_conservation()
        from_two = self.simulator.departures[1]
        # Queue 3 only receives jobs routed out of queue 2.
        share = self.simulator.routed_in[2] / from_two
        assert abs(share - 0.5) < 0.05


class TestArrivalProcess(SimpleTestCase):
    def test_mode_index(self):
        process = ArrivalProcess.mode_switch(1000, [ArrivalMode(), ArrivalMode()])
        assert [process.mode_index(n) for n in (0, 999, 1000, 1999, 2000)] == [0, 0, 1, 1, 0]

    def test_invalid_processes(self):
        with self.assertRaises(InvalidArrivalProcess):
            ArrivalProcess.batch(0)
        with self.assertRaises(InvalidArrivalProcess):
            ArrivalProcess(modes=(ArrivalMode(),))
        with self.assertRaises(InvalidArrivalProcess):
            ArrivalProcess.mode_switch(10, [])

    def test_mode_rates_are_validated(self):
        process = ArrivalProcess.mode_switch(10, [ArrivalMode(task_rates={1: 3.0})])
        with self.assertRaises(ValueError):
            process.mode_specs(single_node_spec())

    def test_batch_arrivals_keep_the_mean_rate(self):
        spec = single_node_spec()
        simulator = DagSimulator(spec, build_policy("frozen", spec=spec), arrivals=ArrivalProcess.batch(5), seed=3)
        for _ in range(20_000):
            obs = simulator.step()
            assert obs.delta_q.max() in (0, 5)
        assert abs(simulator.arrived[0] - 4000) < 700

    def test_mode_switch_changes_service_rates(self):
        spec = load_bundled_spec("dag5")
        modes = [ArrivalMode(), ArrivalMode((1 / 6,), {1: 0.5, 2: 2.0, 3: 1.0, 4: 0.4, 5: 1.0})]
        process = ArrivalProcess.mode_switch(100, modes, batch_size=5)
        simulator = DagSimulator(spec, build_policy("frozen", spec=spec, p0=0.1), arrivals=process)
        np.testing.assert_allclose(simulator.mode_rates[1], [0.5, 2.0, 1.0, 0.4, 1.0])
        for _ in range(300):
            simulator.step()
        simulator.check_conservation()


class TestRun(SimpleTestCase):
    def test_same_seed_same_series(self):
        spec = load_bundled_spec("dag5")
        frames = [
            run(spec, build_policy("robust", spec=spec), horizon=3000, seed=9, sample_every=500).to_frame()
            for _ in range(2)
        ]
        pd.testing.assert_frame_equal(*frames)

    def test_policy_does_not_change_arrivals(self):
        spec = load_bundled_spec("dag5")
        counts = []
        for name in ("robust", "static-lp"):
            simulator = DagSimulator(spec, build_policy(name, spec=spec), seed=4)
            simulator.run(2000)
            counts.append(simulator.arrived.copy())
        np.testing.assert_array_equal(*counts)

    def test_series_shape(self):
        spec = load_bundled_spec("dag5")
        metrics = run(spec, build_policy("robust-eps", spec=spec), horizon=2500, seed=1, sample_every=1000)
        assert metrics.slots == [1000, 2000, 2500]
        frame = metrics.to_frame()
        assert list(frame.columns[:2]) == ["slot", "q_0-1"]
        assert "p_5" in frame.columns
        assert len(metrics.q_over_n) == 3
        assert metrics.tail_slots == 1250
        summary = metrics.summary()
        assert summary["slots"] == 2500
        assert 0 <= summary["nonempty_fraction"] <= 1

    def test_allocation_stays_feasible_during_a_run(self):
        spec = load_bundled_spec("dag5")
        policy = build_policy("robust-delta", spec=spec, delta=0.02)
        run(spec, policy, horizon=5000, seed=2)
        assert membership(policy.state.poly, policy.allocation)

    def test_bundled_specs_conserve_jobs(self):
        for name, policy_name in [("diamond", "robust"), ("xmodel", "generic-lifted"), ("fqn3", "robust")]:
            spec = load_bundled_spec(name)
            run(spec, build_policy(policy_name, spec=spec), horizon=5000, seed=0, conservation_every=100)

    def test_bernoulli_changes_are_bounded(self):
        spec = load_bundled_spec("fqn3")
        simulator = FqnSimulator(spec, build_policy("robust", spec=spec), seed=5)
        for _ in range(5000):
            obs = simulator.step()
            # One arrival or routed job in, one job out.
            assert np.abs(obs.delta_q).max() <= 2

    def test_memory_guard(self):
        spec = load_bundled_spec("xmodel")
        with self.assertRaises(MemoryGuardExceeded) as context:
            run(spec, build_policy("frozen", spec=spec), horizon=10_000, seed=0, queue_cap=50)
        assert context.exception.metrics.final_slot == context.exception.slot

    def test_horizon_must_be_positive(self):
        spec = load_bundled_spec("dag5")
        with self.assertRaises(ValueError):
            run(spec, build_policy("robust", spec=spec), horizon=0)


def test_tail_nonempty_minimum_counts_every_slot():
    metrics = MetricsSeries(
        sample_every=4, queue_labels=["0-1"], allocation_labels=["1"], horizon=8, tail_start=4
    )
    for slot, nonempty in enumerate([True, True, True, True, False, False, True, True]):
        metrics.record_slot(slot, np.array([int(nonempty)]), nonempty)
        if (slot + 1) % 4 == 0:
            metrics.sample(slot + 1, np.zeros(1), np.zeros(1), np.zeros(1))
    # Slot 5 drops the running fraction to 4/6, between the two samples.
    assert metrics.nonempty_fraction == [1.0, 0.75]
    assert metrics.tail_min_nonempty_fraction == pytest.approx(4 / 6)
    assert metrics.tail_slots == 4


class TestEstimatorHarness(SimpleTestCase):
    def test_dag5_at_target(self):
        estimate = frozen_estimator_harness(load_bundled_spec("dag5"), dag5_target(), samples=20_000, seed=1)
        np.testing.assert_allclose(estimate.expected, 0.0, atol=1e-9)
        assert estimate.within(4.0)

    def test_dag5_off_target(self):
        p = dag5_target()
        p[3] = 0.1 / 0.5
        estimate = frozen_estimator_harness(load_bundled_spec("dag5"), p, samples=20_000, seed=2)
        self.assertAlmostEqual(estimate.expected[3], 0.13)
        assert estimate.within(4.0)

    def test_fqn(self):
        estimate = frozen_estimator_harness(load_bundled_spec("fqn3"), [0.3, 0.2, 0.4], samples=20_000, seed=3)
        np.testing.assert_allclose(estimate.expected, [0.2 - 0.15, 0.2 - 0.1, 0.1 - 0.2])
        assert estimate.within(4.0)


def run_robust(spec, name, seed, horizon=10**6, **kwargs):
    policy = build_policy(name, spec=spec, schedule=StepSizeSchedule(0.6), **kwargs)
    metrics = run(spec, policy, horizon=horizon, seed=seed, sample_every=10_000)
    return policy, metrics


@pytest.mark.slow
def test_robust_eps_converges_and_is_rate_stable():
    spec = load_bundled_spec("dag5")
    target = dag5_target()
    close = 0
    for seed in range(5):
        policy, metrics = run_robust(spec, "robust-eps", seed)
        close += np.max(np.abs(policy.allocation - target)) <= 0.05
        assert metrics.max_q_over_n() <= 0.01
        assert metrics.tail_min_nonempty_fraction >= 0.01
    assert close >= 4


@pytest.mark.slow
def test_delta_slack_shrinks_queue_four():
    spec = load_bundled_spec("dag5")
    for seed in range(5):
        _, base = run_robust(spec, "robust", seed)
        _, slack = run_robust(spec, "robust-delta", seed, delta=0.02)
        for label in ("2-4", "3-4"):
            i = base.queue_labels.index(label)
            assert slack.mean_queue_tail[i] <= 0.2 * base.mean_queue_tail[i]


@pytest.mark.slow
def test_xmodel_lifted_update_is_unstable():
    spec = load_bundled_spec("xmodel")
    for seed in range(5):
        policy, metrics = run_robust(spec, "generic-lifted", seed, p0=0.1)
        assert np.max(np.abs(policy.allocation - 0.5)) <= 0.05
        assert metrics.max_q_over_n() >= 0.03


@pytest.mark.slow
def test_fqn_robust_is_rate_stable():
    spec = load_bundled_spec("fqn3")
    _, metrics = run_robust(spec, "robust-eps", seed=0)
    assert metrics.max_q_over_n() <= 0.01


@pytest.mark.slow
def test_static_plan_is_rate_stable():
    spec = load_bundled_spec("dag5")
    metrics = run(spec, build_policy("static-lp", spec=spec), horizon=10**6, seed=0, sample_every=10_000)
    assert metrics.max_q_over_n() <= 0.01
