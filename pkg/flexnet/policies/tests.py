import numpy as np
import pytest
from django.test import SimpleTestCase

from network.rates import nominal_rates
from network.serializers import load_bundled_spec
from network.specs import DagJobClass, DagNetworkSpec, FqnNetworkSpec, ServerSpec
from planner.exceptions import InfeasiblePlan
from planner.plan import solve_static_plan
from projection.polyhedron import PolyhedronMode, PolyhedronSpec, membership
from . import updates
from .exceptions import InvalidPolicyConfig, InvalidStepSize, UnknownPolicy
from .registry import build_policy
from .schedule import StepSizeSchedule
from .state import PolicyState, SlotObservation


def obs(delta_q, nonempty):
    return SlotObservation(np.asarray(delta_q, dtype=float), np.asarray(nonempty, dtype=bool))


def two_queue_dag():
    return DagNetworkSpec(
        job_classes=(DagJobClass(1, (1,), (), 0.1), DagJobClass(2, (2,), (), 0.1)),
        servers=(ServerSpec(1, 1.0, frozenset({1, 2})),),
        task_rates={1: 0.5, 2: 0.5},
    )


def two_queue_fqn():
    return FqnNetworkSpec(
        num_queues=2,
        servers=(ServerSpec(1, 1.0, frozenset({1, 2})),),
        task_rates={1: 0.5, 2: 0.5},
        arrival_rates=(0.1, 0.1),
        routing=((0.0, 0.0), (0.0, 0.0)),
    )


class TestStepSizeSchedule(SimpleTestCase):
    def test_power_law(self):
        schedule = StepSizeSchedule(0.6)
        self.assertAlmostEqual(schedule(1), 1.0)
        self.assertAlmostEqual(schedule(32), 32 ** -0.6)

    def test_exponent_range(self):
        StepSizeSchedule(1.0)
        for exponent in (0.4, 0.5, 1.5):
            with self.assertRaises(InvalidStepSize):
                StepSizeSchedule(exponent)

    def test_explicit_sequence(self):
        schedule = StepSizeSchedule.explicit([0.3, 0.2])
        assert [schedule(n) for n in (1, 2, 3, 10)] == [0.3, 0.2, 0.2, 0.2]
        with self.assertRaises(InvalidStepSize):
            StepSizeSchedule.explicit([0.1, 0.2])
        with self.assertRaises(InvalidStepSize):
            schedule(0)


class TestRobustDagUpdate(SimpleTestCase):
    def setUp(self):
        self.spec = load_bundled_spec("dag5")

    def test_zero_change_keeps_interior_point(self):
        policy = build_policy("robust", spec=self.spec, p0=0.1)
        before = policy.allocation.copy()
        policy.observe(obs(np.zeros(6), np.ones(5)))
        np.testing.assert_allclose(policy.allocation, before, atol=1e-12)
        assert policy.state.n == 2

    def test_scalar_update(self):
        spec = DagNetworkSpec(
            job_classes=(DagJobClass(1, (1,), (), 0.2),),
            servers=(ServerSpec(1, 1.0, frozenset({1})),),
            task_rates={1: 0.5},
        )
        policy = build_policy("robust", spec=spec, p0=0.5, schedule=StepSizeSchedule.explicit([0.1]))
        policy.observe(obs([1], [True]))
        np.testing.assert_allclose(policy.allocation, [0.6], atol=1e-12)

    def test_gate_leaves_only_delta(self):
        policy = build_policy(
            "robust-delta", spec=self.spec, p0=0.1, delta=0.01, schedule=StepSizeSchedule.explicit([0.001])
        )
        policy.observe(obs(np.ones(6), [True, False, True, True, True]))
        p = policy.allocation
        self.assertAlmostEqual(p[1], 0.11, places=9)
        # H_1 is the single root queue (0, 1).
        self.assertAlmostEqual(p[0], 0.111, places=9)

    def test_scaled_delta(self):
        policy = build_policy(
            "robust-delta",
            spec=self.spec,
            p0=0.1,
            delta=0.01,
            scaled_delta=True,
            schedule=StepSizeSchedule.explicit([0.5]),
        )
        policy.observe(obs(np.zeros(6), np.zeros(5)))
        np.testing.assert_allclose(policy.allocation, np.full(5, 0.105), atol=1e-9)

    def test_gating_without_delta(self):
        policy = build_policy("robust", spec=self.spec, p0=0.1)
        before = policy.allocation.copy()
        policy.observe(obs(np.ones(6), np.zeros(5)))
        np.testing.assert_allclose(policy.allocation, before, atol=1e-12)

    def test_allocation_stays_feasible(self):
        rng = np.random.default_rng(2)
        policy = build_policy("robust-eps", spec=self.spec, schedule=StepSizeSchedule.explicit([0.2]))
        for n in range(200):
            policy.observe(obs(rng.integers(-1, 2, size=6), rng.random(5) < 0.7))
            if n % 20 == 0:
                assert membership(policy.state.poly, policy.allocation)


class TestRobustFqnUpdate(SimpleTestCase):
    def test_zero_change(self):
        policy = build_policy("robust", spec=load_bundled_spec("fqn3"), p0=0.2)
        before = policy.allocation.copy()
        policy.observe(obs(np.zeros(3), np.ones(3)))
        np.testing.assert_allclose(policy.allocation, before, atol=1e-12)
        assert policy.update is updates.robust_fqn_update

    def test_projects_onto_c_eps(self):
        spec = load_bundled_spec("fqn3")
        for name in ("robust", "robust-eps"):
            policy = build_policy(name, spec=spec, schedule=StepSizeSchedule.explicit([0.5]))
            assert policy.state.poly.mode is PolyhedronMode.C_EPS
            self.assertAlmostEqual(policy.state.poly.epsilon0, 0.1)
            policy.observe(obs([-1, -1, -1], [1, 1, 1]))
            assert policy.allocation.min() >= 0.1 - 1e-8

    def test_no_routing_matches_single_node_dags(self):
        schedule = StepSizeSchedule.explicit([0.05])
        on_fqn = build_policy("robust", spec=two_queue_fqn(), p0=0.2, schedule=schedule)
        on_dag = build_policy("robust-eps", spec=two_queue_dag(), p0=0.2, schedule=schedule)
        for delta_q, nonempty in [([1, 0], [1, 1]), ([2, -1], [1, 0]), ([1, 1], [1, 1])]:
            on_fqn.observe(obs(delta_q, nonempty))
            on_dag.observe(obs(delta_q, nonempty))
            np.testing.assert_array_equal(on_fqn.allocation, on_dag.allocation)

    def test_routing_inverse_mixes_queues(self):
        policy = build_policy(
            "robust", spec=load_bundled_spec("fqn3"), p0=0.2, schedule=StepSizeSchedule.explicit([0.01])
        )
        policy.observe(obs([1, 0, 0], [1, 1, 1]))
        expected = 0.2 + 0.01 * policy.state.routing_inverse[:, 0]
        np.testing.assert_allclose(policy.allocation, expected, atol=1e-9)


class TestGenericLiftedUpdate(SimpleTestCase):
    def test_identical_term_for_every_server(self):
        policy = build_policy("generic-lifted", spec=load_bundled_spec("xmodel"), p0=0.1)
        rng = np.random.default_rng(4)
        for _ in range(50):
            policy.observe(obs(rng.integers(-1, 2, size=2), [True, True]))
            np.testing.assert_allclose(policy.allocation[:, 0], policy.allocation[:, 1], atol=1e-12)

    def test_zero_change(self):
        policy = build_policy("generic-lifted", spec=load_bundled_spec("xmodel"), p0=0.1)
        policy.observe(obs([0, 0], [True, True]))
        np.testing.assert_allclose(policy.allocation, np.full((2, 2), 0.1))

    def test_needs_a_dag(self):
        with self.assertRaises(InvalidPolicyConfig):
            build_policy("generic-lifted", spec=load_bundled_spec("fqn3"))


class TestOracleUpdates(SimpleTestCase):
    def test_target_is_a_fixed_point(self):
        spec = load_bundled_spec("dag5")
        nu, mu = nominal_rates(spec).nu, spec.task_rate_vector()
        policy = build_policy("oracle-gradient", spec=spec, p0=nu / mu)
        policy.observe(None)
        np.testing.assert_allclose(policy.allocation, nu / mu, atol=1e-9)

    def test_scalar_recursion_converges(self):
        poly = PolyhedronSpec(mode=PolyhedronMode.C, alpha=np.ones(1), mask=np.ones((1, 1)))
        state = PolicyState(p=np.zeros(1), poly=poly, schedule=StepSizeSchedule(0.6))
        nu, mu = np.array([0.2]), np.array([0.5])
        for _ in range(100_000):
            updates.oracle_gradient_update(state, nu, mu)
        assert abs(state.p[0] - 0.4) < 1e-3

    def test_gradient_form_decreases_objective(self):
        spec = load_bundled_spec("dag5")
        nu, mu = nominal_rates(spec).nu, spec.task_rate_vector()
        policy = build_policy(
            "oracle-gradient", spec=spec, premultiply=True, schedule=StepSizeSchedule.explicit([0.05])
        )
        values = []
        for _ in range(100):
            values.append(updates.allocation_objective(nu, mu, policy.allocation))
            policy.observe(None)
        assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))

    def test_lifted_gradient_escapes_the_symmetric_point(self):
        spec = load_bundled_spec("xmodel")
        policy = build_policy("oracle-lifted", spec=spec, p0=0.5, schedule=StepSizeSchedule(0.6))
        for _ in range(20_000):
            policy.observe(None)
        served = (spec.rate_matrix() * policy.allocation).sum(axis=1)
        assert np.all(served >= 0.3 - 5e-3)

    def test_skewed_lifted_form_keeps_the_symmetric_point(self):
        spec = load_bundled_spec("xmodel")
        policy = build_policy("oracle-lifted", spec=spec, p0=0.5, premultiply=False)
        for _ in range(100):
            policy.observe(None)
        np.testing.assert_allclose(policy.allocation, np.full((2, 2), 0.5), atol=1e-12)


class TestStaticPolicy(SimpleTestCase):
    def test_dag5(self):
        spec = load_bundled_spec("dag5")
        p = updates.static_oracle_policy(solve_static_plan(spec), spec.speeds())
        assert np.all(spec.task_rate_vector() * p >= 0.23 - 1e-9)

    def test_infeasible_plan_is_rejected(self):
        spec = load_bundled_spec("dag5").with_arrival_rates([0.3])
        with self.assertRaises(InfeasiblePlan):
            updates.static_oracle_policy(solve_static_plan(spec), spec.speeds())

    def test_single_task_single_server(self):
        spec = DagNetworkSpec(
            job_classes=(DagJobClass(1, (1,), (), 0.25),),
            servers=(ServerSpec(1, 1.0, frozenset({1})),),
            task_rates={1: 0.5},
        )
        p = updates.static_oracle_policy(solve_static_plan(spec), spec.speeds())
        np.testing.assert_allclose(p, [0.5], atol=1e-12)

    def test_registry_never_updates(self):
        policy = build_policy("static-lp", spec=load_bundled_spec("xmodel"))
        before = policy.allocation.copy()
        policy.observe(obs([1, 1], [True, True]))
        np.testing.assert_array_equal(policy.allocation, before)
        np.testing.assert_allclose(policy.service_probabilities(load_bundled_spec("xmodel").rate_matrix()), 0.3)


class TestRegistry(SimpleTestCase):
    def test_unknown_name(self):
        with self.assertRaises(UnknownPolicy):
            build_policy("maxweight", spec=load_bundled_spec("dag5"))

    def test_robust_delta_needs_delta(self):
        with self.assertRaises(InvalidPolicyConfig):
            build_policy("robust-delta", spec=load_bundled_spec("dag5"))

    def test_factorized_policies_reject_raw_rates(self):
        with self.assertRaises(InvalidPolicyConfig):
            build_policy("robust", spec=load_bundled_spec("xmodel"))

    def test_robust_eps_starts_at_the_lower_corner(self):
        policy = build_policy("robust-eps", spec=load_bundled_spec("dag5"))
        np.testing.assert_allclose(policy.allocation, np.full(5, 0.0575), atol=1e-7)

    def test_describe(self):
        description = build_policy("robust-delta", spec=load_bundled_spec("dag5"), delta=0.02).describe()
        assert description["name"] == "robust-delta"
        assert description["delta"] == 0.02
        assert description["step_size"] == {"exponent": 0.6}
        assert description["polyhedron"]["mode"] == "c"


@pytest.mark.parametrize("name", ["robust", "robust-eps", "frozen", "static-lp"])
def test_service_probabilities_are_probabilities(name):
    spec = load_bundled_spec("dag5")
    policy = build_policy(name, spec=spec, p0=1.0)
    probabilities = policy.service_probabilities(spec.task_rate_vector())
    assert np.all(probabilities >= 0)
    assert np.all(probabilities <= 1 + 1e-12)
