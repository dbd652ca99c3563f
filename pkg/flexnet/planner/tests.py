import numpy as np
import pytest
from django.test import SimpleTestCase

from experiments.instances import random_factorized_spec, random_generic_spec
from experiments.oracles import lifted_grid_rho_star, subset_rho_star
from network.rates import NominalRates, nominal_rates
from network.serializers import load_bundled_spec
from network.specs import DagJobClass, DagNetworkSpec, ServerSpec
from .exceptions import NumericalFailure
from .plan import capacity_boundary, solve_static_plan
from .simplex import solve_lp


class TestSimplex(SimpleTestCase):
    def test_textbook_maximization(self):
        # max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18
        result = solve_lp([-3, -5], A_ub=[[1, 0], [0, 2], [3, 2]], b_ub=[4, 12, 18])
        assert result.optimal
        np.testing.assert_allclose(result.x, [2, 6], atol=1e-9)
        self.assertAlmostEqual(result.objective, -36)

    def test_equality_and_surplus_rows(self):
        # min x + y s.t. x + y >= 2, x - y = 0
        result = solve_lp([1, 1], A_ub=[[-1, -1]], b_ub=[-2], A_eq=[[1, -1]], b_eq=[0])
        np.testing.assert_allclose(result.x, [1, 1], atol=1e-9)

    def test_infeasible_and_unbounded(self):
        assert solve_lp([1], A_ub=[[1]], b_ub=[-1]).status == "infeasible"
        assert solve_lp([-1], A_ub=[[-1]], b_ub=[0]).status == "unbounded"

    def test_redundant_equalities(self):
        result = solve_lp([1, 2], A_eq=[[1, 1], [2, 2]], b_eq=[1, 2])
        np.testing.assert_allclose(result.x, [1, 0], atol=1e-9)

    def test_iteration_cap(self):
        with self.assertRaises(NumericalFailure):
            solve_lp([-3, -5], A_ub=[[1, 0], [0, 2], [3, 2]], b_ub=[4, 12, 18], max_iter=1)


class TestStaticPlan(SimpleTestCase):
    def test_single_task_single_server(self):
        spec = DagNetworkSpec(
            job_classes=(DagJobClass(1, (1,), (), 0.25),),
            servers=(ServerSpec(1, 1.0, frozenset({1})),),
            task_rates={1: 0.5},
        )
        plan = solve_static_plan(spec)
        self.assertAlmostEqual(plan.rho_star, 0.5, places=9)
        assert plan.feasible

    def test_dag5_at_the_boundary(self):
        spec = load_bundled_spec("dag5").with_arrival_rates([6 / 23])
        self.assertAlmostEqual(solve_static_plan(spec).rho_star, 1.0, places=9)

    def test_dag5_nominal_load(self):
        spec = load_bundled_spec("dag5")
        plan = solve_static_plan(spec)
        self.assertAlmostEqual(plan.rho_star, 0.23 * 23 / 6, places=9)
        self.check_plan_invariants(spec, plan)

    def test_xmodel(self):
        spec = load_bundled_spec("xmodel")
        plan = solve_static_plan(spec)
        self.assertAlmostEqual(plan.rho_star, 0.8, places=9)
        self.check_plan_invariants(spec, plan)

    def test_fig8_network(self):
        spec = load_bundled_spec("fqn3")
        self.assertAlmostEqual(solve_static_plan(spec).rho_star, 0.5, places=9)

    def check_plan_invariants(self, spec, plan):
        nu = nominal_rates(spec).nu
        rates = spec.rate_matrix()
        mask = spec.capability_mask()
        assert np.all(nu <= (rates * plan.allocation).sum(axis=1) + 1e-9)
        assert np.all(plan.allocation.sum(axis=0) <= plan.rho_star + 1e-9)
        assert np.all(plan.allocation[mask == 0] == 0)
        assert np.all(plan.allocation >= -1e-12)

    def test_serialize(self):
        spec = load_bundled_spec("xmodel")
        data = solve_static_plan(spec).serialize(spec)
        self.assertAlmostEqual(data["allocation"]["1"]["2"], 0.8)
        self.assertAlmostEqual(data["allocation"]["2"]["1"], 0.8)


class TestCapacityBoundary(SimpleTestCase):
    def test_dag5(self):
        boundary = capacity_boundary(load_bundled_spec("dag5"), [1.0])
        assert abs(boundary - 6 / 23) < 1e-5

    def test_dag5_mode2(self):
        boundary = capacity_boundary(load_bundled_spec("dag5_mode2"), [1.0])
        assert abs(boundary - 3 / 14) < 1e-5

    def test_xmodel(self):
        boundary = capacity_boundary(load_bundled_spec("xmodel"), [1.0, 1.0])
        assert abs(boundary - 0.375) < 1e-5

    def test_single_task_capacity(self):
        spec = DagNetworkSpec(
            job_classes=(DagJobClass(1, (1,), (), 0.1),),
            servers=(ServerSpec(1, 1.0, frozenset({1})), ServerSpec(2, 0.5, frozenset({1}))),
            task_rates={1: 0.6},
        )
        assert abs(capacity_boundary(spec, [1.0]) - 0.9) < 1e-5

    def test_bad_direction(self):
        with self.assertRaises(ValueError):
            capacity_boundary(load_bundled_spec("xmodel"), [0.0, 0.0])
        with self.assertRaises(ValueError):
            capacity_boundary(load_bundled_spec("xmodel"), [1.0])


def test_homogeneity_on_random_instances():
    rng = np.random.default_rng(7)
    for _ in range(20):
        spec = random_factorized_spec(rng, K=int(rng.integers(1, 4)), J=int(rng.integers(1, 4)))
        nu = nominal_rates(spec)
        base = solve_static_plan(spec, nu).rho_star
        for factor in (0.5, 3.0):
            scaled = solve_static_plan(spec, nu.scaled(factor)).rho_star
            assert abs(scaled - factor * base) <= 1e-9


def test_matches_subset_oracle_on_random_instances():
    rng = np.random.default_rng(11)
    for _ in range(50):
        spec = random_factorized_spec(rng, K=int(rng.integers(1, 4)), J=int(rng.integers(1, 4)))
        nu = nominal_rates(spec).nu
        expected = subset_rho_star(spec.task_rate_vector(), spec.speeds(), spec.capability_mask() > 0, nu)
        assert abs(solve_static_plan(spec).rho_star - expected) <= 1e-9


def test_adding_a_server_never_increases_rho():
    rng = np.random.default_rng(3)
    for _ in range(10):
        spec = random_factorized_spec(rng, K=3, J=2)
        extra = ServerSpec(99, 0.3, frozenset({1, 3}))
        bigger = DagNetworkSpec(
            job_classes=spec.job_classes, servers=spec.servers + (extra,), task_rates=spec.task_rates
        )
        assert solve_static_plan(bigger).rho_star <= solve_static_plan(spec).rho_star + 1e-9


@pytest.mark.parametrize("seed", range(5))
def test_matches_lifted_grid_for_generic_rates(seed):
    spec, rates, nu = random_generic_spec(np.random.default_rng(100 + seed))
    rho_star = solve_static_plan(spec, NominalRates(nu)).rho_star
    resolution = 0.04
    grid = lifted_grid_rho_star(rates, np.ones((2, 2)), nu, resolution=resolution)
    assert rho_star <= grid + 1e-9
    # Rounding each p_kj up to the grid adds at most one step per task on a server.
    assert grid - rho_star <= 2 * resolution + 1e-9
