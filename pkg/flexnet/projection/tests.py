import numpy as np
from django.test import SimpleTestCase

from experiments.instances import random_polyhedron
from experiments.oracles import factorized_vertices, project_onto_hull, random_point_in_c
from network.rates import nominal_rates
from network.serializers import load_bundled_spec
from .exceptions import DimensionMismatch, EmptyPolyhedron, NoConvergence
from .polyhedron import PolyhedronMode, PolyhedronSpec, default_epsilon0, membership, project


def simplex_poly(K=2, epsilon0=0.0):
    mode = PolyhedronMode.C_EPS if epsilon0 else PolyhedronMode.C
    return PolyhedronSpec(mode=mode, alpha=np.ones(1), mask=np.ones((K, 1)), epsilon0=epsilon0)


class TestProjectExamples(SimpleTestCase):
    def test_clamp_on_unit_interval(self):
        poly = simplex_poly(K=1)
        np.testing.assert_allclose(project(poly, [1.5]).point, [1.0], atol=1e-9)

    def test_interior_point_is_fixed(self):
        poly = simplex_poly(K=1)
        np.testing.assert_allclose(project(poly, [0.3]).point, [0.3], atol=1e-12)

    def test_two_tasks_one_server(self):
        result = project(simplex_poly(), [0.8, 0.8])
        np.testing.assert_allclose(result.point, [0.5, 0.5], atol=1e-8)
        assert result.residual < 1e-6

    def test_two_tasks_matches_grid_search(self):
        x = np.array([0.8, 0.8])
        levels = np.arange(0.0, 1.0 + 5e-4, 1e-3)
        p1, p2 = np.meshgrid(levels, levels, indexing="ij")
        feasible = p1 + p2 <= 1.0 + 1e-12
        distance = np.where(feasible, (p1 - x[0]) ** 2 + (p2 - x[1]) ** 2, np.inf)
        best = np.unravel_index(np.argmin(distance), distance.shape)
        grid_point = np.array([p1[best], p2[best]])
        assert np.linalg.norm(project(simplex_poly(), x).point - grid_point) <= 2e-3

    def test_negative_entries_are_lifted_to_zero(self):
        np.testing.assert_allclose(project(simplex_poly(), [-0.4, 0.3]).point, [0.0, 0.3], atol=1e-9)

    def test_lower_bounds(self):
        result = project(simplex_poly(epsilon0=0.2), [1.0, 0.0])
        np.testing.assert_allclose(result.point, [0.8, 0.2], atol=1e-7)
        assert membership(simplex_poly(epsilon0=0.2), result.point)

    def test_lifted_columns(self):
        spec = load_bundled_spec("xmodel")
        poly = PolyhedronSpec.for_network(spec, PolyhedronMode.LIFTED)
        result = project(poly, np.full((2, 2), 0.7))
        np.testing.assert_allclose(result.point, np.full((2, 2), 0.5), atol=1e-12)
        np.testing.assert_allclose(project(poly, [[0.1, 0.2], [0.3, -1.0]]).point, [[0.1, 0.2], [0.3, 0.0]])


class TestProjectionErrors(SimpleTestCase):
    def test_empty_polyhedron(self):
        with self.assertRaises(EmptyPolyhedron):
            simplex_poly(epsilon0=0.6)

    def test_iteration_cap(self):
        poly = PolyhedronSpec(mode=PolyhedronMode.C, alpha=np.ones(1), mask=np.ones((2, 1)), max_iter=1)
        with self.assertRaises(NoConvergence):
            project(poly, [2.0, 2.0])

    def test_dimension_mismatch(self):
        with self.assertRaises(DimensionMismatch):
            project(simplex_poly(), [0.1, 0.2, 0.3])
        with self.assertRaises(DimensionMismatch):
            membership(simplex_poly(), [0.1])

    def test_non_finite_input(self):
        with self.assertRaises(ValueError):
            project(simplex_poly(), [np.nan, 0.0])


class TestDag5Polyhedron(SimpleTestCase):
    def setUp(self):
        self.spec = load_bundled_spec("dag5")
        self.poly = PolyhedronSpec.for_network(self.spec)
        self.vertices = factorized_vertices(self.spec.speeds(), self.spec.capability_mask())

    def test_matches_vertex_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(3):
            x = rng.uniform(0.0, 1.2, size=5)
            expected = project_onto_hull(self.vertices, x)
            got = project(self.poly, x).point
            assert np.linalg.norm(got - expected) <= 2e-3
            # Same distance to optimum as the lifted-space minimum.
            assert abs(np.sum((x - got) ** 2) - np.sum((x - expected) ** 2)) <= 1e-7

    def test_target_allocation_is_a_member(self):
        nu = nominal_rates(self.spec).nu
        p_star = nu / self.spec.task_rate_vector()
        eps_poly = PolyhedronSpec.for_network(self.spec, PolyhedronMode.C_EPS)
        result = membership(eps_poly, p_star)
        assert result.member
        np.testing.assert_allclose(result.witness @ self.spec.speeds(), p_star, atol=1e-9)

    def test_default_epsilon0(self):
        self.assertAlmostEqual(default_epsilon0(self.spec), 0.5 * 0.23 / 2.0)

    def test_warm_start_does_not_change_the_answer(self):
        x = np.array([0.9, 0.4, 0.3, 0.8, 0.6])
        cold = project(self.poly, x)
        warm = project(self.poly, x + 0.01, warm=cold.lifted_witness)
        again = project(self.poly, x + 0.01)
        np.testing.assert_allclose(warm.point, again.point, atol=1e-7)

    def test_interior_fast_path(self):
        inside = project(self.poly, [0.1, 0.1, 0.1, 0.1, 0.1])
        result = project(self.poly, [0.12, 0.1, 0.1, 0.1, 0.1], warm=inside.lifted_witness)
        assert result.iterations == 0
        np.testing.assert_allclose(result.point, [0.12, 0.1, 0.1, 0.1, 0.1])


class TestMembership(SimpleTestCase):
    def test_origin_is_in_c(self):
        result = membership(simplex_poly(), [0.0, 0.0])
        assert result.member
        np.testing.assert_allclose(result.witness, 0.0)

    def test_origin_is_outside_c_eps(self):
        assert not membership(simplex_poly(epsilon0=0.1), [0.0, 0.0])

    def test_outside_point(self):
        assert not membership(simplex_poly(), [0.7, 0.7])
        assert not membership(simplex_poly(), [-0.1, 0.2])


def test_random_instances_match_vertex_oracle():
    rng = np.random.default_rng(17)
    for _ in range(30):
        poly = random_polyhedron(rng)
        vertices = factorized_vertices(poly.alpha, poly.mask)
        x = rng.uniform(0.0, 2.0, size=poly.num_tasks)
        expected = project_onto_hull(vertices, x)
        result = project(poly, x)
        assert np.linalg.norm(result.point - expected) <= 2e-3
        assert membership(poly, result.point)


def test_idempotence_and_non_expansiveness():
    rng = np.random.default_rng(23)
    for _ in range(30):
        poly = random_polyhedron(rng)
        x, y = rng.uniform(-0.5, 2.0, size=(2, poly.num_tasks))
        px, py = project(poly, x).point, project(poly, y).point
        np.testing.assert_allclose(project(poly, px).point, px, atol=1e-7)
        assert np.linalg.norm(px - py) <= np.linalg.norm(x - y) + 1e-7


def test_variational_inequality():
    rng = np.random.default_rng(29)
    spec = load_bundled_spec("dag5")
    poly = PolyhedronSpec.for_network(spec)
    for _ in range(5):
        x = rng.uniform(0.0, 1.5, size=5)
        point = project(poly, x).point
        for _ in range(20):
            q = random_point_in_c(spec.speeds(), spec.capability_mask(), rng)
            assert np.dot(x - point, q - point) <= 1e-6


def test_projection_stays_inside_c_eps():
    rng = np.random.default_rng(31)
    spec = load_bundled_spec("fqn3")
    poly = PolyhedronSpec.for_network(spec, PolyhedronMode.C_EPS)
    for _ in range(10):
        result = project(poly, rng.uniform(-0.5, 1.5, size=3))
        assert np.all(result.point >= poly.epsilon0 - 1e-8)
        assert membership(poly, result.point)
