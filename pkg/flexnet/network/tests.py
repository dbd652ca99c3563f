import json

import numpy as np
import pytest
from django.test import SimpleTestCase

from experiments.oracles import fixed_point_rates
from . import exceptions
from .rates import nominal_rates, routing_inverse
from .serializers import load_bundled_spec, load_network_spec, parse_network_spec
from .specs import DagJobClass, DagNetworkSpec, FqnNetworkSpec, ServerSpec
from .topology import build_topology
from .validation import validate_dag_spec, validate_fqn_spec


def diamond_spec(edges=((1, 2), (1, 3), (2, 4), (3, 4)), mu=0.5) -> DagNetworkSpec:
    return DagNetworkSpec(
        job_classes=(DagJobClass(1, (1, 2, 3, 4), tuple(edges), 0.1),),
        servers=(
            ServerSpec(1, 1.0, frozenset({1, 2, 3})),
            ServerSpec(2, 1.0, frozenset({3, 4})),
        ),
        task_rates={1: mu, 2: mu, 3: mu, 4: mu},
    )


def single_node_spec(mu=0.5, rate=0.25) -> DagNetworkSpec:
    return DagNetworkSpec(
        job_classes=(DagJobClass(1, (1,), (), rate),),
        servers=(ServerSpec(1, 1.0, frozenset({1})),),
        task_rates={1: mu},
    )


def fqn_spec(routing, rates=(0.1, 0.0, 0.0)) -> FqnNetworkSpec:
    size = len(routing)
    return FqnNetworkSpec(
        num_queues=size,
        servers=(ServerSpec(1, 1.0, frozenset(range(1, size + 1))),),
        task_rates={k: 0.5 for k in range(1, size + 1)},
        arrival_rates=tuple(rates),
        routing=tuple(tuple(row) for row in routing),
    )


def test_diamond_is_valid():
    assert validate_dag_spec(diamond_spec()).ok


def test_cycle_is_reported():
    report = validate_dag_spec(diamond_spec(edges=((1, 2), (1, 3), (2, 4), (3, 4), (4, 1))))
    assert "CyclicGraph" in report.codes()
    with pytest.raises(exceptions.CyclicGraph):
        report.raise_for_errors()


def test_rate_scaling_violation():
    spec = DagNetworkSpec(
        job_classes=(DagJobClass(1, (1,), (), 0.2),),
        servers=(ServerSpec(1, 1.0, frozenset({1})), ServerSpec(2, 1.0, frozenset({1}))),
        task_rates={1: 0.9},
    )
    assert validate_dag_spec(spec).codes() == ["RateScalingViolation"]


def test_rate_scaling_allows_equality():
    # mu_1 * alpha_1 = 1 exactly, as in the five-task DAG
    assert validate_dag_spec(single_node_spec(mu=1.0)).ok


def test_unservable_disconnected_and_rate_range():
    spec = DagNetworkSpec(
        job_classes=(DagJobClass(1, (1, 2, 3), ((1, 2),), 1.2),),
        servers=(ServerSpec(1, 1.0, frozenset({1, 2})),),
        task_rates={1: 0.5, 2: 0.5, 3: 0.5},
    )
    codes = validate_dag_spec(spec).codes()
    assert "DisconnectedClass" in codes
    assert "ArrivalRateOutOfRange" in codes
    assert "UnservableTask" in codes


def test_overlapping_classes_are_malformed():
    spec = DagNetworkSpec(
        job_classes=(DagJobClass(1, (1,), (), 0.1), DagJobClass(2, (1,), (), 0.1)),
        servers=(ServerSpec(1, 1.0, frozenset({1})),),
        task_rates={1: 0.5},
    )
    assert "MalformedClass" in validate_dag_spec(spec).codes()


class TestTopology(SimpleTestCase):
    def test_diamond_queues(self):
        topology = build_topology(diamond_spec())
        self.assertEqual(topology.queues, ((0, 1), (1, 2), (1, 3), (2, 4), (3, 4)))
        self.assertEqual(topology.parents[4], (2, 3))
        self.assertEqual(topology.roots, frozenset({1}))

    def test_diamond_estimator_path(self):
        topology = build_topology(diamond_spec())
        self.assertEqual(topology.estimator_paths[4], ((0, 1), (1, 2), (2, 4)))
        self.assertEqual(topology.estimator_paths[1], ((0, 1),))

    def test_single_node(self):
        topology = build_topology(single_node_spec())
        self.assertEqual(topology.queues, ((0, 1),))
        self.assertEqual(topology.longest_path_depth[1], 0)
        self.assertEqual(topology.estimator_paths[1], ((0, 1),))

    def test_path_lengths_follow_depth(self):
        spec = load_bundled_spec("dag5")
        topology = build_topology(spec)
        for k, path in topology.estimator_paths.items():
            assert len(path) == topology.longest_path_depth[k] + 1
            assert (topology.longest_path_depth[k] == 0) == (not topology.parents[k])
            # contiguous: each queue starts where the previous one ended
            for (_, head), (tail, _) in zip(path, path[1:]):
                assert head == tail
            assert path[-1][1] == k

    def test_queue_count(self):
        spec = load_bundled_spec("xmodel")
        topology = build_topology(spec)
        expected = sum(len(c.edges) + len(c.roots) for c in spec.job_classes)
        self.assertEqual(len(topology.queues), expected)
        self.assertEqual(topology.root_queues(1), ((0, 2),))

    def test_deterministic(self):
        spec = load_bundled_spec("dag5")
        assert build_topology(spec) == build_topology(load_bundled_spec("dag5"))


class TestNominalRates(SimpleTestCase):
    def test_dag_rates_copy_class_rate(self):
        nu = nominal_rates(load_bundled_spec("dag5")).nu
        np.testing.assert_allclose(nu, [0.23] * 5)

    def test_fig8_rates(self):
        spec = load_bundled_spec("fqn3")
        nu = nominal_rates(spec).nu
        np.testing.assert_allclose(nu, [0.2, 0.2, 0.1], atol=1e-12)
        residual = (np.eye(3) - spec.routing_matrix().T) @ nu - spec.arrival_vector()
        assert np.abs(residual).max() <= 1e-10
        oracle = fixed_point_rates(spec.routing_matrix(), spec.arrival_vector(), iterations=10_000)
        assert np.abs(oracle - nu).max() <= 1e-8

    def test_no_routing_is_identity(self):
        spec = fqn_spec([[0.0] * 3] * 3, rates=(0.1, 0.2, 0.3))
        np.testing.assert_allclose(nominal_rates(spec).nu, [0.1, 0.2, 0.3])
        np.testing.assert_allclose(routing_inverse(spec), np.eye(3))

    def test_closed_loop_is_singular(self):
        spec = fqn_spec([[0.0, 1.0], [1.0, 0.0]], rates=(0.1, 0.0))
        with self.assertRaises(exceptions.SingularRouting):
            nominal_rates(spec)
        assert "SingularRouting" in validate_fqn_spec(spec).codes()

    def test_negative_rates_are_rejected(self):
        spec = fqn_spec([[0.0, 1.5], [1.5, 0.0]], rates=(0.1, 0.1))
        with self.assertRaises(exceptions.NegativeNominalRate):
            nominal_rates(spec)

    def test_rates_are_read_only(self):
        nu = nominal_rates(load_bundled_spec("dag5")).nu
        with self.assertRaises(ValueError):
            nu[0] = 1.0


class TestSpecSchema(SimpleTestCase):
    def test_bundled_specs_validate(self):
        for name in ("diamond", "dag5", "dag5_mode2", "xmodel"):
            assert validate_dag_spec(load_bundled_spec(name)).ok, name
        assert validate_fqn_spec(load_bundled_spec("fqn3")).ok

    def test_generic_rates(self):
        spec = load_bundled_spec("xmodel")
        assert not spec.is_factorized
        np.testing.assert_allclose(spec.rate_matrix(), [[0.125, 0.375], [0.375, 0.125]])

    def test_factorized_rates(self):
        spec = load_bundled_spec("dag5")
        rates = spec.rate_matrix()
        self.assertAlmostEqual(rates[3, 0], 0.5)
        self.assertAlmostEqual(rates[3, 1], 0.25)
        self.assertEqual(rates[0, 1], 0.0)

    def test_top_level_lambda_overrides(self):
        data = {
            "kind": "dag",
            "classes": [{"id": 1, "nodes": [1]}],
            "servers": [{"id": 1, "capable": [1]}],
            "mu": {"1": 0.5},
            "lambda": 0.25,
        }
        spec = parse_network_spec(data)
        self.assertEqual(spec.job_classes[0].arrival_rate, 0.25)
        self.assertEqual(spec.servers[0].speed, 1.0)

    def test_missing_rates_are_rejected(self):
        data = {"kind": "dag", "classes": [{"id": 1, "nodes": [1], "lambda": 0.1}], "servers": [{"id": 1, "capable": [1]}]}
        with self.assertRaises(exceptions.MalformedSpec):
            parse_network_spec(data)

    def test_fqn_lambda_length(self):
        data = {
            "kind": "fqn",
            "servers": [{"id": 1, "capable": [1, 2]}],
            "mu": {"1": 0.5, "2": 0.5},
            "routing": [[0, 0], [0, 0]],
            "lambda": [0.1],
        }
        with self.assertRaises(exceptions.MalformedSpec):
            parse_network_spec(data)


def test_spec_name_defaults_to_file_stem(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(
        json.dumps(
            {
                "kind": "dag",
                "classes": [{"id": 1, "nodes": [1], "lambda": 0.1}],
                "servers": [{"id": 1, "capable": [1]}],
                "mu": {"1": 0.5},
            }
        )
    )
    assert load_network_spec(path).name == "tiny"


def test_malformed_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(exceptions.MalformedSpec):
        load_network_spec(path)
