"""JSON network-spec schema.

    {"kind": "dag" | "fqn",
     "classes": [{"id": 1, "nodes": [...], "edges": [[1, 2], ...], "lambda": 0.2}],
     "servers": [{"id": 1, "capable": [1, 2], "speed": 1.0}],
     "mu": {"1": 0.5}, "mu_kj": {"1": {"1": 0.125}}, "alpha": {"1": 1.0},
     "lambda": 0.23 | [..], "routing": [[...]], "num_queues": 3,
     "assumed": ["..."]}

"lambda" at the top level overrides per-class rates: a scalar for single
class DAGs, a list in class order for DAGs or in queue order for FQNs.
Server speeds come from "alpha" when given, else from each server's
"speed", else default to 1.
"""

import json
from dataclasses import replace
from pathlib import Path

from rest_framework import serializers

from .exceptions import MalformedSpec
from .specs import DagJobClass, DagNetworkSpec, FqnNetworkSpec, NetworkSpec, ServerSpec


def _int_keys(mapping: dict, label: str) -> dict[int, object]:
    try:
        return {int(key): value for key, value in mapping.items()}
    except (TypeError, ValueError) as e:
        raise serializers.ValidationError({label: "Keys must be integer ids."}) from e


class DagClassSerializer(serializers.Serializer):
    """One job class of a DAG network."""

    id = serializers.IntegerField(min_value=1)
    nodes = serializers.ListField(child=serializers.IntegerField(min_value=1), allow_empty=False)
    edges = serializers.ListField(
        child=serializers.ListField(child=serializers.IntegerField(min_value=1), min_length=2, max_length=2),
        required=False,
        default=list,
    )
    arrival_rate = serializers.FloatField(required=False, allow_null=True, default=None)

    def to_internal_value(self, data):
        if isinstance(data, dict) and "lambda" in data:
            data = {**data, "arrival_rate": data["lambda"]}
            data.pop("lambda")
        return super().to_internal_value(data)


class ServerSerializer(serializers.Serializer):
    id = serializers.IntegerField(min_value=1)
    capable = serializers.ListField(child=serializers.IntegerField(min_value=1))
    speed = serializers.FloatField(required=False, default=None, allow_null=True)


class NetworkSpecSerializer(serializers.Serializer):
    """Validates a spec document and builds the matching NetworkSpec."""

    kind = serializers.ChoiceField(choices=["dag", "fqn"])
    name = serializers.CharField(required=False, default="", allow_blank=True)
    classes = DagClassSerializer(many=True, required=False)
    servers = ServerSerializer(many=True, allow_empty=False)
    mu = serializers.DictField(child=serializers.FloatField(), required=False)
    mu_kj = serializers.DictField(child=serializers.DictField(child=serializers.FloatField()), required=False)
    alpha = serializers.DictField(child=serializers.FloatField(), required=False)
    arrival_rates = serializers.JSONField(required=False)
    routing = serializers.ListField(child=serializers.ListField(child=serializers.FloatField()), required=False)
    num_queues = serializers.IntegerField(min_value=1, required=False)
    assumed = serializers.ListField(child=serializers.CharField(), required=False, default=list)

    def to_internal_value(self, data):
        if isinstance(data, dict) and "lambda" in data:
            data = {**data, "arrival_rates": data["lambda"]}
            data.pop("lambda")
        return super().to_internal_value(data)

    def validate(self, attrs):
        if "mu" not in attrs and "mu_kj" not in attrs:
            raise serializers.ValidationError("One of 'mu' or 'mu_kj' is required.")
        attrs["mu"] = {k: float(v) for k, v in _int_keys(attrs.get("mu", {}), "mu").items()}
        if "mu_kj" in attrs:
            attrs["mu_kj"] = {
                (k, j): float(rate)
                for k, row in _int_keys(attrs["mu_kj"], "mu_kj").items()
                for j, rate in _int_keys(row, "mu_kj").items()
            }
        attrs["alpha"] = {j: float(v) for j, v in _int_keys(attrs.get("alpha", {}), "alpha").items()}

        rates = attrs.get("arrival_rates")
        if rates is not None:
            if isinstance(rates, (int, float)) and not isinstance(rates, bool):
                rates = [float(rates)]
            elif isinstance(rates, list) and all(isinstance(r, (int, float)) for r in rates):
                rates = [float(r) for r in rates]
            else:
                raise serializers.ValidationError({"lambda": "Expected a number or a list of numbers."})
            attrs["arrival_rates"] = rates

        if attrs["kind"] == "dag":
            self._validate_dag(attrs)
        else:
            self._validate_fqn(attrs)
        return attrs

    def _validate_dag(self, attrs):
        classes = attrs.get("classes")
        if not classes:
            raise serializers.ValidationError({"classes": "A DAG network needs at least one class."})
        rates = attrs.get("arrival_rates")
        if rates is not None:
            if len(rates) == 1 and len(classes) > 1:
                rates = rates * len(classes)
            if len(rates) != len(classes):
                raise serializers.ValidationError({"lambda": f"Expected {len(classes)} rates, one per class."})
            for job_class, rate in zip(classes, rates):
                job_class["arrival_rate"] = rate
        missing = [c["id"] for c in classes if c.get("arrival_rate") is None]
        if missing:
            raise serializers.ValidationError({"lambda": f"No arrival rate for classes {missing}."})

    def _validate_fqn(self, attrs):
        routing = attrs.get("routing")
        size = attrs.get("num_queues") or (len(routing) if routing else None)
        if size is None:
            raise serializers.ValidationError({"num_queues": "Give num_queues or a routing matrix."})
        attrs["num_queues"] = size
        if not routing:
            attrs["routing"] = [[0.0] * size for _ in range(size)]
        rates = attrs.get("arrival_rates")
        if rates is None:
            raise serializers.ValidationError({"lambda": "An FQN needs a per-queue arrival vector."})
        if len(rates) != size:
            raise serializers.ValidationError({"lambda": f"Expected {size} arrival rates."})

    def _servers(self, attrs) -> tuple[ServerSpec, ...]:
        alpha = attrs["alpha"]
        servers = []
        for server in attrs["servers"]:
            speed = alpha.get(server["id"], server.get("speed"))
            servers.append(
                ServerSpec(
                    server_id=server["id"],
                    speed=1.0 if speed is None else float(speed),
                    capable_tasks=frozenset(server["capable"]),
                )
            )
        return tuple(servers)

    def create(self, validated_data) -> NetworkSpec:
        servers = self._servers(validated_data)
        common = dict(
            servers=servers,
            task_rates=validated_data["mu"],
            service_rates=validated_data.get("mu_kj"),
            name=validated_data.get("name", ""),
            assumed=tuple(validated_data.get("assumed", [])),
        )
        if validated_data["kind"] == "dag":
            classes = tuple(
                DagJobClass(
                    class_id=c["id"],
                    nodes=tuple(c["nodes"]),
                    edges=tuple(tuple(e) for e in c["edges"]),
                    arrival_rate=float(c["arrival_rate"]),
                )
                for c in validated_data["classes"]
            )
            return DagNetworkSpec(job_classes=classes, **common)
        return FqnNetworkSpec(
            num_queues=validated_data["num_queues"],
            arrival_rates=tuple(validated_data["arrival_rates"]),
            routing=tuple(tuple(row) for row in validated_data["routing"]),
            **common,
        )


def parse_network_spec(data: dict) -> NetworkSpec:
    """Build a NetworkSpec from a decoded spec document."""
    serializer = NetworkSpecSerializer(data=data)
    if not serializer.is_valid():
        raise MalformedSpec(f"Invalid network spec: {json.dumps(serializer.errors)}")
    return serializer.save()


def load_network_spec(path: str | Path) -> NetworkSpec:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as spec_file:
            data = json.load(spec_file)
    except OSError as e:
        raise MalformedSpec(f"Cannot read network spec {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise MalformedSpec(f"{path} is not valid JSON: {e}") from e
    spec = parse_network_spec(data)
    if not spec.name:
        spec = replace(spec, name=path.stem)
    return spec


BUNDLED_SPECS_DIR = Path(__file__).resolve().parent.parent / "specs"


def load_bundled_spec(name: str) -> NetworkSpec:
    """Load one of the specs shipped in the specs/ directory by stem."""
    return load_network_spec(BUNDLED_SPECS_DIR / f"{name}.json")
