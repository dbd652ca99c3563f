"""Run configuration: presets, YAML config files and command-line flags.

Layers are merged in order, later winning: defaults from settings, a
compiled-in preset, a YAML (or JSON) config file, then explicit flags.
The merged document is validated by ``RunConfigSerializer`` and every
model object it names is built once before any replication starts.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from functools import cache
from pathlib import Path

import numpy as np
import yaml
from django.conf import settings
from rest_framework import serializers

from network.exceptions import NetworkSpecError
from network.rates import nominal_rates
from network.serializers import BUNDLED_SPECS_DIR, load_network_spec
from network.specs import NetworkSpec
from policies.exceptions import PolicyError
from policies.registry import POLICY_NAMES, Policy, build_policy
from policies.schedule import StepSizeSchedule, check_exponent
from projection.exceptions import ProjectionError
from projection.polyhedron import default_epsilon0
from sim.arrivals import ArrivalMode, ArrivalProcess
from sim.exceptions import SimulationError
from .exceptions import InvalidRunConfig, UnknownPreset

logger = logging.getLogger(__name__)

DELTA_PLACEMENTS = ("literal", "scaled")


def _number_or_list(value, label: str) -> list[float] | None:
    if value is None:
        return None
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return [float(value)]
    if isinstance(value, list) and value and all(isinstance(v, (int, float)) for v in value):
        return [float(v) for v in value]
    raise serializers.ValidationError({label: "Expected a number or a list of numbers."})


def _renamed(data, renames: dict[str, str]):
    if not isinstance(data, dict):
        return data
    data = dict(data)
    for source, target in renames.items():
        if source in data:
            data[target] = data.pop(source)
    return data


class ArrivalModeSerializer(serializers.Serializer):
    arrival_rates = serializers.JSONField(required=False, allow_null=True, default=None)
    task_rates = serializers.DictField(child=serializers.FloatField(min_value=0), required=False, allow_null=True)

    def to_internal_value(self, data):
        return super().to_internal_value(_renamed(data, {"lambda": "arrival_rates", "mu": "task_rates"}))

    def validate(self, attrs):
        attrs["arrival_rates"] = _number_or_list(attrs.get("arrival_rates"), "lambda")
        rates = attrs.get("task_rates")
        if rates is not None:
            try:
                attrs["task_rates"] = {int(k): float(v) for k, v in rates.items()}
            except ValueError as e:
                raise serializers.ValidationError({"mu": "Keys must be integer task ids."}) from e
        return attrs


class RunConfigSerializer(serializers.Serializer):
    """Schema of a merged run-config document.

    Unknown keys are ignored, so a run's own config.json can be fed back
    through ``run --config``.
    """

    network = serializers.CharField()
    policy = serializers.ChoiceField(choices=POLICY_NAMES, default="robust")
    exponent = serializers.FloatField(default=0.6)
    delta = serializers.FloatField(min_value=0.0, default=0.0)
    delta_placement = serializers.ChoiceField(choices=DELTA_PLACEMENTS, default="literal")
    epsilon0 = serializers.FloatField(min_value=0.0, required=False, allow_null=True, default=None)
    p0 = serializers.JSONField(required=False, allow_null=True, default=None)
    arrival_rates = serializers.JSONField(required=False, allow_null=True, default=None)
    batch = serializers.IntegerField(min_value=1, default=1)
    period = serializers.IntegerField(min_value=1, required=False, allow_null=True, default=None)
    modes = ArrivalModeSerializer(many=True, required=False, default=list)
    horizon = serializers.IntegerField(min_value=1, default=1_000_000)
    seed = serializers.IntegerField(min_value=0, default=0)
    replications = serializers.IntegerField(min_value=1, default=1)
    stride = serializers.IntegerField(min_value=1, default=1000)
    out = serializers.CharField(default="results")
    queue_cap = serializers.IntegerField(min_value=1, default=10**8)
    conservation_every = serializers.IntegerField(min_value=0, default=1000)
    projection_max_iter = serializers.IntegerField(min_value=1, default=100_000)
    projection_tol = serializers.FloatField(min_value=0.0, default=1e-10)
    assumed = serializers.ListField(child=serializers.CharField(), default=list)
    preset = serializers.CharField(required=False, allow_null=True, default=None)
    description = serializers.CharField(required=False, allow_blank=True, default="")

    def to_internal_value(self, data):
        return super().to_internal_value(
            _renamed(data, {"lambda": "arrival_rates", "a": "exponent", "eps0": "epsilon0", "reps": "replications"})
        )

    def validate_exponent(self, value):
        try:
            check_exponent(value)
        except PolicyError as e:
            raise serializers.ValidationError(str(e)) from e
        return value

    def validate(self, attrs):
        attrs["arrival_rates"] = _number_or_list(attrs.get("arrival_rates"), "lambda")
        p0 = attrs.get("p0")
        if p0 is not None and not isinstance(p0, (int, float)):
            if not isinstance(p0, list) or not all(isinstance(v, (int, float, list)) for v in p0):
                raise serializers.ValidationError({"p0": "Expected a number or a (nested) list of numbers."})
        if attrs["modes"] and attrs.get("period") is None:
            raise serializers.ValidationError({"period": "Mode switching needs a period T."})
        if attrs["policy"] == "robust-delta" and attrs["delta"] <= 0:
            raise serializers.ValidationError({"delta": "robust-delta needs a positive delta."})
        return attrs


@dataclass(frozen=True)
class RunConfig:
    network: str
    policy: str = "robust"
    exponent: float = 0.6
    delta: float = 0.0
    delta_placement: str = "literal"
    epsilon0: float | None = None
    p0: float | list | None = None
    arrival_rates: list[float] | None = None
    batch: int = 1
    period: int | None = None
    modes: list[dict] = field(default_factory=list)
    horizon: int = 1_000_000
    seed: int = 0
    replications: int = 1
    stride: int = 1000
    out: str = "results"
    queue_cap: int = 10**8
    conservation_every: int = 1000
    projection_max_iter: int = 100_000
    projection_tol: float = 1e-10
    assumed: list[str] = field(default_factory=list)
    preset: str | None = None
    description: str = ""

    @classmethod
    def from_data(cls, data: dict) -> "RunConfig":
        serializer = RunConfigSerializer(data=data)
        if not serializer.is_valid():
            raise InvalidRunConfig(f"Invalid run config: {json.dumps(serializer.errors)}")
        return cls(**serializer.validated_data)

    def to_data(self) -> dict:
        """Primitive form, suitable for worker processes and celery."""
        data = asdict(self)
        data["modes"] = [
            {
                "lambda": mode.get("arrival_rates"),
                "mu": None if mode.get("task_rates") is None else {str(k): v for k, v in mode["task_rates"].items()},
            }
            for mode in self.modes
        ]
        data["lambda"] = data.pop("arrival_rates")
        return data

    def network_spec(self) -> NetworkSpec:
        spec = resolve_network(self.network)
        if self.arrival_rates is not None:
            rates = self.arrival_rates
            size = len(spec.job_classes) if spec.kind == "dag" else spec.num_queues
            if len(rates) == 1 and size > 1 and spec.kind == "dag":
                rates = rates * size
            try:
                spec = spec.with_arrival_rates(rates)
            except ValueError as e:
                raise InvalidRunConfig(str(e)) from e
        return spec

    def arrival_process(self) -> ArrivalProcess:
        if not self.modes:
            return ArrivalProcess.batch(self.batch)
        modes = [
            ArrivalMode(
                arrival_rates=None if mode.get("arrival_rates") is None else tuple(mode["arrival_rates"]),
                task_rates=mode.get("task_rates"),
            )
            for mode in self.modes
        ]
        return ArrivalProcess.mode_switch(self.period, modes, batch_size=self.batch)

    def schedule(self) -> StepSizeSchedule:
        return StepSizeSchedule(self.exponent)

    def make_policy(self, spec: NetworkSpec) -> Policy:
        return build_policy(
            self.policy,
            spec=spec,
            schedule=self.schedule(),
            delta=self.delta,
            epsilon0=self.epsilon0,
            p0=self.p0,
            scaled_delta=self.delta_placement == "scaled",
            projection_options={"max_iter": self.projection_max_iter, "tolerance": self.projection_tol},
        )

    def check(self) -> dict:
        """Build every model object once so bad parameters fail before a run.

        Returns the resolved values that the config file leaves implicit.
        """
        try:
            spec = self.network_spec()
            arrivals = self.arrival_process()
            arrivals.mode_specs(spec)
            policy = self.make_policy(spec)
        except (NetworkSpecError, PolicyError, ProjectionError, SimulationError, ValueError) as e:
            raise InvalidRunConfig(f"{type(e).__name__}: {e}") from e
        return {
            "network": spec.name or spec.kind,
            "kind": spec.kind,
            "nu": nominal_rates(spec).tolist(),
            "arrivals": arrivals.serialize(),
            "policy": policy.describe(),
        }

    def assumptions(self, spec: NetworkSpec) -> list[str]:
        """Everything this run takes as given without it being stated."""
        assumed = [*self.assumed, *spec.assumed, "initial queues: empty"]
        if self.p0 is None and self.policy != "static-lp":
            assumed.append("p0: projection of the zero allocation")
        uses_c_eps = self.policy == "robust-eps" or (spec.kind == "fqn" and self.policy.startswith("robust"))
        if uses_c_eps and self.epsilon0 is None:
            assumed.append(f"eps0: {default_epsilon0(spec):.6g} (half the smallest nu_k / mu_k)")
        # A config.json fed back through --config already carries these.
        return list(dict.fromkeys(assumed))

    def echo(self, run_id: str) -> dict:
        """The config.json written next to the results."""
        spec = self.network_spec()
        resolved = self.check()
        return {
            "run_id": run_id,
            **self.to_data(),
            "assumed": self.assumptions(spec),
            "resolved": resolved,
            "network_document": network_document(self.network),
        }


def _spec_path(name_or_path: str) -> Path:
    path = Path(name_or_path)
    if path.suffix == ".json" or path.exists():
        return path
    return BUNDLED_SPECS_DIR / f"{name_or_path}.json"


def resolve_network(name_or_path: str) -> NetworkSpec:
    """A spec file path, or the stem of a bundled spec such as ``dag5``."""
    path = _spec_path(name_or_path)
    if not path.exists():
        raise InvalidRunConfig(f"No network spec file or bundled spec named {name_or_path!r}")
    return load_network_spec(path)


def network_document(name_or_path: str) -> dict:
    with open(_spec_path(name_or_path), "r", encoding="utf-8") as spec_file:
        return json.load(spec_file)


@cache
def _load_presets(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as presets_file:
        return yaml.safe_load(presets_file) or {}


def presets() -> dict:
    return _load_presets(str(settings.FLEXNET["PRESETS_FILE"]))


def get_preset(name: str) -> dict:
    try:
        preset = presets()[name]
    except KeyError:
        raise UnknownPreset(f"Unknown preset {name!r}, expected one of {', '.join(presets())}") from None
    return {**preset, "preset": name}


def read_config_file(path: str | Path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as config_file:
            data = yaml.safe_load(config_file)
    except OSError as e:
        raise InvalidRunConfig(f"Cannot read run config {path}: {e}") from e
    except yaml.YAMLError as e:
        raise InvalidRunConfig(f"{path} is not valid YAML: {e}") from e
    if not isinstance(data, dict):
        raise InvalidRunConfig(f"{path} must hold a mapping of run-config keys")
    return data


def settings_defaults() -> dict:
    flexnet = settings.FLEXNET
    return {
        "out": flexnet["OUTPUT_DIR"],
        "queue_cap": flexnet["QUEUE_CAP"],
        "conservation_every": flexnet["CONSERVATION_EVERY"],
        "projection_max_iter": flexnet["PROJECTION_MAX_ITER"],
        "projection_tol": flexnet["PROJECTION_TOL"],
    }


def resolve_run_config(
    preset: str | None = None,
    config_path: str | Path | None = None,
    overrides: dict | None = None,
) -> RunConfig:
    """Merge settings, preset, config file and flags, then validate."""
    data = settings_defaults()
    if preset:
        data.update(get_preset(preset))
    if config_path:
        data.update(read_config_file(config_path))
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    if "description" in data and data["description"] is None:
        data["description"] = ""
    config = RunConfig.from_data(data)
    for line in config.assumed:
        logger.warning("Assumed parameter: %s", line)
    return config


def parse_numbers(text: str | None) -> list[float] | None:
    """``"0.1,0.2"`` or ``"0.1 0.2"`` as floats; None passes through."""
    if text is None:
        return None
    try:
        values = [float(v) for v in text.replace(",", " ").split()]
    except ValueError as e:
        raise InvalidRunConfig(f"Expected numbers, got {text!r}") from e
    if not values:
        raise InvalidRunConfig("Expected at least one number")
    return values


def p0_from_flag(text: str | None) -> float | list[float] | None:
    values = parse_numbers(text)
    if values is None:
        return None
    return values[0] if len(values) == 1 else values


def as_jsonable(value):
    """``json.dumps`` default for numpy values."""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"{type(value).__name__} is not JSON serializable")
