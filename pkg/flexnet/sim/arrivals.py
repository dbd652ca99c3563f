"""Exogenous arrival processes.

Jobs arrive in batches of B with probability lambda / B per slot, so the
mean rate stays lambda (B = 1 is the plain Bernoulli stream). A
mode-switching process cycles through modes every T slots; each mode may
override the arrival rates and the task rates mu_k.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from network.specs import NetworkSpec
from network.validation import validate_spec
from .exceptions import InvalidArrivalProcess


@dataclass(frozen=True)
class ArrivalMode:
    arrival_rates: tuple[float, ...] | None = None
    task_rates: Mapping[int, float] | None = None

    def apply(self, spec: NetworkSpec) -> NetworkSpec:
        if self.arrival_rates is not None:
            spec = spec.with_arrival_rates(self.arrival_rates)
        if self.task_rates is not None:
            spec = spec.with_task_rates(self.task_rates)
        return spec

    def serialize(self) -> dict:
        return {
            "lambda": None if self.arrival_rates is None else list(self.arrival_rates),
            "mu": None if self.task_rates is None else {str(k): v for k, v in self.task_rates.items()},
        }


@dataclass(frozen=True)
class ArrivalProcess:
    batch_size: int = 1
    period: int | None = None
    modes: tuple[ArrivalMode, ...] = ()

    def __post_init__(self):
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise InvalidArrivalProcess(f"Batch size must be a positive integer, got {self.batch_size}")
        if self.modes and (self.period is None or self.period < 1):
            raise InvalidArrivalProcess("Mode switching needs a positive period T")

    @classmethod
    def bernoulli(cls) -> "ArrivalProcess":
        return cls()

    @classmethod
    def batch(cls, size: int) -> "ArrivalProcess":
        return cls(batch_size=size)

    @classmethod
    def mode_switch(cls, period: int, modes: Sequence[ArrivalMode], batch_size: int = 1) -> "ArrivalProcess":
        if not modes:
            raise InvalidArrivalProcess("Mode switching needs at least one mode")
        return cls(batch_size=batch_size, period=period, modes=tuple(modes))

    @property
    def kind(self) -> str:
        if self.modes:
            return "mode-switch"
        return "batch" if self.batch_size > 1 else "bernoulli"

    def mode_index(self, slot: int) -> int:
        """Mode in force at slot n (counted from 0): floor(n / T) mod #modes."""
        if not self.modes:
            return 0
        return (slot // self.period) % len(self.modes)

    def mode_specs(self, spec: NetworkSpec) -> list[NetworkSpec]:
        """One validated spec per mode, in mode order."""
        specs = [mode.apply(spec) for mode in self.modes] if self.modes else [spec]
        for mode_spec in specs:
            validate_spec(mode_spec).raise_for_errors()
            rates = mode_spec.arrival_rates if mode_spec.kind == "dag" else mode_spec.arrival_vector()
            if any(rate / self.batch_size > 1.0 for rate in rates):
                raise InvalidArrivalProcess(f"lambda / B exceeds 1 for batch size {self.batch_size}")
        return specs

    def serialize(self) -> dict:
        return {
            "kind": self.kind,
            "batch_size": self.batch_size,
            "period": self.period,
            "modes": [mode.serialize() for mode in self.modes],
        }
