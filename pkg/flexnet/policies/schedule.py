from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .exceptions import InvalidStepSize

DEFAULT_EXPONENT = 0.6


def check_exponent(exponent: float) -> None:
    """beta^n = n^-a has sum beta = inf, sum beta^2 < inf and
    limsup 1/(n beta^n) < inf exactly when 1/2 < a <= 1."""
    if not 0.5 < exponent <= 1.0:
        raise InvalidStepSize(f"Step exponent must lie in (0.5, 1], got {exponent}")


@dataclass(frozen=True)
class StepSizeSchedule:
    """Decreasing step sizes beta^n, n >= 1.

    Either the family n^-a or an explicit sequence. An explicit sequence
    repeats its last value past its end.
    """

    exponent: float = DEFAULT_EXPONENT
    sequence: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.sequence is None:
            check_exponent(self.exponent)
            return
        values = tuple(float(v) for v in self.sequence)
        if not values or any(v <= 0 for v in values):
            raise InvalidStepSize("An explicit step-size sequence needs positive entries")
        if any(b > a for a, b in zip(values, values[1:])):
            raise InvalidStepSize("An explicit step-size sequence must be non-increasing")
        object.__setattr__(self, "sequence", values)

    @classmethod
    def explicit(cls, values: Sequence[float]) -> "StepSizeSchedule":
        return cls(sequence=tuple(values))

    def __call__(self, n: int) -> float:
        if n < 1:
            raise InvalidStepSize(f"Step sizes start at n = 1, got {n}")
        if self.sequence is not None:
            return self.sequence[min(n, len(self.sequence)) - 1]
        return float(n) ** -self.exponent

    def serialize(self) -> dict:
        if self.sequence is not None:
            return {"sequence": list(self.sequence)}
        return {"exponent": self.exponent}
