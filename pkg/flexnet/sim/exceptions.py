from network.exceptions import ProbabilityOverflow


class SimulationError(Exception):
    """Base class for failures inside a simulation run."""


class IdentityMismatch(SimulationError):
    """Raise when the head-of-line jobs of a task's parent queues differ."""


class ConservationViolation(SimulationError):
    """Raise when queue lengths disagree with the arrival and departure counters."""


class MemoryGuardExceeded(SimulationError):
    """Raise when the total number of queued jobs passes the configured cap.

    ``metrics`` holds whatever was recorded before the abort.
    """

    def __init__(self, message: str, slot: int, total: int, metrics=None):
        super().__init__(message)
        self.slot = slot
        self.total = total
        self.metrics = metrics


class InvalidArrivalProcess(SimulationError, ValueError):
    """Raise when an arrival process does not fit the network."""


__all__ = [
    "SimulationError",
    "IdentityMismatch",
    "ConservationViolation",
    "MemoryGuardExceeded",
    "InvalidArrivalProcess",
    "ProbabilityOverflow",
]
