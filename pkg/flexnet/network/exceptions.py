class NetworkSpecError(ValueError):
    """Base class for anything wrong with a network description."""


class MalformedSpec(NetworkSpecError):
    """Raise when a spec document cannot be parsed into a network."""


class MalformedClass(NetworkSpecError):
    """Raise when a job class references nodes it does not own."""


class MalformedServer(NetworkSpecError):
    """Raise when a server has no capabilities, a bad speed or unknown tasks."""


class CyclicGraph(NetworkSpecError):
    """Raise when a job class graph has a directed cycle."""


class DisconnectedClass(NetworkSpecError):
    """Raise when the undirected version of a job class graph is not connected."""


class UnservableTask(NetworkSpecError):
    """Raise when no server is capable of a task type."""


class RateScalingViolation(NetworkSpecError):
    """Raise when service rates are non-positive or sum above one per slot."""


class ArrivalRateOutOfRange(NetworkSpecError):
    """Raise when an arrival probability is outside its allowed range."""


class ProbabilityOverflow(NetworkSpecError):
    """Raise when a per-slot service probability would exceed one."""


class InvalidRouting(NetworkSpecError):
    """Raise when the routing matrix has a bad shape or bad probabilities."""


class SingularRouting(NetworkSpecError):
    """Raise when I - R^T is numerically singular."""


class NegativeNominalRate(NetworkSpecError):
    """Raise when the traffic equations give a negative rate (closed network)."""
