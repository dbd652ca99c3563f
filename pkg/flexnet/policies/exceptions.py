class PolicyError(Exception):
    """Base class for scheduling-policy errors."""


class InvalidStepSize(PolicyError, ValueError):
    """Raise when a step-size law breaks the stochastic approximation conditions."""


class UnknownPolicy(PolicyError, ValueError):
    """Raise when a policy name is not registered."""


class InvalidPolicyConfig(PolicyError, ValueError):
    """Raise when a policy is built with parameters it cannot use."""
