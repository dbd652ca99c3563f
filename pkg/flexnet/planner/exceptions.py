class PlannerError(Exception):
    """Base class for LP failures."""


class NumericalFailure(PlannerError):
    """Raise when the simplex method stalls past its iteration cap."""


class InfeasiblePlan(PlannerError):
    """Raise when a plan with rho* > 1 is used where a stabilizing plan is needed."""
