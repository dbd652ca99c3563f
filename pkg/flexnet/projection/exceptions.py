class ProjectionError(Exception):
    """Base class for projection failures."""


class EmptyPolyhedron(ProjectionError):
    """Raise when C_eps0 has no point for the requested eps0."""


class NoConvergence(ProjectionError):
    """Raise when an iterative projection hits its iteration cap."""


class DimensionMismatch(ProjectionError, ValueError):
    """Raise when a vector does not have the polyhedron's shape."""
