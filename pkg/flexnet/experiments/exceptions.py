class ExperimentError(Exception):
    """Base class for experiment configuration and execution errors."""


class InvalidRunConfig(ExperimentError, ValueError):
    """A preset, config file or flag combination does not describe a valid run."""


class UnknownPreset(InvalidRunConfig):
    """No compiled-in preset has the requested name."""
