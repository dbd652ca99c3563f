"""Exit-code mapping shared by the management commands."""

from contextlib import contextmanager

import yaml
from django.core.management.base import CommandError

from planner.exceptions import InfeasiblePlan
from policies.exceptions import PolicyError
from projection.exceptions import ProjectionError
from .exceptions import ExperimentError

EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_UNSTABLE = 3

# Spec, config, JSON and validation problems: the run never started.
CONFIG_ERRORS = (ValueError, ExperimentError, PolicyError, ProjectionError, InfeasiblePlan, yaml.YAMLError)


@contextmanager
def config_errors_exit():
    try:
        yield
    except CONFIG_ERRORS as e:
        raise CommandError(f"{type(e).__name__}: {e}", returncode=EXIT_CONFIG) from e

