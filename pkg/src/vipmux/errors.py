"""Exception types shared across the package."""


class VipmuxError(Exception):
    """Base class for all package errors."""


class ConfigurationError(VipmuxError):
    """Invalid pools, topology, schedule, or scenario input."""


class AllocationError(VipmuxError):
    """The virtual address pool cannot satisfy a draw."""


class LookupMiss(VipmuxError):
    """Endpoint not present on the queried side of the multiplex map."""


class InstallConflict(VipmuxError):
    """A flow entry would create overlapping-match ambiguity."""


class ResolutionError(VipmuxError):
    """Domain name is not registered."""


class ScenarioAssertionFailure(VipmuxError):
    """A scenario-embedded assertion did not hold."""
