"""Exception hierarchy shared by every capnet module."""


class CapnetError(Exception):
    """Base class for all capnet errors."""


class InvalidScenario(CapnetError):
    """A deployment, flow set or scenario violates its preconditions."""


class InvalidInput(CapnetError, ValueError):
    """A calculator received an argument outside its domain."""


class RoutingHole(CapnetError):
    """A route needs a relay in an empty cell (or an unreachable highway)."""


class SingularGeometry(CapnetError):
    """An interferer sits exactly on top of a receiver."""


class MalformedSchedule(CapnetError):
    """A link set is structurally invalid (e.g. a duplicated transmitter)."""


class InfeasibleSchedule(CapnetError):
    """A scheduler emitted a link set that fails the interference check."""


class OracleSizeError(CapnetError):
    """The brute-force oracle was handed more candidates than it can enumerate."""


class MetricsUndefined(CapnetError):
    """Metrics cannot be computed, typically because nothing was delivered."""


class FitUndefined(CapnetError):
    """A log-log fit has fewer than three usable points."""


class ConfigError(CapnetError):
    """A configuration file failed validation.

    ``errors`` holds every problem found, not only the first.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))
