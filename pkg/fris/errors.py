"""Exception hierarchy shared by every fris module."""


class FrisError(Exception):
    """Base class for all fris errors"""


class InvalidSpecError(FrisError, ValueError):
    """A channel, geometry or pattern specification is malformed"""


class InvalidMaskError(FrisError, ValueError):
    """An activation mask does not fit the surface it is applied to"""


class InvalidStateError(FrisError, ValueError):
    """Surface state, precoders or channels have inconsistent dimensions"""


class InvalidProblemError(FrisError, ValueError):
    """An optimization problem or its parameters are infeasible"""


class SearchSpaceTooLargeError(InvalidProblemError):
    """Exhaustive enumeration refused because the space exceeds the guard"""

    def __init__(self, size: int, limit: int):
        self.size = size
        self.limit = limit
        super().__init__(f"search space has {size} configurations, limit is {limit}")


class UndefinedSpreadError(FrisError, ValueError):
    """Phase spread requested for a set without any nonzero phasor"""


class ConfigError(FrisError):
    """Base class for configuration loading failures"""


class ConfigNotFoundError(ConfigError):
    """The configuration file does not exist"""

    def __init__(self, path):
        self.path = path
        super().__init__(f"configuration file not found: {path}")


class ConfigSchemaError(ConfigError):
    """The file does not parse or violates the documented schema"""

    def __init__(self, message: str, locations: tuple[str, ...] = ()):
        self.locations = tuple(locations)
        super().__init__(message)


class ConfigInvariantError(ConfigError):
    """A cross-field invariant of an otherwise well-formed config is violated"""

    def __init__(self, location: str, message: str):
        self.location = location
        super().__init__(f"{location}: {message}")
