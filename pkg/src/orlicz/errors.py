"""Exception types shared across the package."""


class NotInvertibleError(RuntimeError):
    """Raised when a left inverse is requested above the range of a bounded profile."""


class GeometryError(ValueError):
    """Raised for inconsistent discrete geometry (disconnected masks, missing margins)."""


class InfeasibleProblemError(ValueError):
    """Raised when an obstacle problem has an empty admissible class.

    Carries the lattice index of a halo cell where the obstacle exceeds the
    boundary datum.
    """

    def __init__(self, message, cell=None, point=None):
        super().__init__(message)
        self.cell = cell
        self.point = point


class ConfigError(ValueError):
    """Raised for unparseable or inconsistent experiment configuration.

    ``location`` identifies the offending section/key (and column for
    expression errors).
    """

    def __init__(self, message, location=None):
        super().__init__(message if location is None else f"{location}: {message}")
        self.location = location
