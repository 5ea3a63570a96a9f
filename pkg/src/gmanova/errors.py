"""Exception types shared across the package."""


class DesignError(ValueError):
    """A design matrix violates a shape, rank, or definiteness requirement."""


class NoBalancingSolution(RuntimeError):
    """The diagonal-balancing linear system has no solution for this design,
    so the bias-corrected statistic is not defined."""


class GroupError(ValueError):
    """Base class for per-group failures; carries the offending group index."""

    def __init__(self, group: int, message: str):
        self.group = int(group)
        super().__init__(f"group {group}: {message}")


class DegenerateGroupError(GroupError):
    """A group has too few observations relative to its design block."""


class EstimatorUndefinedError(GroupError):
    """A variance-estimator denominator vanishes for this group."""


class ConfigError(ValueError):
    """Invalid user input: configuration file, data file, or CLI argument."""
