"""Exception hierarchy shared by the planning toolkit."""


class CopError(Exception):
    """Base class for every error raised by the toolkit."""


class DistributionError(CopError, ValueError):
    """Invalid categorical distribution or incompatible supports."""


class MapError(CopError, ValueError):
    """Map document could not be parsed or violates a map invariant."""


class LocalityError(CopError):
    """A value query was made for a pair farther apart than the locality radius."""


class UnreachableError(CopError):
    """No obstacle-free route connects the queried pair."""


class ConvergenceError(CopError, RuntimeError):
    """Tabular value iteration did not converge within the sweep budget."""


class SamplingError(CopError, RuntimeError):
    """A rejection sampler exhausted its budget."""


class ConfigError(CopError, ValueError):
    """Experiment or planner configuration is invalid."""


class SnapshotError(CopError, ValueError):
    """Backend snapshot file is malformed or has an unsupported version."""


class PlotError(CopError, ValueError):
    """Requested figure cannot be rendered from the given table."""


class EpisodeError(CopError, RuntimeError):
    """An episode was stepped after it terminated."""


class TreeInvariantError(CopError, RuntimeError):
    """A planning tree failed its structural self-check (debug mode)."""
