"""Exception types shared across the package."""


class NetdacError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatch(NetdacError):
    """Operands have incompatible shapes."""


class SingularMatrix(NetdacError):
    """A linear system has no unique solution (pivot below threshold)."""


class RankDeficientFeatures(NetdacError):
    """A feature matrix violates a full-rank / independence requirement."""


class NearSingularB(NetdacError):
    """The reward-critic normal matrix is numerically singular."""


class Diverged(NetdacError):
    """A training iterate exceeded the divergence guard."""


class ConfigError(NetdacError):
    """A run configuration is malformed or self-inconsistent."""
