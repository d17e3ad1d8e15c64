"""Exception types raised across the package."""


class CollapseOracleError(Exception):
    """Base class for all package errors."""


class NonSquare(CollapseOracleError, ValueError):
    pass


class NotHermitian(CollapseOracleError, ValueError):
    pass


class ConvergenceFailure(CollapseOracleError, RuntimeError):
    pass


class DimensionMismatch(CollapseOracleError, ValueError):
    pass


class InvariantViolation(CollapseOracleError, ValueError):
    """A value failed the invariants of its type (not PSD, trace != 1, ...)."""


class InvalidScenario(InvariantViolation):
    pass


class WeightMismatch(CollapseOracleError, ValueError):
    pass


class ZeroNormBranch(CollapseOracleError, RuntimeError):
    pass


class ZeroComponent(CollapseOracleError, ValueError):
    """Some basis component of a state vanishes; reduce the dimension first."""


class OutOfRange(CollapseOracleError, ValueError):
    pass


class NullState(CollapseOracleError, ValueError):
    pass


class BasisState(CollapseOracleError, ValueError):
    pass


class RankDeficient(CollapseOracleError, ValueError):
    pass
