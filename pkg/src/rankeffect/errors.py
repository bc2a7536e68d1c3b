"""Exception hierarchy shared by every module."""


class RankEffectError(Exception):
    """Base class for all errors raised by this package."""


class InvalidExperimentError(RankEffectError, ValueError):
    """Experiment data violates a structural invariant."""


class InvalidTreatedCountError(InvalidExperimentError):
    """Treated count m lies outside [1, n - 1]."""


class LengthMismatchError(InvalidExperimentError):
    pass


class NonFiniteInputError(RankEffectError, ValueError):
    pass


class TooLargeError(RankEffectError):
    """Exact enumeration would exceed the configured cap."""


class DegenerateError(RankEffectError):
    """Data too small or too constant for the requested quantity."""


class ZeroFunctionalError(DegenerateError):
    """A density functional evaluated to zero, so no interval can be formed."""


class MissingCovariatesError(RankEffectError, ValueError):
    pass


class NonMonotoneError(RankEffectError):
    """Estimating function crossed zero more than once on the scan grid."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class NoBracketError(RankEffectError):
    pass


class NoCoverageError(RankEffectError):
    """Every grid point in a test-inversion scan was rejected."""


class NonConvergentIntegralError(RankEffectError):
    pass


class UnsupportedFamilyError(RankEffectError, ValueError):
    pass


class NoOracleError(RankEffectError):
    pass


class DataFormatError(RankEffectError, ValueError):
    """CSV input could not be parsed into an experiment."""

    def __init__(self, message, rows=None):
        super().__init__(message)
        self.rows = list(rows or [])
