"""Exception types shared across the package."""


class PredPowerError(Exception):
    """Base class for all package-specific errors."""


class NonInvertible(PredPowerError):
    """R_t + B_t' P_{t+1} B_t is numerically singular (bad cost matrices)."""


class DimensionMismatch(PredPowerError):
    """Inputs have inconsistent shapes."""


class InvalidModel(PredPowerError):
    """Predictor model violates its construction invariants."""


class UnsupportedPredictor(PredPowerError):
    """Predictor cannot supply the analytic moments required by the caller."""


class UnsupportedTarget(PredPowerError):
    """Conditional moment requested for a time index outside the horizon."""


class InsufficientData(PredPowerError):
    """Dataset too small for the requested estimator."""


class InformationLeak(PredPowerError):
    """A policy asked for disturbances or predictions not yet observable."""


class NoConvergence(PredPowerError):
    """Iterative solver failed to reach its tolerance within max iterations."""


class RankDeficient(PredPowerError):
    """Normal equations singular and no ridge candidate improves validation."""


class EmptyCell(PredPowerError):
    """A grouping cell has no samples."""


class BudgetExceeded(PredPowerError):
    """Nested Monte-Carlo checker asked to run outside its desk-scale limits."""


class ShapeMismatch(PredPowerError):
    """Sequence lengths disagree."""


class CertificateMissing(PredPowerError):
    """A function spec lacks the curvature certificates required by a check."""


class Divergence(PredPowerError):
    """Online policy parameters exceeded the configured norm bound."""


class HistoryFeatureOverflow(PredPowerError):
    """Requested history featurization exceeds the configured memory budget."""


class ConfigError(PredPowerError):
    """Experiment configuration is invalid; message names the offending field."""


class AssertionFailure(PredPowerError):
    """An embedded experiment assertion failed (CLI exit code 1)."""
