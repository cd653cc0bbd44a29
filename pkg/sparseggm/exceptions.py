"""Exceptions for sparseggm."""


class SparseGGMError(Exception):
    """Generic sparseggm exception."""

    pass


class NotPositiveDefinite(SparseGGMError):
    """Matrix failed the Cholesky positive-definiteness test."""

    pass


class ConeExit(SparseGGMError):
    """Leapfrog trajectory left the positive-definite cone."""

    pass


class NonConvergence(SparseGGMError):
    """Iterative solver reached its iteration cap."""

    pass


class StepOutOfCone(SparseGGMError):
    """Line search could not keep the iterate positive definite."""

    pass


class DegenerateTrace(SparseGGMError):
    """Trace covariance is rank deficient or the trace is too short."""

    pass


class AllRejected(SparseGGMError):
    """No HMC proposal was accepted during burn-in."""

    pass


class DegenerateChain(SparseGGMError):
    """Scalar chain has zero variance or too few samples."""

    pass


class SingularInput(SparseGGMError):
    """Covariance input has a zero-variance column."""

    pass


class ConfigError(SparseGGMError):
    """Invalid experiment configuration."""

    pass


class BenchmarkTimeout(SparseGGMError):
    """Harness job exceeded its time budget."""

    pass


class JobCancelled(SparseGGMError):
    """Sampler loop stopped because its harness job was abandoned."""

    pass


class DataError(SparseGGMError):
    """Generic data ingestion exception."""

    pass


class NonPositivePrice(DataError):
    """Price series contains a zero or negative value."""

    pass


class ColumnCountMismatch(DataError):
    """Row has a different number of cells than the header."""

    pass


class InsufficientRows(DataError):
    """Too few rows to build training and test returns."""

    pass
