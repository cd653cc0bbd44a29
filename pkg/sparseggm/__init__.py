"""Bayesian structure learning for sparse Gaussian graphical models."""
from .bench import Benchmark  # noqa
from .exceptions import (  # noqa
    BenchmarkTimeout,
    ConfigError,
    DataError,
    NotPositiveDefinite,
    SingularInput,
    SparseGGMError,
)
