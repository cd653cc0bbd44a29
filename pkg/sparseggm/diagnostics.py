"""Effective sample size and run summaries for sampler benchmarks."""
import math
from typing import Tuple

import numpy as np

from .const import MIN_CHAIN_LENGTH
from .exceptions import DegenerateChain
from .models import EssReport


def autocorrelation(chain: np.ndarray) -> np.ndarray:
    """Return the normalized autocorrelation at every lag, via FFT."""
    chain = np.asarray(chain, dtype=float)
    n = chain.size
    centered = chain - chain.mean()
    size = 1 << (2 * n - 1).bit_length()
    spectrum = np.fft.rfft(centered, size)
    autocovariance = np.fft.irfft(spectrum * np.conjugate(spectrum), size)[:n] / n
    if not autocovariance[0] > 0:
        raise DegenerateChain("Chain has zero variance")

    return autocovariance / autocovariance[0]


def ess(chain: np.ndarray) -> float:
    """Return N / τ with τ from Geyer's initial monotone positive sequence."""
    chain = np.asarray(chain, dtype=float).ravel()
    n = chain.size
    if n < MIN_CHAIN_LENGTH:
        raise DegenerateChain(f"Chain of length {n} is too short")
    if np.ptp(chain) == 0:
        raise DegenerateChain("Chain is constant")

    rho = autocorrelation(chain)
    pairs = rho[: 2 * (n // 2)].reshape(-1, 2).sum(axis=1)

    total = 0.0
    previous = math.inf
    for value in pairs:
        if value <= 0:
            break
        previous = min(previous, value)
        total += previous

    tau = max(-1.0 + 2.0 * total, 1.0 / n)
    return float(min(n, n / tau))


def ess_report(trace: np.ndarray, elapsed_seconds: float) -> EssReport:
    """Return per-coordinate ESS, their minimum and the ESS rate."""
    trace = np.asarray(trace, dtype=float)
    if trace.ndim == 1:
        trace = trace[:, None]
    if trace.shape[0] == 0:
        raise DegenerateChain("Trace is empty")

    per_coordinate = np.array([ess(trace[:, column]) for column in range(trace.shape[1])])
    aggregate = float(min(per_coordinate.min(), trace.shape[0]))
    rate = aggregate / elapsed_seconds if elapsed_seconds > 0 else math.inf
    return EssReport(
        per_coordinate=per_coordinate,
        aggregate=aggregate,
        seconds=float(elapsed_seconds),
        ess_per_sec=rate,
    )


def mean_std(values: np.ndarray) -> Tuple[float, float]:
    """Return the mean and sample standard deviation across runs."""
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    if values.size == 0:
        return math.nan, math.nan
    if values.size == 1:
        return float(values[0]), 0.0

    return float(values.mean()), float(values.std(ddof=1))
