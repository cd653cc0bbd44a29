"""Models for sparseggm."""

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from .const import (
    CONFIG_KEYS,
    COVER_STRATEGIES,
    DEFAULT_AUX_SWEEPS,
    DEFAULT_BETA,
    DEFAULT_BURN_IN,
    DEFAULT_FOLDS,
    DEFAULT_GRID_SIZE,
    DEFAULT_MAX_CLIQUES,
    DEFAULT_N0,
    DEFAULT_N_PRELIM,
    DEFAULT_REFRESH_STEPS,
    DEFAULT_RUNS,
    DEFAULT_S,
    DEFAULT_SAMPLES,
    DEFAULT_SIGMA_E,
    DEFAULT_TUNE_STEPS,
    GLASSO_MAX_SWEEPS,
    GLASSO_TOL,
    INNER_SAMPLERS,
    MASS_METHODS,
    SAMPLERS,
)
from .exceptions import ConfigError
from .utils import parse_list, round_half_away


@dataclass(frozen=True)
class HmcStepReport:
    """Outcome of a single HMC transition."""

    accepted: bool
    epsilon: float
    steps: int
    hamiltonian_delta: float
    cone_exit: bool


@dataclass(frozen=True, eq=False)
class EssReport:
    """Effective sample sizes of a trace and its sampling rate."""

    per_coordinate: np.ndarray
    aggregate: float
    seconds: float
    ess_per_sec: float


@dataclass(frozen=True)
class GlassoConfig:
    """Penalty and stopping rule for the graphical lasso."""

    gamma: float
    tol: float = GLASSO_TOL
    max_sweeps: int = GLASSO_MAX_SWEEPS

    def __post_init__(self):
        """Validate the penalty and tolerance."""
        if self.gamma < 0:
            raise ValueError(f"Penalty must be non-negative: {self.gamma}")
        if not self.tol > 0:
            raise ValueError(f"Tolerance must be positive: {self.tol}")


@dataclass(frozen=True, eq=False)
class GlassoFit:
    """Penalized precision estimate with its optimality certificate."""

    precision: np.ndarray
    covariance: np.ndarray
    objective: float
    kkt_violation: float
    sweeps: int
    converged: bool
    objective_history: Tuple[float, ...] = ()


@dataclass(frozen=True, eq=False)
class DataSummary:
    """Sufficient statistics of a zero-mean data matrix."""

    n: int
    p: int
    gram: np.ndarray

    @staticmethod
    def from_data(data: np.ndarray) -> "DataSummary":
        """Return the summary of an ``(n, p)`` data matrix."""
        data = np.atleast_2d(np.asarray(data, dtype=float))
        return DataSummary(n=data.shape[0], p=data.shape[1], gram=data.T @ data)


@dataclass(frozen=True, eq=False)
class GgmConfig:
    """Settings of the joint (G, Λ, s) sampler."""

    n0: int = DEFAULT_N0
    b0: Optional[float] = None
    d0: Optional[np.ndarray] = None
    s_prior: Tuple[float, float] = (1.0, 1.0)
    sigma_e: float = DEFAULT_SIGMA_E
    inner: str = "hmc"
    alpha: float = 0.05
    beta: float = DEFAULT_BETA
    mass_method: str = "wishart"
    n_prelim: int = DEFAULT_N_PRELIM
    cover: str = "heuristic"
    refresh_steps: int = DEFAULT_REFRESH_STEPS
    aux_sweeps: int = DEFAULT_AUX_SWEEPS
    aux_sampler: Optional[str] = None
    edge_proposals: Optional[int] = None
    initial_s: float = DEFAULT_S
    update_s: bool = True
    tune_steps: int = DEFAULT_TUNE_STEPS

    def __post_init__(self):
        """Validate the sampler settings."""
        if self.inner not in INNER_SAMPLERS:
            raise ConfigError(f"Unknown inner sampler: {self.inner}")
        if self.aux_sampler not in INNER_SAMPLERS + [None]:
            raise ConfigError(f"Unknown auxiliary sampler: {self.aux_sampler}")
        if self.mass_method not in ("identity", "wishart"):
            raise ConfigError(
                f"Joint sampler mass must be identity or wishart: {self.mass_method}"
            )
        if self.cover not in COVER_STRATEGIES:
            raise ConfigError(f"Unknown cover strategy: {self.cover}")
        if not self.sigma_e > 0:
            raise ConfigError(f"sigma_e must be positive: {self.sigma_e}")
        if min(self.s_prior) <= 0 or not 0 < self.initial_s < 1:
            raise ConfigError("Edge probability prior and start must be positive")
        if self.tune_steps < 0:
            raise ConfigError(f"tune_steps must be non-negative: {self.tune_steps}")

    @property
    def auxiliary(self) -> str:
        """Return the sampler used for auxiliary prior draws."""
        return self.aux_sampler or self.inner

    def prior_b(self) -> float:
        """Return the prior degrees of freedom, 1 + n0 by default."""
        return float(self.b0) if self.b0 is not None else 1.0 + self.n0

    def prior_scale(self, p: int) -> np.ndarray:
        """Return the prior scale, (p + n0) I by default."""
        if self.d0 is not None:
            return np.atleast_2d(np.asarray(self.d0, dtype=float))

        return (p + self.n0) * np.eye(p)


@dataclass(frozen=True)
class SyntheticCase:
    """Test case of dimension ``p``, edge probability ``s`` and ratio n/q."""

    p: int
    s: float
    n_over_q: float
    seed: Optional[int] = None

    @property
    def q(self) -> float:
        """Return the expected number of free variables."""
        return self.p + self.s * self.p * (self.p - 1) / 2

    @property
    def n(self) -> int:
        """Return the number of data rows."""
        return max(1, round_half_away(self.n_over_q * self.q))


def _optional_float(value: Any) -> Optional[float]:
    if value in (None, "", "none", "None"):
        return None
    return float(value)


def _optional_int(value: Any) -> Optional[int]:
    if value in (None, "", "none", "None"):
        return None
    return int(value)


_CASTS: Dict[str, Callable[[Any], Any]] = {
    "alpha": lambda value: parse_list(value, float),
    "aux_sweeps": int,
    "beta": lambda value: parse_list(value, float),
    "budget_seconds": _optional_float,
    "burn_in": int,
    "cover": str,
    "folds": int,
    "grid_size": int,
    "iterations": int,
    "mass_method": lambda value: parse_list(value, str),
    "max_cliques": int,
    "n0": int,
    "n_over_q": lambda value: parse_list(value, float),
    "n_prelim": int,
    "p": lambda value: parse_list(value, int),
    "refresh_steps": int,
    "runs": int,
    "s": lambda value: parse_list(value, float),
    "samplers": lambda value: parse_list(value, str),
    "samples": int,
    "seed": int,
    "sigma_e": float,
    "train_fraction": float,
    "tune_steps": int,
    "workers": _optional_int,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters shared by the experiment subcommands."""

    p: List[int] = field(default_factory=lambda: [10, 25, 50])
    s: List[float] = field(default_factory=lambda: [0.5])
    n_over_q: List[float] = field(default_factory=lambda: [5.0])
    runs: int = DEFAULT_RUNS
    samples: int = DEFAULT_SAMPLES
    burn_in: int = DEFAULT_BURN_IN
    alpha: List[float] = field(default_factory=list)
    beta: List[float] = field(default_factory=list)
    mass_method: List[str] = field(default_factory=lambda: list(MASS_METHODS))
    cover: str = "heuristic"
    samplers: List[str] = field(default_factory=lambda: list(SAMPLERS))
    sigma_e: float = DEFAULT_SIGMA_E
    folds: int = DEFAULT_FOLDS
    grid_size: int = DEFAULT_GRID_SIZE
    train_fraction: float = 0.5
    n_prelim: int = DEFAULT_N_PRELIM
    max_cliques: int = DEFAULT_MAX_CLIQUES
    tune_steps: int = DEFAULT_TUNE_STEPS
    iterations: int = 200
    n0: int = DEFAULT_N0
    aux_sweeps: int = DEFAULT_AUX_SWEEPS
    refresh_steps: int = DEFAULT_REFRESH_STEPS
    workers: Optional[int] = None
    budget_seconds: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        """Validate counts and names."""
        if self.runs < 1:
            raise ConfigError(f"runs must be at least 1: {self.runs}")
        if self.samples < 0 or self.burn_in < 0:
            raise ConfigError("samples and burn_in must be non-negative")
        if not 0 < self.train_fraction < 1:
            raise ConfigError(f"train_fraction must lie in (0, 1): {self.train_fraction}")
        for method in self.mass_method:
            if method not in MASS_METHODS:
                raise ConfigError(f"Unknown mass method: {method}")
        for sampler in self.samplers:
            if sampler not in SAMPLERS:
                raise ConfigError(f"Unknown sampler: {sampler}")
        if self.cover not in COVER_STRATEGIES:
            raise ConfigError(f"Unknown cover strategy: {self.cover}")

    @staticmethod
    def from_dict(data: dict) -> "ExperimentConfig":
        """Return ExperimentConfig from parsed config file entries."""
        unknown = sorted(set(data) - set(CONFIG_KEYS))
        if unknown:
            raise ConfigError(f"Unknown config keys: {', '.join(unknown)}")

        values = {}
        for key, raw in data.items():
            try:
                values[key] = _CASTS[key](raw)
            except ValueError as exception:
                raise ConfigError(f"Invalid value for {key}: {raw!r}") from exception

        return ExperimentConfig(**values)

    def cases(self) -> List[SyntheticCase]:
        """Return the grid of synthetic cases."""
        return [
            SyntheticCase(p=p, s=s, n_over_q=ratio)
            for p in self.p
            for s in self.s
            for ratio in self.n_over_q
        ]

    def step_parameters(self, index: int) -> Tuple[Optional[float], Optional[float]]:
        """Return (α, β) for a case, broadcasting single values; None when untuned."""

        def pick(values: List[float]) -> Optional[float]:
            if not values:
                return None
            return values[index] if len(values) > 1 else values[0]

        return pick(self.alpha), pick(self.beta)

    def ggm_config(
        self, inner: str, alpha: float, beta: float, tune_steps: Optional[int] = None
    ) -> GgmConfig:
        """Return the joint sampler settings; HMC steps are tuned unless ``tune_steps`` is 0."""
        return GgmConfig(
            n0=self.n0,
            sigma_e=self.sigma_e,
            inner=inner,
            alpha=alpha,
            beta=beta,
            n_prelim=self.n_prelim,
            cover=self.cover,
            refresh_steps=self.refresh_steps,
            aux_sweeps=self.aux_sweeps,
            tune_steps=self.tune_steps if tune_steps is None else tune_steps,
        )


@dataclass(frozen=True, eq=False)
class CrossValidation:
    """Penalty grid, held-out scores and the selected penalty."""

    gamma: float
    grid: np.ndarray
    scores: np.ndarray
