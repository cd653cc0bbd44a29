"""Hamiltonian Monte Carlo on free-coordinate vectors."""
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np
from scipy import linalg

from .const import (
    DEFAULT_TUNE_STEPS,
    DUAL_AVERAGING_GAMMA,
    DUAL_AVERAGING_KAPPA,
    DUAL_AVERAGING_T0,
    LOG_ALPHA_LIMIT,
    MAX_TRAJECTORY_STEPS,
    TARGET_ACCEPTANCE,
    TUNE_BAND,
    TUNE_BETA_FACTORS,
    TUNE_ESS_MARGIN,
    TUNE_ROUNDS,
)
from .diagnostics import ess_report
from .exceptions import AllRejected, ConeExit, DegenerateChain, NotPositiveDefinite
from .gwishart import GWishartParams, MassFactor, PrecisionState, energy, grad_energy
from .models import HmcStepReport
from .numkernel import solve_pd
from .utils import check_stopped, round_half_away

_LOGGER = logging.getLogger(__name__)


class Target(ABC):
    """Energy E(x) of a density ∝ exp(-E(x)) with a validity region."""

    dim: int

    @abstractmethod
    def energy(self, position: np.ndarray) -> Optional[float]:
        """Return the energy, or None outside the valid region."""

    @abstractmethod
    def gradient(self, position: np.ndarray) -> Optional[np.ndarray]:
        """Return the energy gradient, or None outside the valid region."""

    def is_valid(self, position: np.ndarray) -> bool:
        """Return True if the position lies in the valid region."""
        return self.energy(position) is not None


class GaussianTarget(Target):
    """Zero-mean Gaussian with the given precision; valid everywhere."""

    def __init__(self, precision: np.ndarray) -> None:
        """Initialize from a precision matrix."""
        self.precision = np.atleast_2d(np.asarray(precision, dtype=float))
        self.dim = self.precision.shape[0]

    def energy(self, position: np.ndarray) -> Optional[float]:
        """Return xᵀΛx/2."""
        return 0.5 * float(position @ self.precision @ position)

    def gradient(self, position: np.ndarray) -> Optional[np.ndarray]:
        """Return Λx."""
        return self.precision @ position


class GWishartTarget(Target):
    """GWishart energy over Λ_V; positions outside the PD cone are invalid."""

    def __init__(self, params: GWishartParams) -> None:
        """Initialize from GWishart parameters."""
        self.params = params
        self.dim = len(params.free)

    def state(self, position: np.ndarray) -> Optional[PrecisionState]:
        """Embed a position as a precision state, or None if not PD."""
        try:
            return PrecisionState.from_matrix(self.params.free.embed(position))
        except NotPositiveDefinite:
            return None

    def energy(self, position: np.ndarray) -> Optional[float]:
        """Return the GWishart energy."""
        state = self.state(position)
        return None if state is None else energy(state, self.params)

    def gradient(self, position: np.ndarray) -> Optional[np.ndarray]:
        """Return the GWishart energy gradient."""
        state = self.state(position)
        return None if state is None else grad_energy(state, self.params)


@dataclass(frozen=True)
class HmcConfig:
    """Step-size scale ``alpha``, trajectory length ``beta`` and mass."""

    alpha: float
    beta: float
    mass: MassFactor

    def __post_init__(self):
        """Validate the step parameters."""
        for name in ("alpha", "beta"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and positive: {value}")


def draw_step(rng: np.random.Generator, config: HmcConfig) -> Tuple[float, int]:
    """Draw ε ~ Gamma(shape 2, scale α) and L = max(1, round(β/ε))."""
    epsilon = float(rng.gamma(2.0, config.alpha))
    return epsilon, trajectory_steps(epsilon, config.beta)


def trajectory_steps(epsilon: float, beta: float) -> int:
    """Return the leapfrog step count for a step size, at most MAX_TRAJECTORY_STEPS."""
    if beta >= epsilon * MAX_TRAJECTORY_STEPS:
        return MAX_TRAJECTORY_STEPS

    return max(1, round_half_away(beta / epsilon))


def leapfrog(
    position: np.ndarray,
    momentum: np.ndarray,
    epsilon: float,
    steps: int,
    target: Target,
    mass: MassFactor,
) -> Tuple[np.ndarray, np.ndarray]:
    """Integrate Hamiltonian dynamics, raising ConeExit on an invalid position."""
    position = np.array(position, dtype=float)
    momentum = np.array(momentum, dtype=float)

    gradient = target.gradient(position)
    if gradient is None:
        raise ConeExit("Initial position is invalid")

    for _ in range(steps):
        momentum -= 0.5 * epsilon * gradient
        position += epsilon * solve_pd(mass.chol, momentum)
        gradient = target.gradient(position)
        if gradient is None:
            raise ConeExit("Trajectory left the valid region")
        momentum -= 0.5 * epsilon * gradient

    return position, momentum


def kinetic_energy(momentum: np.ndarray, mass: MassFactor) -> float:
    """Return pᵀM⁻¹p/2."""
    whitened = linalg.solve_triangular(mass.chol.factor, momentum, trans="T")
    return 0.5 * float(whitened @ whitened)


def hmc_step(
    position: np.ndarray,
    target: Target,
    config: HmcConfig,
    rng: np.random.Generator,
    current_energy: Optional[float] = None,
) -> Tuple[np.ndarray, HmcStepReport]:
    """Make one HMC transition with full momentum refresh."""
    if current_energy is None:
        current_energy = target.energy(position)

    momentum = config.mass.chol.factor.T @ rng.standard_normal(target.dim)
    epsilon, steps = draw_step(rng, config)
    initial = current_energy + kinetic_energy(momentum, config.mass)

    try:
        proposal, final_momentum = leapfrog(
            position, momentum, epsilon, steps, target, config.mass
        )
    except ConeExit:
        return position, HmcStepReport(
            accepted=False,
            epsilon=epsilon,
            steps=steps,
            hamiltonian_delta=math.inf,
            cone_exit=True,
        )

    proposal_energy = target.energy(proposal)
    if proposal_energy is None:
        delta = math.inf
    else:
        delta = proposal_energy + kinetic_energy(final_momentum, config.mass) - initial

    accepted = bool(math.log1p(-rng.random()) < -delta)
    report = HmcStepReport(
        accepted=accepted,
        epsilon=epsilon,
        steps=steps,
        hamiltonian_delta=delta,
        cone_exit=False,
    )
    return (proposal if accepted else position), report


def sample_hmc(
    target: Target,
    config: HmcConfig,
    init: np.ndarray,
    n_samples: int,
    burn_in: int,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, float]:
    """Run HMC and return the trace with the overall acceptance rate."""
    position = np.array(init, dtype=float)
    if not target.is_valid(position):
        raise ValueError("Initial position is invalid for the target")

    accepted = 0
    burn_accepted = 0
    trace = np.empty((n_samples, target.dim))

    for index in range(burn_in + n_samples):
        check_stopped()
        position, report = hmc_step(position, target, config, rng)
        accepted += report.accepted
        if index < burn_in:
            burn_accepted += report.accepted
            if index == burn_in - 1 and burn_accepted == 0:
                raise AllRejected(f"No proposal accepted in {burn_in} burn-in steps")
        else:
            trace[index - burn_in] = position

    rate = accepted / max(1, burn_in + n_samples)
    _LOGGER.debug("HMC finished with acceptance rate %.3f", rate)
    return trace, rate


def acceptance_statistic(report: HmcStepReport) -> float:
    """Return min(1, exp(-ΔH)) of a transition, or 0 after a cone exit."""
    delta = report.hamiltonian_delta
    if report.cone_exit or math.isnan(delta):
        return 0.0

    return math.exp(min(0.0, -delta))


@dataclass
class DualAveraging:
    """Dual averaging of log α towards a target mean acceptance statistic."""

    mu: float
    log_alpha: float
    log_alpha_bar: float
    goal: float = TARGET_ACCEPTANCE
    h_bar: float = 0.0
    t: int = 0

    @staticmethod
    def start(alpha: float, goal: float = TARGET_ACCEPTANCE) -> "DualAveraging":
        """Begin at ``alpha``, shrinking towards 10α."""
        log_alpha = math.log(alpha)
        return DualAveraging(
            mu=math.log(10.0) + log_alpha,
            log_alpha=log_alpha,
            log_alpha_bar=log_alpha,
            goal=goal,
        )

    @property
    def alpha(self) -> float:
        """Return the step scale to use next."""
        return math.exp(self.log_alpha)

    def update(self, statistic: float) -> float:
        """Fold in one acceptance statistic and return the next α."""
        self.t += 1
        eta = 1.0 / (self.t + DUAL_AVERAGING_T0)
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.goal - statistic)

        log_alpha = self.mu - math.sqrt(self.t) / DUAL_AVERAGING_GAMMA * self.h_bar
        self.log_alpha = min(max(log_alpha, -LOG_ALPHA_LIMIT), LOG_ALPHA_LIMIT)

        weight = self.t ** (-DUAL_AVERAGING_KAPPA)
        self.log_alpha_bar = weight * self.log_alpha + (1.0 - weight) * self.log_alpha_bar
        return self.alpha

    def final(self) -> float:
        """Return the averaged α."""
        return math.exp(self.log_alpha_bar)


def _adapt_alpha(
    target: Target,
    config: HmcConfig,
    position: np.ndarray,
    steps: int,
    goal: float,
    rng: np.random.Generator,
) -> Tuple[HmcConfig, np.ndarray]:
    """Run ``steps`` transitions while dual averaging adapts α."""
    adapter = DualAveraging.start(config.alpha, goal)
    for _ in range(steps):
        check_stopped()
        position, report = hmc_step(position, target, replace(config, alpha=adapter.alpha), rng)
        adapter.update(acceptance_statistic(report))

    return replace(config, alpha=adapter.final()), position


def _preliminary_run(
    target: Target,
    config: HmcConfig,
    position: np.ndarray,
    steps: int,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, float, np.ndarray]:
    """Run fixed-step HMC and return its trace, acceptance rate and last position."""
    trace = np.empty((steps, target.dim))
    accepted = 0
    for index in range(steps):
        check_stopped()
        position, report = hmc_step(position, target, config, rng)
        accepted += report.accepted
        trace[index] = position

    return trace, accepted / max(1, steps), position


def _trace_ess(trace: np.ndarray) -> float:
    try:
        return ess_report(trace, 1.0).aggregate
    except DegenerateChain:
        return 0.0


def tune_step_scale(
    target: Target,
    config: HmcConfig,
    init: np.ndarray,
    rng: np.random.Generator,
    steps: int = DEFAULT_TUNE_STEPS,
    rounds: int = TUNE_ROUNDS,
    goal: float = TARGET_ACCEPTANCE,
) -> Tuple[HmcConfig, float, np.ndarray]:
    """Tune α to acceptance near ``goal``, then pick β by preliminary ESS.

    Every round restarts dual averaging of α from the current position and
    checks the averaged α on a fixed-step run; tuning stops once that run's
    acceptance is within ``TUNE_BAND`` of the goal. β is then chosen among
    ``TUNE_BETA_FACTORS`` multiples of its starting value. Returns the
    config, its preliminary acceptance and the last position, from which
    sampling can continue.
    """
    position = np.array(init, dtype=float)
    if not target.is_valid(position):
        raise ValueError("Initial position is invalid for the target")

    rate = math.nan
    for _ in range(rounds):
        config, position = _adapt_alpha(target, config, position, steps, goal, rng)
        _, rate, position = _preliminary_run(target, config, position, steps, rng)
        _LOGGER.debug("Tuning alpha=%.4g acceptance=%.3f", config.alpha, rate)
        if abs(rate - goal) <= TUNE_BAND:
            break
    else:
        _LOGGER.warning(
            "Acceptance %.3f still outside %.2f +/- %.2f after %d tuning rounds",
            rate,
            goal,
            TUNE_BAND,
            rounds,
        )

    trace, rate, position = _preliminary_run(target, config, position, steps, rng)
    best, best_ess = config, _trace_ess(trace)
    for factor in TUNE_BETA_FACTORS:
        if factor == 1.0:
            continue
        candidate = replace(config, beta=config.beta * factor)
        trace, candidate_rate, position = _preliminary_run(
            target, candidate, position, steps, rng
        )
        candidate_ess = _trace_ess(trace)
        _LOGGER.debug("Tuning beta=%.4g ess=%.1f", candidate.beta, candidate_ess)
        if candidate_ess > best_ess * (1.0 + TUNE_ESS_MARGIN):
            best, best_ess, rate = candidate, candidate_ess, candidate_rate

    _LOGGER.info("Tuned alpha=%.4g beta=%.4g acceptance=%.3f", best.alpha, best.beta, rate)
    return best, rate, position
