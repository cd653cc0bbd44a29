"""GWishart density, block Gibbs sampler, Laplace mode and mass matrices."""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .const import (
    COVARIANCE_JITTER,
    LAPLACE_GRAD_TOL,
    LAPLACE_MAX_ITER,
    LINE_SEARCH_MIN_STEP,
)
from .exceptions import (
    DegenerateTrace,
    NonConvergence,
    NotPositiveDefinite,
    StepOutOfCone,
)
from .graph import CliqueCover, FreeIndexSet, Graph, free_index_set, full_index_set
from .numkernel import (
    CholFactor,
    cholesky,
    inv_pd,
    logdet_pd,
    sample_wishart,
    solve_pd,
    symmetrize,
)
from .utils import check_stopped

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class GWishartParams:
    """Degrees of freedom ``b``, scale ``D`` and graph of W_G(b, D)."""

    b: float
    D: np.ndarray
    graph: Graph
    free: FreeIndexSet = field(init=False, repr=False)

    def __post_init__(self):
        """Validate the scale and derive the free index set."""
        if not self.b > 0:
            raise ValueError(f"Degrees of freedom must be positive: {self.b}")

        scale = np.atleast_2d(np.asarray(self.D, dtype=float))
        if scale.shape != (self.graph.p, self.graph.p):
            raise ValueError("Scale matrix shape does not match the graph")
        cholesky(scale)

        object.__setattr__(self, "D", scale)
        object.__setattr__(self, "free", free_index_set(self.graph))

    def with_graph(self, graph: Graph) -> "GWishartParams":
        """Return the same (b, D) on another graph."""
        return GWishartParams(b=self.b, D=self.D, graph=graph)


@dataclass(frozen=True, eq=False)
class PrecisionState:
    """Precision matrix in M⁺(G) with its cached Cholesky factor."""

    matrix: np.ndarray
    chol: CholFactor

    @staticmethod
    def from_matrix(matrix: np.ndarray) -> "PrecisionState":
        """Factor a precision matrix, raising NotPositiveDefinite if needed."""
        matrix = np.atleast_2d(np.array(matrix, dtype=float))
        return PrecisionState(matrix=matrix, chol=cholesky(matrix))

    @staticmethod
    def identity(p: int) -> "PrecisionState":
        """Return the identity precision."""
        return PrecisionState.from_matrix(np.eye(p))

    def respects(self, graph: Graph) -> bool:
        """Return True if every non-edge entry is an exact zero."""
        off_pattern = ~graph.adjacency & ~np.eye(graph.p, dtype=bool)
        return bool(np.all(self.matrix[off_pattern] == 0.0))


@dataclass(frozen=True, eq=False)
class MassFactor:
    """HMC mass matrix M with its Cholesky factor."""

    mass: np.ndarray
    chol: CholFactor

    @staticmethod
    def from_mass(mass: np.ndarray) -> "MassFactor":
        """Factor a mass matrix."""
        mass = symmetrize(np.atleast_2d(np.asarray(mass, dtype=float)))
        return MassFactor(mass=mass, chol=cholesky(mass))

    @property
    def dim(self) -> int:
        """Return the mass dimension."""
        return self.mass.shape[0]


def posterior_params(
    prior: GWishartParams, data_gram: np.ndarray, n: int
) -> GWishartParams:
    """Return the conjugate posterior W_G(b + n, D + YᵀY)."""
    return GWishartParams(b=prior.b + n, D=prior.D + data_gram, graph=prior.graph)


def log_density(state: PrecisionState, b: float, scale: np.ndarray) -> float:
    """Return the unnormalized log density of W(b, D) at the state."""
    return 0.5 * (b - 2.0) * logdet_pd(state.chol) - 0.5 * float(
        np.sum(scale * state.matrix)
    )


def energy(state: PrecisionState, params: GWishartParams) -> float:
    """Return -((b-2)/2) log|Λ| + tr(DΛ)/2."""
    return -log_density(state, params.b, params.D)


def grad_energy(state: PrecisionState, params: GWishartParams) -> np.ndarray:
    """Return the energy gradient over the free coordinates."""
    full = -0.5 * (params.b - 2.0) * inv_pd(state.chol) + 0.5 * params.D
    gradient = params.free.vectorize(full)
    gradient[~params.free.diagonal] *= 2.0
    return gradient


def hessian_energy(state: PrecisionState, params: GWishartParams) -> np.ndarray:
    """Return the energy Hessian over the free coordinates.

    For u = (i, j), v = (k, l) with Σ = Λ⁻¹ the entry is
    (b-2)·w_u·w_v·(Σ_jk Σ_il + Σ_jl Σ_ik), where w is 1/2 on diagonal
    coordinates and 1 on edges.
    """
    covariance = inv_pd(state.chol)
    rows, cols = params.free.rows, params.free.cols
    weights = np.where(params.free.diagonal, 0.5, 1.0)

    cross = covariance[np.ix_(cols, rows)] * covariance[np.ix_(rows, cols)]
    straight = covariance[np.ix_(cols, cols)] * covariance[np.ix_(rows, rows)]
    hessian = (params.b - 2.0) * np.outer(weights, weights) * (cross + straight)
    return symmetrize(hessian)


def block_gibbs_step(
    state: PrecisionState,
    params: GWishartParams,
    cover: CliqueCover,
    rng: np.random.Generator,
) -> PrecisionState:
    """Resample each clique block from its conditional Wishart, in cover order."""
    matrix = state.matrix.copy()
    vertices = np.arange(params.graph.p)

    for clique in cover.cliques:
        block = np.array(clique, dtype=int)
        rest = np.setdiff1d(vertices, block)
        draw = sample_wishart(rng, params.b, params.D[np.ix_(block, block)])

        if rest.size:
            cross = matrix[np.ix_(block, rest)]
            rest_chol = cholesky(matrix[np.ix_(rest, rest)])
            draw = draw + symmetrize(cross @ solve_pd(rest_chol, cross.T))

        matrix[np.ix_(block, block)] = draw

    return PrecisionState.from_matrix(matrix)


def sample_block_gibbs(
    params: GWishartParams,
    cover: CliqueCover,
    init: PrecisionState,
    n_samples: int,
    burn_in: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Run block Gibbs and return an ``(n_samples, |V|)`` trace."""
    trace = np.empty((n_samples, len(params.free)))
    state = init

    for _ in range(burn_in):
        check_stopped()
        state = block_gibbs_step(state, params, cover, rng)

    for index in range(n_samples):
        check_stopped()
        state = block_gibbs_step(state, params, cover, rng)
        trace[index] = params.free.vectorize(state.matrix)

    return trace


def laplace_mode(
    params: GWishartParams,
    init: Optional[PrecisionState] = None,
    max_iter: int = LAPLACE_MAX_ITER,
) -> PrecisionState:
    """Minimize the energy over the free coordinates by damped Newton steps.

    This is not plain gradient descent: each step follows the Newton
    direction, and falls back to the negative gradient only when the Hessian
    does not factorize. Steps halve until the iterate is positive definite
    and the energy decreases enough. The start is (b - 2 + p) diag(D)⁻¹.
    """
    if params.b <= 2:
        raise ValueError("The mode lies in the interior only for b > 2")

    free = params.free
    if init is None:
        p = params.graph.p
        init = PrecisionState.from_matrix(np.diag((params.b - 2 + p) / np.diag(params.D)))

    position = free.vectorize(init.matrix)
    state = PrecisionState.from_matrix(free.embed(position))
    value = energy(state, params)

    for iteration in range(max_iter):
        check_stopped()
        gradient = grad_energy(state, params)
        if np.max(np.abs(gradient)) < LAPLACE_GRAD_TOL * (1.0 + abs(value)):
            _LOGGER.debug("Laplace mode found after %d iterations", iteration)
            return state

        try:
            direction = -solve_pd(cholesky(hessian_energy(state, params)), gradient)
        except NotPositiveDefinite:
            direction = -gradient

        slope = float(gradient @ direction)
        slack = 1e-12 * (1.0 + abs(value))
        step = 1.0
        while True:
            if step < LINE_SEARCH_MIN_STEP:
                raise StepOutOfCone("Line search could not find a PD iterate")

            candidate = position + step * direction
            try:
                candidate_state = PrecisionState.from_matrix(free.embed(candidate))
            except NotPositiveDefinite:
                step *= 0.5
                continue

            candidate_value = energy(candidate_state, params)
            if candidate_value <= value + 1e-4 * step * slope + slack:
                break
            step *= 0.5

        position, state, value = candidate, candidate_state, candidate_value

    raise NonConvergence(f"Laplace mode not found in {max_iter} iterations")


def mass_identity(dim: int) -> MassFactor:
    """Return the identity mass."""
    return MassFactor.from_mass(np.eye(dim))


def empirical_precision(trace: np.ndarray) -> np.ndarray:
    """Return the inverse of the unbiased covariance of trace rows."""
    trace = np.asarray(trace, dtype=float)
    if trace.ndim == 1:
        trace = trace[:, None]
    n, dim = trace.shape
    if n <= dim:
        raise DegenerateTrace(f"Trace of length {n} is too short for dimension {dim}")

    covariance = np.atleast_2d(np.cov(trace, rowvar=False))
    try:
        chol = cholesky(covariance)
    except NotPositiveDefinite:
        jitter = COVARIANCE_JITTER * float(np.mean(np.diag(covariance)))
        _LOGGER.warning("Trace covariance not PD, adding ridge %.3g", jitter)
        try:
            chol = cholesky(covariance + jitter * np.eye(dim))
        except NotPositiveDefinite as exception:
            raise DegenerateTrace("Trace covariance is rank deficient") from exception

    return inv_pd(chol)


def mass_from_trace(trace: np.ndarray) -> MassFactor:
    """Return the inverse empirical covariance of a preliminary trace."""
    return MassFactor.from_mass(empirical_precision(trace))


def mass_laplace(params: GWishartParams, mode: PrecisionState) -> MassFactor:
    """Return the energy Hessian at the mode."""
    return MassFactor.from_mass(hessian_energy(mode, params))


@dataclass(frozen=True, eq=False)
class WishartPrecisionCache:
    """Empirical precision K of full-Wishart draws over every upper pair.

    The mass for any graph is the submatrix of K on that graph's free
    coordinates, so graph edits need no new draws.
    """

    precision: np.ndarray
    index: FreeIndexSet

    @staticmethod
    def build(
        b: float, scale: np.ndarray, n_prelim: int, rng: np.random.Generator
    ) -> "WishartPrecisionCache":
        """Draw ``n_prelim`` matrices from W(b, D) and invert their covariance."""
        scale = np.atleast_2d(scale)
        index = full_index_set(scale.shape[0])
        if n_prelim <= len(index):
            raise DegenerateTrace(
                f"Need more than {len(index)} preliminary draws, got {n_prelim}"
            )

        draws = np.empty((n_prelim, len(index)))
        for row in range(n_prelim):
            check_stopped()
            draws[row] = index.vectorize(sample_wishart(rng, b, scale))

        return WishartPrecisionCache(precision=empirical_precision(draws), index=index)

    def mass_for(self, free: FreeIndexSet) -> MassFactor:
        """Return K restricted to the rows and columns of ``free``."""
        positions = free.positions_in(self.index)
        return MassFactor.from_mass(self.precision[np.ix_(positions, positions)])


def mass_wishart_conditioned(
    params: GWishartParams, n_prelim: int, rng: np.random.Generator
) -> MassFactor:
    """Return K_{V,V} from full-Wishart draws with the GWishart's (b, D)."""
    cache = WishartPrecisionCache.build(params.b, params.D, n_prelim, rng)
    return cache.mass_for(params.free)
