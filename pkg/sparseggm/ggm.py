"""Joint sampling of graph, precision and edge probability for sparse GGMs."""
import logging
import math
import time
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy import special, stats

from .exceptions import NotPositiveDefinite
from .graph import FreeIndexSet, Graph, build_cover, full_index_set
from .gwishart import (
    GWishartParams,
    PrecisionState,
    WishartPrecisionCache,
    block_gibbs_step,
    log_density,
    mass_identity,
    posterior_params,
)
from .hmc import GWishartTarget, HmcConfig, hmc_step, tune_step_scale
from .models import DataSummary, GgmConfig
from .numkernel import cholesky, inv_pd, logdet_pd
from .utils import check_stopped

_LOGGER = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)

Step = Tuple[float, float]


@dataclass(frozen=True, eq=False)
class GgmState:
    """Current graph, precision respecting it, and edge probability ``s``."""

    graph: Graph
    precision: PrecisionState
    s: float

    def __post_init__(self):
        """Check the zero pattern and the range of ``s``."""
        if not 0.0 < self.s < 1.0:
            raise ValueError(f"Edge probability must lie in (0, 1): {self.s}")
        if not self.precision.respects(self.graph):
            raise ValueError("Precision has non-zero entries outside the graph")

    @staticmethod
    def initial(p: int, s: float) -> "GgmState":
        """Return the empty graph with identity precision."""
        return GgmState(graph=Graph.empty(p), precision=PrecisionState.identity(p), s=s)


@dataclass(frozen=True, eq=False)
class MassCaches:
    """Full-Wishart precision caches and tuned (α, β) for the posterior and the prior."""

    posterior: Optional[WishartPrecisionCache] = None
    prior: Optional[WishartPrecisionCache] = None
    posterior_step: Optional[Step] = None
    prior_step: Optional[Step] = None


@dataclass(frozen=True, eq=False)
class JointTrace:
    """Recorded joint chain: graphs, precisions over all pairs, s and times."""

    index: FreeIndexSet
    adjacency: np.ndarray
    precisions: np.ndarray
    s: np.ndarray
    timestamps: np.ndarray
    proposals: int = 0
    accepted: int = 0

    def __len__(self) -> int:
        """Return the number of recorded iterations."""
        return self.precisions.shape[0]

    @property
    def p(self) -> int:
        """Return the dimension."""
        return self.index.p

    @property
    def acceptance_rate(self) -> float:
        """Return the fraction of accepted edge flips."""
        return self.accepted / self.proposals if self.proposals else math.nan

    def graph(self, position: int) -> Graph:
        """Return a recorded graph."""
        return Graph(p=self.p, adjacency=self.adjacency[position])

    def precision(self, position: int) -> PrecisionState:
        """Return a recorded precision."""
        return PrecisionState.from_matrix(self.index.embed(self.precisions[position]))

    def edge_probabilities(self) -> np.ndarray:
        """Return the posterior inclusion frequency of every pair."""
        if len(self) == 0:
            return np.zeros((self.p, self.p))

        return self.adjacency.mean(axis=0)


def tune_inner_step(
    b: float,
    scale: np.ndarray,
    cache: Optional[WishartPrecisionCache],
    config: GgmConfig,
    rng: np.random.Generator,
) -> Step:
    """Tune HMC (α, β) on the complete-graph GWishart(b, D), started at its mean.

    The complete graph has the most free coordinates, so its step scale is
    also safe on sparser graphs.
    """
    p = np.atleast_2d(scale).shape[0]
    params = GWishartParams(b=b, D=scale, graph=Graph.complete(p))
    free = params.free
    mass = cache.mass_for(free) if cache is not None else mass_identity(len(free))
    mean = (b + p - 1) * inv_pd(cholesky(params.D))

    tuned, rate, _ = tune_step_scale(
        GWishartTarget(params),
        HmcConfig(alpha=config.alpha, beta=config.beta, mass=mass),
        free.vectorize(mean),
        rng,
        steps=config.tune_steps,
    )
    _LOGGER.debug("Inner HMC tuned to alpha=%.4g beta=%.4g (%.3f)", tuned.alpha, tuned.beta, rate)
    return tuned.alpha, tuned.beta


def build_mass_caches(
    data: DataSummary, config: GgmConfig, rng: np.random.Generator
) -> MassCaches:
    """Draw the Wishart caches and tune the HMC steps the configured samplers need.

    Both happen once per chain, before the first iteration.
    """
    b0, d0 = config.prior_b(), config.prior_scale(data.p)
    b_post, d_post = b0 + data.n, d0 + data.gram
    posterior = prior = None
    if config.mass_method == "wishart":
        if config.inner == "hmc":
            posterior = WishartPrecisionCache.build(b_post, d_post, config.n_prelim, rng)
        if config.auxiliary == "hmc":
            prior = WishartPrecisionCache.build(b0, d0, config.n_prelim, rng)

    posterior_step = prior_step = None
    if config.tune_steps > 0:
        if config.inner == "hmc":
            posterior_step = tune_inner_step(b_post, d_post, posterior, config, rng)
        if config.auxiliary == "hmc":
            prior_step = tune_inner_step(b0, d0, prior, config, rng)

    return MassCaches(
        posterior=posterior,
        prior=prior,
        posterior_step=posterior_step,
        prior_step=prior_step,
    )


def _transition(
    state: PrecisionState,
    params: GWishartParams,
    sampler: str,
    steps: int,
    config: GgmConfig,
    cache: Optional[WishartPrecisionCache],
    rng: np.random.Generator,
    step: Optional[Step] = None,
) -> PrecisionState:
    """Run ``steps`` transitions of the named sampler targeting ``params``.

    HMC uses the tuned ``step`` when given and the configured (α, β) otherwise.
    """
    if steps == 0:
        return state

    if sampler == "block-gibbs":
        cover = build_cover(config.cover, params.graph, rng)
        for _ in range(steps):
            state = block_gibbs_step(state, params, cover, rng)
        return state

    free = params.free
    mass = cache.mass_for(free) if cache is not None else mass_identity(len(free))
    alpha, beta = step if step is not None else (config.alpha, config.beta)
    hmc_config = HmcConfig(alpha=alpha, beta=beta, mass=mass)
    target = GWishartTarget(params)

    position = free.vectorize(state.matrix)
    moved = False
    for _ in range(steps):
        position, report = hmc_step(position, target, hmc_config, rng)
        moved = moved or report.accepted

    return PrecisionState.from_matrix(free.embed(position)) if moved else state


def refresh_precision(
    state: GgmState,
    data: DataSummary,
    config: GgmConfig,
    rng: np.random.Generator,
    caches: Optional[MassCaches] = None,
) -> GgmState:
    """Resample Λ given G with the inner sampler on W_G(b₀ + n, D₀ + U)."""
    prior = GWishartParams(b=config.prior_b(), D=config.prior_scale(data.p), graph=state.graph)
    params = posterior_params(prior, data.gram, data.n)
    cache = caches.posterior if caches is not None else None
    step = caches.posterior_step if caches is not None else None
    precision = _transition(
        state.precision, params, config.inner, config.refresh_steps, config, cache, rng, step
    )
    return replace(state, precision=precision)


def _pair_order(p: int, i: int, j: int) -> np.ndarray:
    """Return the vertex relabelling that puts ``i`` then ``j`` last."""
    others = [vertex for vertex in range(p) if vertex not in (i, j)]
    return np.array(others + [i, j], dtype=int)


def _trailing_factor(matrix: np.ndarray, order: np.ndarray) -> np.ndarray:
    """Return the upper Cholesky factor of the relabelled matrix."""
    return cholesky(matrix[np.ix_(order, order)]).factor


def _completion(factor: np.ndarray) -> float:
    """Return the trailing off-diagonal factor entry that zeroes the pair."""
    return -float(factor[:-2, -2] @ factor[:-2, -1]) / float(factor[-2, -2])


def _edit_pair(
    matrix: np.ndarray, i: int, j: int, factor: np.ndarray, value: Optional[float]
) -> np.ndarray:
    """Set the trailing factor entry to ``value`` and rebuild Λ_ij and Λ_jj.

    ``value=None`` writes the completion value, leaving an exact zero at
    (i, j). No other entry of the matrix changes.
    """
    column = factor[:, -1].copy()
    column[-2] = _completion(factor) if value is None else value

    edited = matrix.copy()
    cross = 0.0 if value is None else float(factor[:-1, -2] @ column[:-1])
    edited[i, j] = edited[j, i] = cross
    edited[j, j] = float(column @ column)
    return edited


def edge_flip_move(
    state: GgmState,
    data: DataSummary,
    config: GgmConfig,
    rng: np.random.Generator,
    caches: Optional[MassCaches] = None,
    pair: Optional[Tuple[int, int]] = None,
) -> Tuple[GgmState, bool]:
    """Propose flipping one edge, accepting by an exchange-style MH ratio.

    The flip edits a single entry of the Cholesky factor of Λ, relabelled so
    the pair sits last. An auxiliary draw from the prior on the proposed
    graph, mapped back by the reverse edit, stands in for the ratio of prior
    normalizers.
    """
    graph = state.graph
    p = graph.p
    if p < 2:
        raise ValueError("Edge moves need at least two vertices")

    if pair is None:
        rows, cols = np.triu_indices(p, 1)
        position = int(rng.integers(rows.size))
        pair = (int(rows[position]), int(cols[position]))
    i, j = min(pair), max(pair)

    adding = not graph.has_edge(i, j)
    proposed_graph = graph.with_edge(i, j, adding)
    b0, d0 = config.prior_b(), config.prior_scale(p)
    b_post, d_post = b0 + data.n, d0 + data.gram
    sigma = config.sigma_e
    order = _pair_order(p, i, j)
    matrix = state.precision.matrix

    try:
        factor = _trailing_factor(matrix, order)
        center = _completion(factor)
        if adding:
            value = float(rng.normal(center, sigma))
            proposed = PrecisionState.from_matrix(_edit_pair(matrix, i, j, factor, value))
            log_move = math.log(factor[-2, -2]) - stats.norm.logpdf(value, center, sigma)
        else:
            proposed = PrecisionState.from_matrix(_edit_pair(matrix, i, j, factor, None))
            log_move = stats.norm.logpdf(factor[-2, -1], center, sigma) - math.log(
                factor[-2, -2]
            )

        prior = GWishartParams(b=b0, D=d0, graph=proposed_graph)
        cache = caches.prior if caches is not None else None
        step = caches.prior_step if caches is not None else None
        auxiliary = _transition(
            proposed, prior, config.auxiliary, config.aux_sweeps, config, cache, rng, step
        )

        aux_factor = _trailing_factor(auxiliary.matrix, order)
        aux_center = _completion(aux_factor)
        if adding:
            reverse = PrecisionState.from_matrix(
                _edit_pair(auxiliary.matrix, i, j, aux_factor, None)
            )
            log_aux_move = stats.norm.logpdf(aux_factor[-2, -1], aux_center, sigma) - math.log(
                aux_factor[-2, -2]
            )
        else:
            aux_value = float(rng.normal(aux_center, sigma))
            reverse = PrecisionState.from_matrix(
                _edit_pair(auxiliary.matrix, i, j, aux_factor, aux_value)
            )
            log_aux_move = math.log(aux_factor[-2, -2]) - stats.norm.logpdf(
                aux_value, aux_center, sigma
            )
    except NotPositiveDefinite:
        _LOGGER.debug("Edge move on (%d, %d) rejected: not positive definite", i, j)
        return state, False

    log_odds = math.log(state.s) - math.log1p(-state.s)
    log_ratio = (
        (log_odds if adding else -log_odds)
        + log_density(proposed, b_post, d_post)
        - log_density(state.precision, b_post, d_post)
        + log_density(reverse, b0, d0)
        - log_density(auxiliary, b0, d0)
        + log_move
        + log_aux_move
    )

    if math.log1p(-rng.random()) < log_ratio:
        return GgmState(graph=proposed_graph, precision=proposed, s=state.s), True

    return state, False


def sample_s(state: GgmState, config: GgmConfig, rng: np.random.Generator) -> GgmState:
    """Draw s from its conjugate Beta conditional given the graph."""
    edges = state.graph.n_edges
    non_edges = state.graph.n_pairs - edges
    a, b = config.s_prior
    draw = float(rng.beta(a + edges, b + non_edges))
    draw = min(max(draw, np.nextafter(0.0, 1.0)), np.nextafter(1.0, 0.0))
    return replace(state, s=draw)


def _pair_schedule(
    p: int, proposals: Optional[int], rng: np.random.Generator
) -> List[Tuple[int, int]]:
    """Return this iteration's edge proposals."""
    rows, cols = np.triu_indices(p, 1)
    if proposals is None:
        positions = rng.permutation(rows.size)
    else:
        positions = rng.integers(rows.size, size=proposals)

    return [(int(rows[k]), int(cols[k])) for k in positions]


def run_joint_sampler(
    data: Union[DataSummary, np.ndarray],
    config: GgmConfig,
    n_iter: int,
    burn_in: int,
    rng: np.random.Generator,
    init: Optional[GgmState] = None,
    caches: Optional[MassCaches] = None,
) -> JointTrace:
    """Alternate precision refresh, an edge-flip scan and an s update.

    Each iteration proposes every unordered pair once in random order unless
    ``config.edge_proposals`` fixes a count drawn with replacement.
    """
    if not isinstance(data, DataSummary):
        data = DataSummary.from_data(data)

    p = data.p
    state = init if init is not None else GgmState.initial(p, config.initial_s)
    if caches is None:
        caches = build_mass_caches(data, config, rng)

    index = full_index_set(p)
    adjacency = np.zeros((n_iter, p, p), dtype=bool)
    precisions = np.zeros((n_iter, len(index)))
    s_values = np.zeros(n_iter)
    timestamps = np.zeros(n_iter)
    proposals = accepted = 0

    _LOGGER.info("Joint sampler: p=%d n=%d inner=%s", p, data.n, config.inner)
    started = time.perf_counter()

    for iteration in range(burn_in + n_iter):
        check_stopped()
        state = refresh_precision(state, data, config, rng, caches)
        if p >= 2:
            for pair in _pair_schedule(p, config.edge_proposals, rng):
                check_stopped()
                state, flipped = edge_flip_move(state, data, config, rng, caches, pair)
                proposals += 1
                accepted += flipped
        if config.update_s:
            state = sample_s(state, config, rng)

        if iteration >= burn_in:
            row = iteration - burn_in
            adjacency[row] = state.graph.adjacency
            precisions[row] = index.vectorize(state.precision.matrix)
            s_values[row] = state.s
            timestamps[row] = time.perf_counter() - started

        _LOGGER.debug(
            "Iteration %d: %d edges, s=%.3f", iteration, state.graph.n_edges, state.s
        )

    _LOGGER.info(
        "Joint sampler done: edge acceptance %.3f", accepted / proposals if proposals else 0.0
    )
    return JointTrace(
        index=index,
        adjacency=adjacency,
        precisions=precisions,
        s=s_values,
        timestamps=timestamps,
        proposals=proposals,
        accepted=accepted,
    )


def gaussian_loglik_rows(precision: PrecisionState, data: np.ndarray) -> np.ndarray:
    """Return log N(y | 0, Λ⁻¹) for every row of ``data``."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    p = precision.matrix.shape[0]
    if data.shape[1] != p:
        raise ValueError(f"Data has {data.shape[1]} columns, precision has {p}")

    quadratic = np.einsum("ij,jk,ik->i", data, precision.matrix, data)
    return 0.5 * logdet_pd(precision.chol) - 0.5 * quadratic - 0.5 * p * LOG_2PI


def gaussian_loglik(precision: PrecisionState, data: np.ndarray) -> float:
    """Return Σ_rows log N(y | 0, Λ⁻¹) from the Gram matrix of ``data``."""
    summary = DataSummary.from_data(data)
    if summary.p != precision.matrix.shape[0]:
        raise ValueError("Data and precision dimensions differ")

    n, p = summary.n, summary.p
    return (
        0.5 * n * logdet_pd(precision.chol)
        - 0.5 * float(np.sum(summary.gram * precision.matrix))
        - 0.5 * n * p * LOG_2PI
    )


def expected_test_loglik(trace: JointTrace, data: np.ndarray) -> pd.DataFrame:
    """Return the running mean of the test log likelihood over the trace."""
    if len(trace) == 0:
        raise ValueError("Trace is empty")

    values = np.array([gaussian_loglik(trace.precision(k), data) for k in range(len(trace))])
    running = np.cumsum(values) / np.arange(1, values.size + 1)
    return pd.DataFrame(
        {
            "iter": np.arange(values.size),
            "seconds": trace.timestamps,
            "loglik": values,
            "expected_loglik": running,
        }
    )


def predictive_loglik_rows(trace: JointTrace, data: np.ndarray) -> np.ndarray:
    """Return the per-row log of the posterior-averaged predictive density."""
    if len(trace) == 0:
        raise ValueError("Trace is empty")

    rows = np.array([gaussian_loglik_rows(trace.precision(k), data) for k in range(len(trace))])
    return special.logsumexp(rows, axis=0) - math.log(len(trace))
