"""Tests for the GWishart density, samplers and mass matrices."""
import numpy as np
import pytest
import sparseggm.gwishart as gwishart
from scipy import stats
from sparseggm.exceptions import DegenerateTrace, NotPositiveDefinite
from sparseggm.graph import Graph, build_cover, heuristic_clique_cover, random_graph
from sparseggm.numkernel import make_rng, sample_wishart

SCALE = np.array([[3.0, 0.4, 0.2], [0.4, 2.5, -0.3], [0.2, -0.3, 2.0]])


def _random_instance(rng, p):
    """Return random GWishart parameters and a state respecting the graph."""
    graph = random_graph(rng, p, 0.5)
    b = float(rng.uniform(3.0, 8.0))
    scale = sample_wishart(rng, p + 2.0, np.eye(p)) + np.eye(p)
    params = gwishart.GWishartParams(b=b, D=scale, graph=graph)
    cover = heuristic_clique_cover(rng, graph)
    state = gwishart.block_gibbs_step(gwishart.PrecisionState.identity(p), params, cover, rng)
    return params, state


def _energy_at(params, position):
    state = gwishart.PrecisionState.from_matrix(params.free.embed(position))
    return gwishart.energy(state, params)


def test_params_validation() -> None:
    """Test that invalid degrees of freedom and scales are rejected."""
    with pytest.raises(ValueError):
        gwishart.GWishartParams(b=0.0, D=np.eye(2), graph=Graph.empty(2))

    with pytest.raises(NotPositiveDefinite):
        gwishart.GWishartParams(b=3.0, D=-np.eye(2), graph=Graph.empty(2))

    params = gwishart.GWishartParams(b=3.0, D=np.eye(3), graph=Graph.empty(3))
    assert len(params.free) == 3
    assert len(params.with_graph(Graph.complete(3)).free) == 6


def test_gradient_matches_finite_differences() -> None:
    """Test the energy gradient against central differences."""
    rng = make_rng(17)
    for _ in range(100):
        params, state = _random_instance(rng, int(rng.integers(2, 11)))
        position = params.free.vectorize(state.matrix)
        gradient = gwishart.grad_energy(state, params)

        numeric = np.zeros_like(position)
        for k in range(position.size):
            step = 1e-6 * max(1.0, abs(position[k]))
            shift = np.zeros_like(position)
            shift[k] = step
            numeric[k] = (
                _energy_at(params, position + shift) - _energy_at(params, position - shift)
            ) / (2 * step)

        assert np.allclose(gradient, numeric, rtol=1e-5, atol=1e-5 * np.max(np.abs(numeric)))


def test_hessian_matches_finite_differences() -> None:
    """Test the energy Hessian against differences of the gradient."""
    rng = make_rng(23)
    for _ in range(100):
        params, state = _random_instance(rng, int(rng.integers(2, 11)))
        position = params.free.vectorize(state.matrix)
        hessian = gwishart.hessian_energy(state, params)

        numeric = np.zeros_like(hessian)
        for k in range(position.size):
            step = 1e-6 * max(1.0, abs(position[k]))
            shift = np.zeros_like(position)
            shift[k] = step
            plus = gwishart.PrecisionState.from_matrix(params.free.embed(position + shift))
            minus = gwishart.PrecisionState.from_matrix(params.free.embed(position - shift))
            numeric[:, k] = (
                gwishart.grad_energy(plus, params) - gwishart.grad_energy(minus, params)
            ) / (2 * step)

        assert np.allclose(hessian, numeric, rtol=1e-4, atol=1e-4 * np.max(np.abs(numeric)))


def test_posterior_params() -> None:
    """Test the conjugate update."""
    prior = gwishart.GWishartParams(b=3.0, D=np.eye(2), graph=Graph.complete(2))
    gram = np.array([[2.0, 0.5], [0.5, 1.0]])
    posterior = gwishart.posterior_params(prior, gram, 7)

    assert posterior.b == 10.0
    assert np.allclose(posterior.D, np.eye(2) + gram)


def test_block_gibbs_keeps_zero_pattern() -> None:
    """Test that block Gibbs leaves exact zeros at non-edges."""
    rng = make_rng(4)
    graph = random_graph(rng, 8, 0.3)
    params = gwishart.GWishartParams(b=3.0, D=8 * np.eye(8), graph=graph)
    cover = build_cover("heuristic", graph, rng)
    state = gwishart.PrecisionState.identity(8)

    for _ in range(50):
        state = gwishart.block_gibbs_step(state, params, cover, rng)
        assert state.respects(graph)


def test_block_gibbs_scalar_marginal() -> None:
    """Test that 1-d block Gibbs draws follow Gamma(b/2, rate D/2)."""
    params = gwishart.GWishartParams(b=5.0, D=[[2.0]], graph=Graph.empty(1))
    cover = build_cover("edgewise", params.graph, make_rng(0))
    trace = gwishart.sample_block_gibbs(
        params, cover, gwishart.PrecisionState.identity(1), 20000, 0, make_rng(8)
    )
    distance = stats.kstest(trace[:, 0], stats.gamma(a=2.5, scale=1.0).cdf).statistic

    assert distance < 0.015


def test_block_gibbs_full_graph_moments() -> None:
    """Test full-graph block Gibbs against the Wishart mean."""
    params = gwishart.GWishartParams(b=4.0, D=SCALE, graph=Graph.complete(3))
    cover = build_cover("maximal", params.graph, make_rng(0))
    trace = gwishart.sample_block_gibbs(
        params, cover, gwishart.PrecisionState.identity(3), 20000, 10, make_rng(2)
    )
    expected = params.free.vectorize((4.0 + 2.0) * np.linalg.inv(SCALE))
    error = 4 * trace.std(axis=0) / np.sqrt(trace.shape[0])

    assert np.all(np.abs(trace.mean(axis=0) - expected) < error)


def test_laplace_mode_scalar() -> None:
    """Test that the 1-d mode is (b - 2) / D."""
    params = gwishart.GWishartParams(b=4.0, D=[[2.0]], graph=Graph.empty(1))
    mode = gwishart.laplace_mode(params)

    assert mode.matrix[0, 0] == pytest.approx(1.0, abs=1e-8)
    assert gwishart.mass_laplace(params, mode).mass[0, 0] == pytest.approx(1.0, abs=1e-6)


def test_laplace_mode_full_graph() -> None:
    """Test that the full-graph mode is (b - 2) D⁻¹."""
    params = gwishart.GWishartParams(b=6.0, D=SCALE, graph=Graph.complete(3))
    mode = gwishart.laplace_mode(params)

    assert np.allclose(mode.matrix, 4.0 * np.linalg.inv(SCALE), atol=1e-7)


def test_laplace_mode_sparse_gradient() -> None:
    """Test that the gradient vanishes at a sparse-graph mode."""
    rng = make_rng(31)
    params, _ = _random_instance(rng, 6)
    mode = gwishart.laplace_mode(params)
    gradient = gwishart.grad_energy(mode, params)

    assert mode.respects(params.graph)
    assert np.max(np.abs(gradient)) < 1e-8 * (1 + abs(gwishart.energy(mode, params)))


def test_laplace_mode_requires_interior() -> None:
    """Test that b <= 2 is rejected."""
    params = gwishart.GWishartParams(b=2.0, D=np.eye(2), graph=Graph.empty(2))

    with pytest.raises(ValueError):
        gwishart.laplace_mode(params)


def test_mass_identity() -> None:
    """Test the identity mass."""
    mass = gwishart.mass_identity(3)

    assert mass.dim == 3
    assert np.array_equal(mass.chol.factor, np.eye(3))


def test_mass_from_trace() -> None:
    """Test that standard normal traces give a near-identity mass."""
    trace = make_rng(12).standard_normal((50000, 3))
    mass = gwishart.mass_from_trace(trace)

    assert np.allclose(mass.mass, np.eye(3), atol=0.05)


def test_mass_from_degenerate_trace() -> None:
    """Test that constant or short traces are rejected."""
    with pytest.raises(DegenerateTrace):
        gwishart.mass_from_trace(np.ones((100, 3)))

    with pytest.raises(DegenerateTrace):
        gwishart.mass_from_trace(np.zeros((3, 3)))


def test_mass_laplace_indefinite() -> None:
    """Test that an indefinite Hessian is rejected."""
    params = gwishart.GWishartParams(b=1.0, D=np.eye(1), graph=Graph.empty(1))
    state = gwishart.PrecisionState.identity(1)

    with pytest.raises(NotPositiveDefinite):
        gwishart.mass_laplace(params, state)


def test_wishart_cache_selects_submatrix() -> None:
    """Test that the conditioned mass is a submatrix of the full precision."""
    graph = Graph.from_edges(3, [(0, 1)])
    params = gwishart.GWishartParams(b=5.0, D=SCALE, graph=graph)
    cache = gwishart.WishartPrecisionCache.build(params.b, params.D, 2000, make_rng(6))
    mass = cache.mass_for(params.free)
    positions = params.free.positions_in(cache.index)

    assert cache.precision.shape == (6, 6)
    assert np.allclose(mass.mass, cache.precision[np.ix_(positions, positions)])

    direct = gwishart.mass_wishart_conditioned(params, 2000, make_rng(6))
    assert np.allclose(direct.mass, mass.mass)


def test_wishart_cache_needs_enough_draws() -> None:
    """Test that too few preliminary draws are rejected."""
    with pytest.raises(DegenerateTrace):
        gwishart.WishartPrecisionCache.build(4.0, np.eye(3), 6, make_rng(0))


def test_wishart_mass_matches_preliminary_run_on_full_graph() -> None:
    """Test that on a complete graph the Wishart mass agrees with a block Gibbs run."""
    params = gwishart.GWishartParams(b=4.0, D=SCALE, graph=Graph.complete(3))
    cover = build_cover("maximal", params.graph, make_rng(0))
    trace = gwishart.sample_block_gibbs(
        params, cover, gwishart.PrecisionState.identity(3), 20000, 0, make_rng(5)
    )
    from_trace = gwishart.mass_from_trace(trace).mass
    from_draws = gwishart.mass_wishart_conditioned(params, 20000, make_rng(6)).mass

    error = np.linalg.norm(from_trace - from_draws) / np.linalg.norm(from_draws)
    assert error < 0.1
