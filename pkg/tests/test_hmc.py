"""Tests for Hamiltonian Monte Carlo."""
import math
import threading

import numpy as np
import pytest
import sparseggm.diagnostics as diagnostics
import sparseggm.hmc as hmc
from scipy import stats
from sparseggm.const import (
    DEFAULT_BETA,
    LOG_ALPHA_LIMIT,
    MAX_TRAJECTORY_STEPS,
    TARGET_ACCEPTANCE,
    TUNE_BETA_FACTORS,
)
from sparseggm.exceptions import AllRejected, ConeExit, JobCancelled
from sparseggm.graph import Graph
from sparseggm.gwishart import GWishartParams, MassFactor, mass_identity, mass_wishart_conditioned
from sparseggm.models import HmcStepReport
from sparseggm.numkernel import make_rng
from sparseggm.utils import stop_signal

PRECISION = np.array([[2.0, 0.6], [0.6, 1.0]])
SCALE = np.array([[3.0, 0.4, 0.2], [0.4, 2.5, -0.3], [0.2, -0.3, 2.0]])


def test_config_validation() -> None:
    """Test that non-positive step parameters are rejected."""
    mass = mass_identity(2)

    with pytest.raises(ValueError):
        hmc.HmcConfig(alpha=0.0, beta=1.0, mass=mass)

    with pytest.raises(ValueError):
        hmc.HmcConfig(alpha=0.1, beta=float("inf"), mass=mass)


def test_trajectory_steps() -> None:
    """Test the leapfrog step count."""
    assert hmc.trajectory_steps(0.1, 1.5) == 15
    assert hmc.trajectory_steps(2.0, 1.5) == 1
    assert hmc.trajectory_steps(0.4, 1.0) == 3


def test_draw_step_mean() -> None:
    """Test that step sizes follow Gamma(2, α)."""
    config = hmc.HmcConfig(alpha=0.05, beta=1.0, mass=mass_identity(1))
    rng = make_rng(3)
    steps = np.array([hmc.draw_step(rng, config)[0] for _ in range(20000)])

    assert steps.mean() == pytest.approx(0.1, rel=0.03)


def test_leapfrog_reversible() -> None:
    """Test that negating the momentum retraces the trajectory."""
    target = hmc.GaussianTarget(PRECISION)
    mass = MassFactor.from_mass(np.array([[1.5, 0.2], [0.2, 0.8]]))
    position = np.array([0.3, -1.2])
    momentum = np.array([0.7, 0.4])

    end, end_momentum = hmc.leapfrog(position, momentum, 0.1, 25, target, mass)
    back, back_momentum = hmc.leapfrog(end, -end_momentum, 0.1, 25, target, mass)

    assert np.allclose(back, position, atol=1e-10)
    assert np.allclose(-back_momentum, momentum, atol=1e-10)


def test_leapfrog_cone_exit() -> None:
    """Test that leaving the PD cone raises ConeExit."""
    params = GWishartParams(b=3.0, D=np.eye(1), graph=Graph.empty(1))
    target = hmc.GWishartTarget(params)

    with pytest.raises(ConeExit):
        hmc.leapfrog(np.array([0.5]), np.array([-100.0]), 0.1, 5, target, mass_identity(1))

    assert not target.is_valid(np.array([-1.0]))
    assert target.energy(np.array([-1.0])) is None


def test_kinetic_energy() -> None:
    """Test pᵀM⁻¹p/2."""
    mass = MassFactor.from_mass(np.array([[2.0, 0.5], [0.5, 1.0]]))
    momentum = np.array([1.0, -2.0])
    expected = 0.5 * momentum @ np.linalg.solve(mass.mass, momentum)

    assert hmc.kinetic_energy(momentum, mass) == pytest.approx(expected)


def test_hmc_step_rejects_cone_exit() -> None:
    """Test that a trajectory leaving the cone is rejected in place."""
    params = GWishartParams(b=3.0, D=np.eye(1), graph=Graph.empty(1))
    config = hmc.HmcConfig(alpha=50.0, beta=100.0, mass=mass_identity(1))
    position = np.array([50.0])
    rng = make_rng(0)

    exits = 0
    for _ in range(20):
        moved, report = hmc.hmc_step(position, hmc.GWishartTarget(params), config, rng)
        if report.cone_exit:
            exits += 1
            assert not report.accepted
            assert np.array_equal(moved, position)

    assert exits > 0


def test_sample_gaussian_moments() -> None:
    """Test that HMC recovers a Gaussian covariance."""
    target = hmc.GaussianTarget(PRECISION)
    config = hmc.HmcConfig(alpha=0.1, beta=2.5, mass=mass_identity(2))
    trace, rate = hmc.sample_hmc(target, config, np.zeros(2), 20000, 100, make_rng(5))

    assert trace.shape == (20000, 2)
    assert rate > 0.8
    assert np.allclose(np.cov(trace, rowvar=False), np.linalg.inv(PRECISION), atol=0.08)
    assert np.allclose(trace.mean(axis=0), 0.0, atol=0.05)


def test_sample_gwishart_scalar_marginal() -> None:
    """Test that 1-d GWishart HMC draws follow Gamma(b/2, rate D/2)."""
    params = GWishartParams(b=5.0, D=[[2.0]], graph=Graph.empty(1))
    config = hmc.HmcConfig(alpha=0.1, beta=3.0, mass=mass_identity(1))
    trace, _ = hmc.sample_hmc(
        hmc.GWishartTarget(params), config, np.array([1.0]), 40000, 100, make_rng(6)
    )
    thinned = trace[::4, 0]
    distance = stats.kstest(thinned, stats.gamma(a=2.5, scale=1.0).cdf).statistic

    assert distance < 0.025


def test_sample_rejects_invalid_start() -> None:
    """Test that an invalid start is rejected."""
    params = GWishartParams(b=3.0, D=np.eye(1), graph=Graph.empty(1))
    config = hmc.HmcConfig(alpha=0.1, beta=1.0, mass=mass_identity(1))

    with pytest.raises(ValueError):
        hmc.sample_hmc(hmc.GWishartTarget(params), config, np.array([-1.0]), 10, 0, make_rng(0))


def test_tune_step_scale() -> None:
    """Test that tuning brings acceptance into the band around the goal."""
    target = hmc.GaussianTarget(np.diag([1.0, 100.0]))
    config = hmc.HmcConfig(alpha=0.5, beta=5.0, mass=mass_identity(2))
    tuned, rate, position = hmc.tune_step_scale(
        target, config, np.zeros(2), make_rng(2), steps=200
    )

    assert tuned.alpha < config.alpha
    assert tuned.beta in [config.beta * factor for factor in TUNE_BETA_FACTORS]
    assert abs(rate - TARGET_ACCEPTANCE) < 0.2
    assert position.shape == (2,)
    assert np.all(np.isfinite(position))


def test_tune_step_scale_rejects_invalid_start() -> None:
    """Test that tuning needs a valid start."""
    params = GWishartParams(b=3.0, D=np.eye(1), graph=Graph.empty(1))
    config = hmc.HmcConfig(alpha=0.1, beta=1.0, mass=mass_identity(1))

    with pytest.raises(ValueError):
        hmc.tune_step_scale(hmc.GWishartTarget(params), config, np.array([-1.0]), make_rng(0))


def test_tune_step_scale_warns_outside_band(caplog) -> None:
    """Test the warning when acceptance cannot reach the goal."""
    target = hmc.GaussianTarget(np.eye(2))
    config = hmc.HmcConfig(alpha=0.1, beta=1.0, mass=mass_identity(2))
    hmc.tune_step_scale(target, config, np.zeros(2), make_rng(4), steps=20, rounds=2, goal=1.5)

    assert "still outside" in caplog.text


def test_dual_averaging_converges() -> None:
    """Test that α settles where the acceptance statistic meets the goal."""
    adapter = hmc.DualAveraging.start(1.0, goal=0.65)
    for _ in range(2000):
        adapter.update(math.exp(-adapter.alpha))

    assert adapter.final() == pytest.approx(-math.log(0.65), rel=0.1)


def test_dual_averaging_clamps_log_alpha() -> None:
    """Test that a goal above any acceptance drives α to its floor, not to zero."""
    adapter = hmc.DualAveraging.start(1.0, goal=2.0)
    for _ in range(500):
        adapter.update(0.0)

    assert adapter.alpha == pytest.approx(math.exp(-LOG_ALPHA_LIMIT))
    assert adapter.final() > 0.0


def test_acceptance_statistic() -> None:
    """Test min(1, exp(-ΔH)) with cone exits and NaN counting as zero."""

    def report(delta, cone_exit=False):
        return HmcStepReport(
            accepted=False, epsilon=0.1, steps=1, hamiltonian_delta=delta, cone_exit=cone_exit
        )

    assert hmc.acceptance_statistic(report(-1.0)) == 1.0
    assert hmc.acceptance_statistic(report(2.0)) == pytest.approx(math.exp(-2.0))
    assert hmc.acceptance_statistic(report(math.inf, cone_exit=True)) == 0.0
    assert hmc.acceptance_statistic(report(math.nan)) == 0.0


def test_trajectory_steps_capped() -> None:
    """Test that tiny steps do not give unbounded trajectories."""
    assert hmc.trajectory_steps(1e-9, 3.0) == MAX_TRAJECTORY_STEPS
    assert hmc.trajectory_steps(0.01, 3.0) == 300


def test_leapfrog_single_step() -> None:
    """Test one leapfrog step on a unit Gaussian by hand."""
    target = hmc.GaussianTarget(np.eye(1))
    position, momentum = hmc.leapfrog(
        np.array([1.0]), np.array([0.0]), 0.5, 1, target, mass_identity(1)
    )

    assert position[0] == pytest.approx(0.875)
    assert momentum[0] == pytest.approx(-0.46875)


def test_leapfrog_energy_error_is_second_order() -> None:
    """Test that halving ε over a fixed time cuts the energy error fourfold."""
    target = hmc.GaussianTarget(np.eye(1))
    mass = mass_identity(1)

    def energy_error(epsilon):
        steps = round(1.0 / epsilon)
        end, end_momentum = hmc.leapfrog(
            np.array([1.0]), np.array([0.0]), epsilon, steps, target, mass
        )
        return target.energy(end) + hmc.kinetic_energy(end_momentum, mass) - 0.5

    assert energy_error(0.1) / energy_error(0.05) == pytest.approx(4.0, rel=0.05)


def test_sample_all_rejected() -> None:
    """Test that a burn-in without a single acceptance raises AllRejected."""
    params = GWishartParams(b=3.0, D=np.eye(1), graph=Graph.empty(1))
    config = hmc.HmcConfig(alpha=1e4, beta=1e4, mass=mass_identity(1))

    with pytest.raises(AllRejected):
        hmc.sample_hmc(hmc.GWishartTarget(params), config, np.array([1.0]), 10, 3, make_rng(0))


def test_sample_stops_when_signalled() -> None:
    """Test that a set stop event ends sampling with JobCancelled."""
    config = hmc.HmcConfig(alpha=0.1, beta=1.0, mass=mass_identity(2))
    event = threading.Event()
    event.set()

    with stop_signal(event), pytest.raises(JobCancelled):
        hmc.sample_hmc(hmc.GaussianTarget(PRECISION), config, np.zeros(2), 10, 0, make_rng(0))


def test_sample_full_graph_moments() -> None:
    """Test full-graph HMC against the Wishart mean."""
    params = GWishartParams(b=4.0, D=SCALE, graph=Graph.complete(3))
    target = hmc.GWishartTarget(params)
    rng = make_rng(8)
    mass = mass_wishart_conditioned(params, 5000, rng)
    start = hmc.HmcConfig(alpha=0.1, beta=DEFAULT_BETA, mass=mass)
    init = params.free.vectorize(np.eye(3))
    config, _, position = hmc.tune_step_scale(target, start, init, rng, steps=200)

    trace, _ = hmc.sample_hmc(target, config, position, 20000, 0, rng)
    expected = params.free.vectorize((4.0 + 2.0) * np.linalg.inv(SCALE))
    ess = np.array([diagnostics.ess(trace[:, k]) for k in range(trace.shape[1])])
    error = 4 * trace.std(axis=0) / np.sqrt(ess)

    assert np.all(np.abs(trace.mean(axis=0) - expected) < error)


@pytest.mark.slow
def test_sample_gwishart_scalar_marginal_long() -> None:
    """Test 1-d GWishart HMC draws against Gamma(b/2, rate D/2) on a long chain."""
    params = GWishartParams(b=5.0, D=[[2.0]], graph=Graph.empty(1))
    config = hmc.HmcConfig(alpha=0.1, beta=3.0, mass=mass_identity(1))
    trace, _ = hmc.sample_hmc(
        hmc.GWishartTarget(params), config, np.array([1.0]), 400000, 100, make_rng(9)
    )
    thinned = trace[::4, 0]
    distance = stats.kstest(thinned, stats.gamma(a=2.5, scale=1.0).cdf).statistic

    assert distance < 0.01
