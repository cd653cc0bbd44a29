"""Tests for sparseggm Models."""
import numpy as np
import pytest
import sparseggm.models as models
from sparseggm import ConfigError
from sparseggm.utils import parse_config

from . import load_fixture


def test_synthetic_case() -> None:
    """Test the expected free variable count and row count of a case."""
    case = models.SyntheticCase(p=10, s=0.5, n_over_q=5)

    assert case.q == 32.5
    assert case.n == 163

    assert models.SyntheticCase(p=50, s=0.1, n_over_q=2).n == 345


def test_experiment_config_from_dict() -> None:
    """Test building a config from the fixture file."""
    config = models.ExperimentConfig.from_dict(parse_config(load_fixture("experiment.conf")))

    assert config.p == [10, 25]
    assert config.s == [0.5]
    assert config.runs == 2
    assert config.samples == 500
    assert config.mass_method == ["identity", "wishart"]
    assert config.seed == 7
    assert config.workers is None
    assert len(config.cases()) == 2


def test_experiment_config_defaults() -> None:
    """Test the defaults when no entries are given."""
    config = models.ExperimentConfig.from_dict({})

    assert config.samplers == ["bg-mc", "bg-hcc", "hmc"]
    assert config.step_parameters(0) == (None, None)


def test_experiment_config_invalid() -> None:
    """Test that bad keys and values raise ConfigError."""
    with pytest.raises(ConfigError):
        models.ExperimentConfig.from_dict({"colour": "blue"})

    with pytest.raises(ConfigError):
        models.ExperimentConfig.from_dict({"runs": "three"})

    with pytest.raises(ConfigError):
        models.ExperimentConfig.from_dict({"mass_method": "fisher"})

    with pytest.raises(ConfigError):
        models.ExperimentConfig.from_dict({"train_fraction": "1.5"})


def test_step_parameters() -> None:
    """Test per-case step parameters and broadcasting."""
    config = models.ExperimentConfig(alpha=[0.1, 0.2], beta=[2.0])

    assert config.step_parameters(0) == (0.1, 2.0)
    assert config.step_parameters(1) == (0.2, 2.0)


def test_ggm_config() -> None:
    """Test the default priors of the joint sampler."""
    config = models.GgmConfig()

    assert config.prior_b() == 11.0
    assert np.array_equal(config.prior_scale(3), 13.0 * np.eye(3))
    assert config.auxiliary == "hmc"

    custom = models.GgmConfig(b0=3.0, d0=np.eye(2), aux_sampler="block-gibbs")
    assert custom.prior_b() == 3.0
    assert np.array_equal(custom.prior_scale(2), np.eye(2))
    assert custom.auxiliary == "block-gibbs"


def test_ggm_config_invalid() -> None:
    """Test that invalid joint sampler settings raise ConfigError."""
    with pytest.raises(ConfigError):
        models.GgmConfig(inner="metropolis")

    with pytest.raises(ConfigError):
        models.GgmConfig(mass_method="laplace")

    with pytest.raises(ConfigError):
        models.GgmConfig(sigma_e=0.0)

    with pytest.raises(ConfigError):
        models.GgmConfig(initial_s=1.0)

    with pytest.raises(ConfigError):
        models.GgmConfig(tune_steps=-1)


def test_experiment_ggm_config() -> None:
    """Test the joint sampler settings derived from an experiment."""
    config = models.ExperimentConfig(n0=4, aux_sweeps=3, cover="edgewise")
    ggm_config = config.ggm_config("block-gibbs", 0.05, 1.5)

    assert ggm_config.n0 == 4
    assert ggm_config.aux_sweeps == 3
    assert ggm_config.cover == "edgewise"
    assert ggm_config.inner == "block-gibbs"


def test_experiment_ggm_config_tune_steps() -> None:
    """Test that the tuning length follows the experiment unless overridden."""
    config = models.ExperimentConfig(tune_steps=30)

    assert config.ggm_config("hmc", 0.05, 3.0).tune_steps == 30
    assert config.ggm_config("hmc", 0.05, 3.0, tune_steps=0).tune_steps == 0


def test_data_summary() -> None:
    """Test the Gram matrix summary."""
    summary = models.DataSummary.from_data(np.array([[1.0, 2.0], [3.0, 4.0]]))

    assert summary.n == 2
    assert summary.p == 2
    assert summary.gram.tolist() == [[10.0, 14.0], [14.0, 20.0]]
