"""Tests for sparseggm."""
import math
import os

import numpy as np
from scipy import special


def load_fixture(filename):
    """Load a fixture."""
    path = os.path.join(os.path.dirname(__file__), "fixtures", filename)
    with open(path) as fptr:
        return fptr.read()


def fixture_path(filename):
    """Return the path of a fixture."""
    return os.path.join(os.path.dirname(__file__), "fixtures", filename)


def log_wishart_normalizer(b, scale):
    """Return log ∫ |Λ|^((b-2)/2) exp(-tr(DΛ)/2) dΛ over all PD matrices."""
    scale = np.atleast_2d(scale)
    p = scale.shape[0]
    dof = b + p - 1
    _, logdet = np.linalg.slogdet(scale)
    return 0.5 * dof * p * math.log(2.0) - 0.5 * dof * logdet + special.multigammaln(0.5 * dof, p)


def log_diagonal_normalizer(b, scale):
    """Return the normalizer for the graph without edges."""
    return sum(log_wishart_normalizer(b, [[value]]) for value in np.diag(np.atleast_2d(scale)))


def edge_posterior_p2(b0, d0, gram, n):
    """Return P(edge | Y) for p = 2 under equal prior odds."""
    b_post, d_post = b0 + n, d0 + gram
    full = log_wishart_normalizer(b_post, d_post) - log_wishart_normalizer(b0, d0)
    empty = log_diagonal_normalizer(b_post, d_post) - log_diagonal_normalizer(b0, d0)
    return 1.0 / (1.0 + math.exp(empty - full))
