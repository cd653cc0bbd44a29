"""Graphical lasso by block coordinate descent, with cross-validated penalty."""
import logging
from typing import List, Optional, Union

import numpy as np

from .const import GLASSO_INNER_MAX_ITER, GLASSO_INNER_TOL, GLASSO_TOL
from .exceptions import NotPositiveDefinite, SingularInput
from .ggm import gaussian_loglik
from .gwishart import PrecisionState
from .models import CrossValidation, GlassoConfig, GlassoFit
from .numkernel import cholesky, inv_pd, logdet_pd, symmetrize
from .utils import check_stopped

_LOGGER = logging.getLogger(__name__)


def empirical_covariance(data: np.ndarray) -> np.ndarray:
    """Return YᵀY / n for zero-mean rows."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    return symmetrize(data.T @ data) / data.shape[0]


def objective(precision: np.ndarray, covariance: np.ndarray, gamma: float) -> float:
    """Return log det Λ − tr(SΛ) − γ Σ|Λ_ij|."""
    return (
        logdet_pd(cholesky(precision))
        - float(np.sum(covariance * precision))
        - gamma * float(np.sum(np.abs(precision)))
    )


def _check_diagonal(covariance: np.ndarray) -> None:
    if np.any(np.diag(covariance) <= 0):
        raise SingularInput("Covariance has a zero-variance column")


def _lasso(gram: np.ndarray, target: np.ndarray, gamma: float, beta: np.ndarray) -> np.ndarray:
    """Minimize βᵀWβ/2 − βᵀs + γ‖β‖₁ by cyclic soft-thresholding."""
    beta = beta.copy()
    fitted = gram @ beta
    diagonal = np.diag(gram)

    for _ in range(GLASSO_INNER_MAX_ITER):
        largest = 0.0
        for k in range(beta.size):
            old = beta[k]
            partial = target[k] - fitted[k] + diagonal[k] * old
            new = np.sign(partial) * max(abs(partial) - gamma, 0.0) / diagonal[k]
            if new != old:
                fitted += gram[:, k] * (new - old)
                beta[k] = new
                largest = max(largest, abs(new - old))

        if largest <= GLASSO_INNER_TOL * max(1.0, float(np.max(np.abs(beta), initial=0.0))):
            break

    return beta


def glasso_fit(
    covariance: np.ndarray, config: GlassoConfig, warm_start: Optional[GlassoFit] = None
) -> GlassoFit:
    """Maximize log det Λ − tr(SΛ) − γ‖Λ‖₁, penalizing the diagonal too.

    Block coordinate ascent on Λ itself: each column update maximizes the
    objective exactly in (Λ_12, Λ_22) with the other entries fixed, so Λ stays
    positive definite and the objective never decreases. The column lasso
    uses (S_22 + γ) Λ_11⁻¹, and Λ_11⁻¹ comes from W = Λ⁻¹ by a rank-one
    downdate. The sweep stops when no entry of W moves by ``tol`` or more.
    ``warm_start`` starts from an earlier fit's precision.
    """
    covariance = symmetrize(np.atleast_2d(np.asarray(covariance, dtype=float)))
    _check_diagonal(covariance)
    p = covariance.shape[0]
    gamma = config.gamma

    if gamma == 0:
        try:
            precision = inv_pd(cholesky(covariance))
        except NotPositiveDefinite as exception:
            raise SingularInput("Unpenalized fit needs a positive definite S") from exception
        value = objective(precision, covariance, 0.0)
        return GlassoFit(
            precision=precision,
            covariance=covariance.copy(),
            objective=value,
            kkt_violation=kkt_check(precision, covariance, 0.0),
            sweeps=0,
            converged=True,
            objective_history=(value,),
        )

    diagonal = np.diag(covariance) + gamma
    if warm_start is not None:
        precision = symmetrize(warm_start.precision)
    else:
        precision = np.diag(1.0 / diagonal)
    working = inv_pd(cholesky(precision))

    others = [np.flatnonzero(np.arange(p) != column) for column in range(p)]
    history: List[float] = [objective(precision, covariance, gamma)]
    converged = False
    sweeps = 0

    for sweeps in range(1, config.max_sweeps + 1):
        check_stopped()
        previous = working.copy()
        for column, rest in enumerate(others):
            w12 = working[rest, column]
            inverse11 = working[np.ix_(rest, rest)] - np.outer(w12, w12) / working[column, column]

            theta = _lasso(
                diagonal[column] * inverse11,
                -covariance[rest, column],
                gamma,
                precision[rest, column],
            )
            schur = 1.0 / diagonal[column]
            projected = inverse11 @ theta

            precision[rest, column] = precision[column, rest] = theta
            precision[column, column] = schur + float(theta @ projected)

            w12 = -projected / schur
            working[np.ix_(rest, rest)] = inverse11 + np.outer(w12, w12) * schur
            working[rest, column] = working[column, rest] = w12
            working[column, column] = diagonal[column]

        working = inv_pd(cholesky(precision))
        history.append(objective(precision, covariance, gamma))
        if history[-1] < history[-2] - 1e-10 * (1.0 + abs(history[-2])):
            _LOGGER.warning("Graphical lasso objective decreased in sweep %d", sweeps)
        if float(np.max(np.abs(working - previous))) < config.tol:
            converged = True
            break

    if not converged:
        _LOGGER.warning(
            "Graphical lasso did not converge in %d sweeps (gamma=%.4g)", sweeps, gamma
        )

    return GlassoFit(
        precision=precision,
        covariance=working,
        objective=history[-1],
        kkt_violation=kkt_check(precision, covariance, gamma),
        sweeps=sweeps,
        converged=converged,
        objective_history=tuple(history),
    )


def kkt_check(
    fit: Union[GlassoFit, np.ndarray], covariance: np.ndarray, gamma: float
) -> float:
    """Return the largest stationarity violation of the lasso objective."""
    precision = fit.precision if isinstance(fit, GlassoFit) else np.asarray(fit, dtype=float)
    gradient = inv_pd(cholesky(precision)) - np.asarray(covariance, dtype=float)

    nonzero = precision != 0
    violation = np.where(
        nonzero,
        np.abs(gradient - gamma * np.sign(precision)),
        np.maximum(0.0, np.abs(gradient) - gamma),
    )
    return float(np.max(violation))


def penalty_grid(covariance: np.ndarray, grid_size: int) -> np.ndarray:
    """Return ``grid_size`` equally spaced penalties up to max_{i≠j} |S_ij|."""
    off_diagonal = np.abs(covariance[~np.eye(covariance.shape[0], dtype=bool)])
    largest = float(np.max(off_diagonal, initial=0.0))
    return np.linspace(largest / grid_size, largest, grid_size)


def _off_diagonal_count(precision: np.ndarray) -> int:
    return int(np.count_nonzero(precision[np.triu_indices(precision.shape[0], 1)]))


def cv_select_gamma(
    data: np.ndarray,
    folds: int,
    grid_size: int,
    rng: np.random.Generator,
    tol: float = GLASSO_TOL,
) -> CrossValidation:
    """Select γ by k-fold held-out Gaussian log likelihood.

    Rows are shuffled once and split into contiguous folds. Each fold walks
    the grid from the largest penalty down, warm-starting every fit.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    n = data.shape[0]
    if not n >= folds >= 2:
        raise ValueError(f"Need n >= folds >= 2, got n={n} folds={folds}")

    full = empirical_covariance(data)
    _check_diagonal(full)
    grid = penalty_grid(full, grid_size)
    scores = np.zeros(grid_size)

    blocks = np.array_split(rng.permutation(n), folds)
    for fold, held_out in enumerate(blocks):
        training = np.concatenate([block for k, block in enumerate(blocks) if k != fold])
        covariance = empirical_covariance(data[training])
        _check_diagonal(covariance)

        previous: Optional[GlassoFit] = None
        counts = []
        for position in range(grid_size - 1, -1, -1):
            fit = glasso_fit(covariance, GlassoConfig(gamma=grid[position], tol=tol), previous)
            scores[position] += gaussian_loglik(
                PrecisionState.from_matrix(fit.precision), data[held_out]
            )
            counts.append(_off_diagonal_count(fit.precision))
            previous = fit

        if any(later < earlier for earlier, later in zip(counts, counts[1:])):
            _LOGGER.warning("Fold %d: non-zero count is not monotone along the path", fold)

    scores /= folds
    best = int(np.argmax(scores))
    _LOGGER.info("Selected gamma=%.4g (grid position %d of %d)", grid[best], best, grid_size)
    return CrossValidation(gamma=float(grid[best]), grid=grid, scores=scores)
