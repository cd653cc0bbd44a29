"""Dense linear algebra and seedable random primitives."""
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy import linalg

from .const import PD_PIVOT_RTOL
from .exceptions import NotPositiveDefinite


@dataclass(frozen=True, eq=False)
class CholFactor:
    """Upper-triangular factor with ``factor.T @ factor`` equal to the source."""

    factor: np.ndarray

    @property
    def dim(self) -> int:
        """Return the matrix dimension."""
        return self.factor.shape[0]

    def reconstruct(self) -> np.ndarray:
        """Return the source matrix."""
        return self.factor.T @ self.factor


def make_rng(seed: Optional[int] = None) -> np.random.Generator:
    """Return a PCG64 generator for a 64-bit seed."""
    return np.random.Generator(np.random.PCG64(seed))


def split_rng(seed: Optional[int], count: int) -> List[np.random.Generator]:
    """Return independent child generators.

    Children come from ``SeedSequence(seed).spawn(count)``; child ``k`` is the
    same stream whatever the number of workers that consume the children.
    """
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.Generator(np.random.PCG64(child)) for child in children]


def symmetrize(matrix: np.ndarray) -> np.ndarray:
    """Return the symmetric part of a square matrix."""
    return 0.5 * (matrix + matrix.T)


def cholesky(matrix: np.ndarray) -> CholFactor:
    """Factor a symmetric matrix, raising NotPositiveDefinite on failure."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if not np.all(np.isfinite(matrix)):
        raise NotPositiveDefinite("Matrix has non-finite entries")

    try:
        factor = linalg.cholesky(matrix, lower=False, check_finite=False)
    except linalg.LinAlgError as exception:
        raise NotPositiveDefinite("Cholesky pivot is not positive") from exception

    scale = max(float(np.max(np.abs(np.diag(matrix)))), np.finfo(float).tiny)
    pivots = np.diag(factor) ** 2
    if not np.all(np.isfinite(pivots)) or np.min(pivots) <= PD_PIVOT_RTOL * scale:
        raise NotPositiveDefinite("Cholesky pivot below threshold")

    return CholFactor(factor=factor)


def is_positive_definite(matrix: np.ndarray) -> bool:
    """Return True when the Cholesky test passes."""
    try:
        cholesky(matrix)
    except NotPositiveDefinite:
        return False

    return True


def logdet_pd(chol: CholFactor) -> float:
    """Return the log-determinant of the factored matrix."""
    return 2.0 * float(np.sum(np.log(np.diag(chol.factor))))


def inv_pd(chol: CholFactor) -> np.ndarray:
    """Return the inverse of the factored matrix."""
    inverse = linalg.cho_solve(
        (chol.factor, False), np.eye(chol.dim), check_finite=False
    )
    return symmetrize(inverse)


def solve_pd(chol: CholFactor, rhs: np.ndarray) -> np.ndarray:
    """Solve ``A x = rhs`` for the factored matrix A."""
    return linalg.cho_solve((chol.factor, False), rhs, check_finite=False)


def sample_std_gaussian(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Draw ``dim`` i.i.d. standard normal variates."""
    return rng.standard_normal(dim)


def sample_mvn_precision(
    rng: np.random.Generator, precision_chol: CholFactor, size: Optional[int] = None
) -> np.ndarray:
    """Draw from N(0, Λ⁻¹) given the factor Φ of Λ by solving Φ y = z.

    With ``size`` set, returns a ``(size, dim)`` array of independent draws.
    """
    if size is None:
        z = sample_std_gaussian(rng, precision_chol.dim)
        return linalg.solve_triangular(precision_chol.factor, z, lower=False)

    z = rng.standard_normal((precision_chol.dim, size))
    return linalg.solve_triangular(precision_chol.factor, z, lower=False).T


def sample_wishart(
    rng: np.random.Generator, b: float, d_scale: np.ndarray
) -> np.ndarray:
    """Draw A with density ∝ |A|^((b-2)/2) exp(-tr(D A)/2).

    This is the textbook Wishart with n = b + dim - 1 degrees of freedom and
    scale V = D⁻¹, drawn by Bartlett decomposition. Its mean is n·D⁻¹.
    """
    d_scale = np.atleast_2d(d_scale)
    dim = d_scale.shape[0]
    dof = b + dim - 1
    scale_root = linalg.solve_triangular(
        cholesky(d_scale).factor, np.eye(dim), lower=False
    )

    bartlett = np.zeros((dim, dim))
    bartlett[np.diag_indices(dim)] = np.sqrt(rng.chisquare(dof - np.arange(dim)))
    lower = np.tril_indices(dim, -1)
    bartlett[lower] = rng.standard_normal(len(lower[0]))

    root = scale_root @ bartlett
    return symmetrize(root @ root.T)
