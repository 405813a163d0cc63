"""Dense linear algebra and sampling primitives.

Everything here works in float64. Covariance matrices are factorized once
through :func:`cholesky_psd`, which walks a jitter ladder until LAPACK
accepts the matrix, and the resulting :class:`PosDefFactor` is what the
rest of the package passes around.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .errors import DimensionMismatch, NotFactorizable, NotSymmetric

__all__ = [
    "DEFAULT_MAX_JITTER",
    "PosDefFactor",
    "jitter_ladder",
    "cholesky_psd",
    "solve_posdef",
    "log_det",
    "make_rng",
    "sample_mvn",
    "min_eigenvalue",
    "finite_diff_grad",
    "symmetrize",
]

DEFAULT_MAX_JITTER = 1e-4
_SYM_RTOL = 1e-12


@dataclass(frozen=True)
class PosDefFactor:
    """Lower Cholesky factor of ``A + jitter_used * I``."""

    lower_triangular: np.ndarray
    jitter_used: float

    @property
    def dim(self) -> int:
        return self.lower_triangular.shape[0]

    def reconstruct(self) -> np.ndarray:
        L = self.lower_triangular
        return L @ L.T


def _as_square(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {A.shape}")
    if A.shape[0] < 1:
        raise DimensionMismatch("matrix must have dim >= 1")
    return A


def _check_symmetric(A: np.ndarray, rtol: float = _SYM_RTOL) -> None:
    scale = max(np.max(np.abs(A)), np.finfo(float).tiny)
    asym = np.max(np.abs(A - A.T))
    if asym > rtol * scale:
        raise NotSymmetric(f"relative asymmetry {asym / scale:.3e} exceeds {rtol:g}")


def symmetrize(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    return 0.5 * (A + A.T)


def jitter_ladder(max_jitter: float = DEFAULT_MAX_JITTER) -> list[float]:
    """Return ``[0, 1e-10, 1e-9, ...]`` up to and including ``max_jitter``."""
    ladder = [0.0]
    k = -10
    while 10.0 ** k <= max_jitter * (1 + 1e-12):
        ladder.append(10.0 ** k)
        k += 1
    if ladder[-1] < max_jitter * (1 - 1e-12):
        ladder.append(float(max_jitter))
    return ladder


def cholesky_psd(A, max_jitter: float = DEFAULT_MAX_JITTER) -> PosDefFactor:
    """Factorize a symmetric PSD matrix, adding the smallest workable jitter.

    Raises
    ------
    NotSymmetric
        If ``A`` is asymmetric beyond 1e-12 relative tolerance.
    NotFactorizable
        If no jitter up to ``max_jitter`` yields a factor with a positive
        diagonal.
    """
    A = _as_square(A)
    _check_symmetric(A)
    n = A.shape[0]
    eye = np.eye(n)
    for j in jitter_ladder(max_jitter):
        try:
            L = np.linalg.cholesky(A + j * eye if j else A)
        except np.linalg.LinAlgError:
            continue
        d = np.diagonal(L)
        if np.all(d > 0) and np.all(np.isfinite(L)):
            return PosDefFactor(L, float(j))
    raise NotFactorizable(
        f"matrix of dim {n} not factorizable with jitter up to {max_jitter:g}"
    )


def solve_posdef(F: PosDefFactor, B) -> np.ndarray:
    """Solve ``(A + jI) X = B`` given the factor of ``A + jI``."""
    B = np.asarray(B, dtype=float)
    if B.shape[0] != F.dim:
        raise DimensionMismatch(f"rhs has {B.shape[0]} rows, factor has dim {F.dim}")
    return sla.cho_solve((F.lower_triangular, True), B, check_finite=False)


def log_det(F: PosDefFactor) -> float:
    return float(2.0 * np.sum(np.log(np.diagonal(F.lower_triangular))))


def make_rng(seed) -> np.random.Generator:
    """Build a PCG64 generator from a 64-bit seed (generators pass through)."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        raise ValueError("an explicit seed is required")
    return np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)


def sample_mvn(mean, F: PosDefFactor, count: int, seed) -> np.ndarray:
    """Draw ``count`` rows ``mean + L z`` with ``z`` standard normal."""
    mean = np.asarray(mean, dtype=float)
    if mean.ndim != 1 or mean.shape[0] != F.dim:
        raise DimensionMismatch(f"mean has shape {mean.shape}, factor has dim {F.dim}")
    if count < 0:
        raise ValueError("count must be nonnegative")
    rng = make_rng(seed)
    z = rng.standard_normal((count, F.dim))
    return mean[None, :] + z @ F.lower_triangular.T


def min_eigenvalue(A) -> float:
    A = _as_square(A)
    _check_symmetric(A)
    return float(sla.eigh(A, eigvals_only=True, subset_by_index=[0, 0])[0])


def finite_diff_grad(f: Callable[[np.ndarray], float], x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    if h <= 0:
        raise ValueError("step h must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g
