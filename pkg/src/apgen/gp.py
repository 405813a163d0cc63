"""Exact Gaussian-process conditioning.

``posterior`` is the standard zero-mean predictive distribution.  For
repetitions observed on a shared phase-aligned grid, ``replicated_grid_posterior``
evaluates the same quantity on one repetition: conditioning on ``r`` noisy
copies is equivalent to conditioning on their average with the noise divided
by ``r``.  ``block_posterior_oracle`` builds the full ``nr x nr`` block
covariance and solves it densely, and is kept as an independent check of
that reduction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .kernels import EnvelopeHyperParams, PeriodicHyperParams, WeightedKernel, gram
from .numerics import DEFAULT_MAX_JITTER, cholesky_psd, solve_posdef, symmetrize

__all__ = [
    "PosteriorGaussian",
    "condition",
    "posterior",
    "replicated_grid_posterior",
    "block_posterior_oracle",
    "naive_weighted_posterior",
]


@dataclass(frozen=True)
class PosteriorGaussian:
    grid: np.ndarray
    mean: np.ndarray
    cov: np.ndarray

    @property
    def variance(self) -> np.ndarray:
        return np.diagonal(self.cov).copy()

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(np.clip(self.variance, 0.0, None))


def _add_noise(K: np.ndarray, noise) -> np.ndarray:
    out = K.copy()
    idx = np.diag_indices_from(out)
    out[idx] += noise
    return out


def condition(K, K_cross, K_star, y, noise, max_jitter: float = DEFAULT_MAX_JITTER):
    """Condition on ``y`` given precomputed Gram blocks.

    ``K`` is the train Gram, ``K_cross`` has shape ``(n_star, n)``, ``K_star``
    the test Gram (or ``None`` to skip the covariance).  ``noise`` is a scalar
    or a per-observation vector.

    Returns ``(mean, cov)`` with ``cov`` symmetrized.
    """
    y = np.asarray(y, dtype=float)
    K = np.asarray(K, dtype=float)
    if K.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"{K.shape[0]} inputs but {y.shape[0]} observations")
    F = cholesky_psd(_add_noise(K, noise), max_jitter)
    mean = K_cross @ solve_posdef(F, y)
    if K_star is None:
        return mean, None
    cov = K_star - K_cross @ solve_posdef(F, K_cross.T)
    return mean, symmetrize(cov)


def posterior(T, y, kernel, noise, T_star, max_jitter: float = DEFAULT_MAX_JITTER) -> PosteriorGaussian:
    """Predictive distribution of the latent function at ``T_star``.

    ``noise`` may be zero; the jitter ladder then decides what is added.
    """
    T = np.atleast_1d(np.asarray(T, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    T_star = np.atleast_1d(np.asarray(T_star, dtype=float))
    if T.shape != y.shape or T.size == 0:
        raise DimensionMismatch(f"inputs {T.shape} and outputs {y.shape} must match and be nonempty")
    if noise < 0:
        raise ValueError("noise must be nonnegative")
    mean, cov = condition(
        gram(kernel, T), gram(kernel, T_star, T), gram(kernel, T_star), y, noise, max_jitter
    )
    return PosteriorGaussian(T_star, mean, cov)


def replicated_grid_posterior(K, y_bar, noise: float, r: float, grid=None,
                              max_jitter: float = DEFAULT_MAX_JITTER) -> PosteriorGaussian:
    """Posterior on the grid from the mean repetition and noise ``noise / r``."""
    K = np.asarray(K, dtype=float)
    y_bar = np.asarray(y_bar, dtype=float)
    if K.shape != (y_bar.size, y_bar.size):
        raise DimensionMismatch(f"Gram {K.shape} does not match mean repetition of length {y_bar.size}")
    if r <= 0:
        raise ValueError("r must be positive")
    mean, cov = condition(K, K, K, y_bar, noise / r, max_jitter)
    grid = np.arange(y_bar.size, dtype=float) if grid is None else np.asarray(grid, dtype=float)
    return PosteriorGaussian(grid, mean, cov)


def block_posterior_oracle(K, reps, noise: float, grid=None,
                           max_jitter: float = DEFAULT_MAX_JITTER) -> PosteriorGaussian:
    """Posterior on the grid from the explicit ``nr x nr`` block covariance.

    Diagonal blocks are ``K + noise I``, off-diagonal blocks ``K``.  No
    Woodbury shortcut is used.
    """
    K = np.asarray(K, dtype=float)
    reps = np.atleast_2d(np.asarray(reps, dtype=float))
    r, n = reps.shape
    if K.shape != (n, n):
        raise DimensionMismatch(f"Gram {K.shape} does not match repetitions of length {n}")
    ones = np.ones((r, r))
    Sigma_r = np.kron(ones, K) + noise * np.eye(n * r)
    cross = np.kron(np.ones((1, r)), K)
    F = cholesky_psd(Sigma_r, max_jitter)
    mean = cross @ solve_posdef(F, reps.reshape(-1))
    cov = symmetrize(K - cross @ solve_posdef(F, cross.T))
    grid = np.arange(n, dtype=float) if grid is None else np.asarray(grid, dtype=float)
    return PosteriorGaussian(grid, mean, cov)


def naive_weighted_posterior(T, y, theta: PeriodicHyperParams, psi: EnvelopeHyperParams, T_star,
                             max_jitter: float = DEFAULT_MAX_JITTER) -> PosteriorGaussian:
    """Posterior under the envelope-weighted periodic prior ``g = w * k``.

    Diagnostic only: far from the data its mean returns to zero and its
    variance rises to ``g(t, t)``.  Observation noise is ``theta.noise_variance``.
    """
    return posterior(T, y, WeightedKernel(theta, psi), theta.noise_variance, T_star, max_jitter)
