"""Posterior-weighted generative distribution on an explicit grid.

The stage-1 posterior of a periodic kernel is exactly periodic in both
arguments, so it is computed on a single period and tiled over ``R``
repetitions.  The envelope matrix is evaluated on the full grid and applied
elementwise, which keeps the mean identical in every repetition while the
correlation between repetitions decays with their distance.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .dataset import RepetitionSet, dense_grid
from .errors import DimensionMismatch, GridTooLarge
from .gp import posterior
from .kernels import EnvelopeHyperParams, EnvelopeKernel, PeriodicHyperParams, PeriodicKernel, gram
from .numerics import DEFAULT_MAX_JITTER, PosDefFactor, cholesky_psd, log_det, sample_mvn, solve_posdef

__all__ = [
    "DEFAULT_MAX_POINTS",
    "GammaModel",
    "build_gamma",
    "sample_trajectories",
    "log_likelihood",
    "correlation",
    "repetition_correlation",
]

DEFAULT_MAX_POINTS = 2000
LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class GammaModel:
    grid: np.ndarray
    mean: np.ndarray
    posterior_cov: np.ndarray
    envelope: np.ndarray
    theta: PeriodicHyperParams
    psi: EnvelopeHyperParams
    repetitions: int
    samples_per_rep: int
    modulation: str = "schur"

    @cached_property
    def modulated_cov(self) -> np.ndarray:
        """Covariance without the output-noise diagonal."""
        if self.modulation == "schur":
            return self.envelope * self.posterior_cov
        return self.envelope + self.posterior_cov

    @cached_property
    def cov(self) -> np.ndarray:
        C = self.modulated_cov.copy()
        C[np.diag_indices_from(C)] += self.psi.noise_variance
        return C

    @cached_property
    def factor(self) -> PosDefFactor:
        return cholesky_psd(self.cov, DEFAULT_MAX_JITTER)

    @cached_property
    def noiseless_factor(self) -> PosDefFactor:
        return cholesky_psd(self.modulated_cov, DEFAULT_MAX_JITTER)

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diagonal(self.cov), 0.0, None))

    def repetition_index(self) -> np.ndarray:
        return np.repeat(np.arange(self.repetitions), self.samples_per_rep)


def build_gamma(rs: RepetitionSet, theta: PeriodicHyperParams, psi: EnvelopeHyperParams, R: int,
                samples_per_rep: int, modulation: str = "schur", max_points: int = DEFAULT_MAX_POINTS,
                channel: int = 0) -> GammaModel:
    """Generative model over ``R`` repetitions.

    ``theta`` must already carry the rescaled noise.  The stage-1 posterior
    conditions on every training repetition jointly.
    """
    if R < 1 or samples_per_rep < 1:
        raise ValueError("R and samples_per_rep must be positive")
    if modulation not in ("schur", "additive"):
        raise ValueError(f"unknown modulation {modulation!r}")
    n = R * samples_per_rep
    if n > max_points:
        raise GridTooLarge(f"grid of {n} points exceeds the cap of {max_points}")
    p = theta.period
    one = dense_grid(1, samples_per_rep, p)
    post = posterior(rs.times(), rs.values(channel), PeriodicKernel(theta), theta.noise_variance, one)
    grid = dense_grid(R, samples_per_rep, p)
    mean = np.tile(post.mean, R)
    S = np.tile(post.cov, (R, R))
    W = gram(EnvelopeKernel(psi, p), grid)
    return GammaModel(grid, mean, S, W, theta, psi, R, samples_per_rep, modulation)


def sample_trajectories(g: GammaModel, count: int, drop_output_noise: bool = False, seed=0) -> np.ndarray:
    """``count`` draws, one per row.  Without output noise uses ``W * S`` only."""
    if count == 0:
        return np.empty((0, g.grid.size))
    F = g.noiseless_factor if drop_output_noise else g.factor
    return sample_mvn(g.mean, F, count, seed)


def log_likelihood(g: GammaModel, trajectory) -> float:
    """Gaussian log-density of a trajectory on ``g.grid``."""
    x = np.asarray(trajectory, dtype=float)
    if x.shape != g.mean.shape:
        raise DimensionMismatch(f"trajectory has shape {x.shape}, grid has {g.mean.shape[0]} points")
    r = x - g.mean
    F = g.factor
    return -0.5 * (float(r @ solve_posdef(F, r)) + log_det(F) + r.size * LOG_2PI)


def correlation(cov) -> np.ndarray:
    s = np.sqrt(np.diagonal(cov))
    return cov / np.outer(s, s)


def repetition_correlation(cov, samples_per_rep: int, lag: int) -> float:
    """Correlation between repetitions ``lag`` periods apart.

    Each repetition is treated as a vector; the value is the mean over block
    pairs of ``tr(C_ij) / sqrt(tr(C_ii) tr(C_jj))`` with ``j = i + lag``.
    """
    C = np.asarray(cov, dtype=float)
    m = samples_per_rep
    R = C.shape[0] // m
    if R * m != C.shape[0] or not 0 <= lag < R:
        raise ValueError(f"lag {lag} invalid for {C.shape[0]} points at {m} per repetition")
    tr = lambda i, j: np.trace(C[i * m:(i + 1) * m, j * m:(j + 1) * m])
    vals = [tr(i, i + lag) / np.sqrt(tr(i, i) * tr(i + lag, i + lag)) for i in range(R - lag)]
    return float(np.mean(vals))
