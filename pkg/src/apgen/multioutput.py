"""Linear model of coregionalization (LMC) over periodic latent processes.

Outputs are stacked channel-major: for inputs ``T`` of length ``n`` the joint
vector is ``[y_1(T), ..., y_D(T)]`` and the covariance is

    sum_q (b_q b_q^T) kron K_q(T, T)

with ``b_q`` the q-th column of the mixing matrix.  The latent signal
variances are held at their initial value during fitting since they are
redundant with the scale of ``b_q``.  The two-stage pipeline is the
univariate one with a single envelope shared by all channels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import RepetitionSet, dense_grid
from .errors import DimensionMismatch, GridTooLarge, InvalidBatchSize
from .generator import DEFAULT_MAX_POINTS, GammaModel, sample_trajectories
from .gp import PosteriorGaussian, condition
from .kernels import EnvelopeHyperParams, EnvelopeKernel, PeriodicHyperParams, PeriodicKernel, gram, kernel_grads
from .numerics import make_rng, min_eigenvalue
from .training import AdamState, FitReport, adam_update, gaussian_nll, stage2_fit

__all__ = [
    "CoregionalizationParams",
    "lmc_gram",
    "lmc_nll",
    "lmc_objective",
    "lmc_stage1_fit",
    "lmc_posterior",
    "build_lmc_gamma",
    "LMCResult",
    "fit_and_sample_2d",
]


@dataclass(frozen=True)
class CoregionalizationParams:
    """Mixing matrix ``(D, Q)``, one periodic latent per column, per-channel noise."""

    mixing: np.ndarray
    latents: tuple
    noise: np.ndarray

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.mixing, dtype=float))
        noise = np.atleast_1d(np.asarray(self.noise, dtype=float))
        if B.shape[1] != len(self.latents):
            raise DimensionMismatch(f"mixing has {B.shape[1]} columns but {len(self.latents)} latents")
        if noise.shape != (B.shape[0],):
            raise DimensionMismatch(f"need {B.shape[0]} noise variances, got {noise.shape}")
        if np.any(noise < 0):
            raise ValueError("noise variances must be nonnegative")
        object.__setattr__(self, "mixing", B)
        object.__setattr__(self, "latents", tuple(self.latents))
        object.__setattr__(self, "noise", noise)

    @property
    def D(self) -> int:
        return self.mixing.shape[0]

    @property
    def Q(self) -> int:
        return self.mixing.shape[1]

    @property
    def period(self) -> float:
        return self.latents[0].period

    @classmethod
    def default(cls, D: int, period: float = 1.0) -> "CoregionalizationParams":
        return cls(np.eye(D), tuple(PeriodicHyperParams(1.0, 1.0, 0.0, period) for _ in range(D)), np.full(D, 0.1))

    def coregionalization(self) -> np.ndarray:
        return self.mixing @ self.mixing.T

    def to_vector(self) -> np.ndarray:
        return np.concatenate([
            np.log([lat.length_scale for lat in self.latents]),
            self.mixing.reshape(-1),
            np.log(self.noise),
        ])

    def from_vector(self, v) -> "CoregionalizationParams":
        """Inverse of :meth:`to_vector`; latent variances and period are kept."""
        D, Q = self.D, self.Q
        v = np.asarray(v, dtype=float)
        lats = tuple(
            PeriodicHyperParams(float(np.exp(v[q])), lat.signal_variance, 0.0, lat.period)
            for q, lat in enumerate(self.latents)
        )
        B = v[Q:Q + D * Q].reshape(D, Q)
        return CoregionalizationParams(B, lats, np.exp(v[Q + D * Q:]))

    def rescaled(self, r_effective: float) -> "CoregionalizationParams":
        return CoregionalizationParams(self.mixing, self.latents, self.noise * r_effective)

    def as_dict(self) -> dict:
        return {
            "mixing": self.mixing.tolist(),
            "latents": [lat.as_dict() for lat in self.latents],
            "noise": self.noise.tolist(),
        }


def lmc_gram(params: CoregionalizationParams, T, T_prime=None) -> np.ndarray:
    """Channel-major LMC covariance between ``T`` and ``T_prime``."""
    out = None
    for q, lat in enumerate(params.latents):
        b = params.mixing[:, q]
        term = np.kron(np.outer(b, b), gram(PeriodicKernel(lat), T, T_prime))
        out = term if out is None else out + term
    return out


def _noise_diag(params: CoregionalizationParams, n: int) -> np.ndarray:
    return np.repeat(params.noise, n)


def lmc_objective(vec, template: CoregionalizationParams, T, Y):
    """NLL and gradient w.r.t. :meth:`CoregionalizationParams.to_vector` layout.

    ``Y`` has shape ``(n, D)``.
    """
    params = template.from_vector(vec)
    T = np.asarray(T, dtype=float)
    n, D, Q = T.shape[0], params.D, params.Q
    y = np.asarray(Y, dtype=float).T.reshape(-1)
    Ks, dKs = [], []
    for lat in params.latents:
        kern = PeriodicKernel(lat)
        Ks.append(gram(kern, T))
        dKs.append(kernel_grads(kern, T)[0])
    Sigma = sum(np.kron(np.outer(params.mixing[:, q], params.mixing[:, q]), Ks[q]) for q in range(Q))
    Sigma = Sigma + np.diag(_noise_diag(params, n))
    dS = []
    for q in range(Q):
        b = params.mixing[:, q]
        dS.append(np.kron(np.outer(b, b), dKs[q]))
    for d in range(D):
        for q in range(Q):
            b = params.mixing[:, q]
            e = np.zeros(D)
            e[d] = 1.0
            dS.append(np.kron(np.outer(e, b) + np.outer(b, e), Ks[q]))
    for d in range(D):
        mask = np.zeros(D)
        mask[d] = params.noise[d]
        dS.append(np.diag(np.repeat(mask, n)))
    return gaussian_nll(y, Sigma, dS)


def lmc_nll(params: CoregionalizationParams, T, Y) -> float:
    T = np.asarray(T, dtype=float)
    y = np.asarray(Y, dtype=float).T.reshape(-1)
    Sigma = lmc_gram(params, T) + np.diag(_noise_diag(params, T.shape[0]))
    return gaussian_nll(y, Sigma)[0]


def lmc_stage1_fit(rs: RepetitionSet, batch_size: int, steps: int = 100, lr: float = 0.1, seed: int = 0,
                   init: CoregionalizationParams | None = None):
    """Mini-batch Adam over latent length scales, mixing matrix and channel noise."""
    if not 1 <= batch_size <= rs.r:
        raise InvalidBatchSize(f"batch size {batch_size} outside [1, {rs.r}]")
    template = init or CoregionalizationParams.default(rs.dim, rs.period)
    x = template.to_vector()
    state = AdamState.zeros(x.size, lr=lr)
    rng = make_rng(seed)
    trace = []
    for _ in range(steps):
        idx = np.sort(rng.choice(rs.r, size=batch_size, replace=False))
        batch = rs.subset(idx)
        nll, grad = lmc_objective(x, template, batch.times(), batch.values(None))
        trace.append(nll)
        x = adam_update(state, x, grad)
    params = template.from_vector(x)
    mixing = tuple(f"mixing_{d}{q}" for d in range(params.D) for q in range(params.Q))
    names = tuple(f"length_scale_{q}" for q in range(params.Q)) + mixing + tuple(
        f"noise_{d}" for d in range(params.D)
    )
    return params, FitReport(names, x, trace, steps, seed, linear_params=frozenset(mixing))


def lmc_posterior(params: CoregionalizationParams, T, Y, T_star) -> PosteriorGaussian:
    """Joint posterior of all channels at ``T_star``; ``grid`` repeats ``T_star`` per channel."""
    T = np.asarray(T, dtype=float)
    T_star = np.asarray(T_star, dtype=float)
    y = np.asarray(Y, dtype=float).T.reshape(-1)
    mean, cov = condition(
        lmc_gram(params, T), lmc_gram(params, T_star, T), lmc_gram(params, T_star),
        y, _noise_diag(params, T.shape[0]),
    )
    return PosteriorGaussian(np.tile(T_star, params.D), mean, cov)


def build_lmc_gamma(rs: RepetitionSet, params: CoregionalizationParams, psi: EnvelopeHyperParams, R: int,
                    samples_per_rep: int, max_points: int = DEFAULT_MAX_POINTS) -> GammaModel:
    """Multichannel generative model; vectors are channel-major over the ``R``-period grid."""
    D, m = params.D, samples_per_rep
    n = R * m
    if D * n > max_points:
        raise GridTooLarge(f"grid of {D * n} points exceeds the cap of {max_points}")
    one = dense_grid(1, m, params.period)
    post = lmc_posterior(params, rs.times(), rs.values(None), one)
    grid = dense_grid(R, m, params.period)
    mean = np.concatenate([np.tile(post.mean[c * m:(c + 1) * m], R) for c in range(D)])
    S = np.block([
        [np.tile(post.cov[a * m:(a + 1) * m, b * m:(b + 1) * m], (R, R)) for b in range(D)]
        for a in range(D)
    ])
    full_grid = np.tile(grid, D)
    W = gram(EnvelopeKernel(psi, params.period), full_grid)
    theta = params.latents[0].with_noise(float(params.noise.mean()))
    return GammaModel(full_grid, mean, S, W, theta, psi, R, m)


@dataclass
class LMCResult:
    params_trained: CoregionalizationParams
    params: CoregionalizationParams
    psi: EnvelopeHyperParams
    stage1: FitReport
    stage2: FitReport
    gamma: GammaModel
    samples: np.ndarray
    extra: dict = field(default_factory=dict)

    def channel(self, samples: np.ndarray, c: int) -> np.ndarray:
        n = self.gamma.repetitions * self.gamma.samples_per_rep
        return samples[..., c * n:(c + 1) * n]

    def to_dict(self) -> dict:
        C = self.params.coregionalization()
        d = np.sqrt(np.diag(C))
        return {
            "lmc_trained": self.params_trained.as_dict(),
            "lmc": self.params.as_dict(),
            "coregionalization": C.tolist(),
            "coregionalization_correlation": (C / np.outer(d, d)).tolist(),
            "min_eigenvalue_coregionalization": min_eigenvalue(C + 1e-12 * np.eye(C.shape[0])),
            "psi": self.psi.as_dict(),
            "stage1": self.stage1.to_dict(),
            "stage2": self.stage2.to_dict(),
        }


def fit_and_sample_2d(rs: RepetitionSet, batch_size: int = 2, steps: int = 100, lr: float = 0.1, seed: int = 0,
                      R: int | None = None, samples_per_rep: int = 50, count: int = 3,
                      drop_output_noise: bool = False) -> LMCResult:
    """Stage-1 LMC fit, noise rescaling, stage-2 envelope fit, then sampling."""
    params_raw, rep1 = lmc_stage1_fit(rs, batch_size, steps, lr, seed)
    params = params_raw.rescaled(rs.r)
    T, Y = rs.times(), rs.values(None)
    post = lmc_posterior(params, T, Y, T)
    y = Y.T.reshape(-1)
    psi, rep2 = stage2_fit(y, post, steps, lr, seed, period=rs.period)
    g = build_lmc_gamma(rs, params, psi, R or rs.r, samples_per_rep)
    samples = sample_trajectories(g, count, drop_output_noise, seed)
    return LMCResult(params_raw, params, psi, rep1, rep2, g, samples)
