"""Two-stage hyperparameter training.

Stage 1 fits the periodic kernel and its noise by minimizing the Gaussian
NLL of randomly drawn mini-batches of repetitions.  The batch is evaluated
jointly, so the likelihood sees variation between the repetitions in the
batch and has to attribute it to noise.  Because the posterior later
conditions on all ``r`` repetitions at once, the learned noise is
multiplied by ``r`` before use (:func:`rescale_noise`).

Stage 2 fits the envelope parameters by minimizing the NLL of all training
observations under ``N(mu, W * S + s2 I)``, where ``(mu, S)`` is the stage-1
posterior at the training inputs and ``*`` is the elementwise product.

Both stages use Adam in log-parameter space with analytic gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import RepetitionSet
from .errors import DimensionMismatch, InvalidBatchSize
from .gp import PosteriorGaussian, posterior
from .kernels import (
    EnvelopeHyperParams,
    EnvelopeKernel,
    PeriodicHyperParams,
    PeriodicKernel,
    gram,
    kernel_grads,
)
from .numerics import DEFAULT_MAX_JITTER, cholesky_psd, log_det, make_rng, solve_posdef

__all__ = [
    "AdamState",
    "adam_update",
    "FitReport",
    "gaussian_nll",
    "stage1_nll",
    "stage1_grad",
    "stage1_objective",
    "stage1_fit",
    "rescale_noise",
    "stage2_covariance",
    "stage2_nll",
    "stage2_grad",
    "stage2_objective",
    "stage2_fit",
    "stage1_posterior_at_inputs",
    "TwoStageFit",
    "fit_two_stage",
]

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    lr: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int, lr: float = 0.1, **kw) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), lr=lr, **kw)


def adam_update(state: AdamState, x: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Apply one bias-corrected Adam step; mutates ``state`` and returns new ``x``."""
    grad = np.asarray(grad, dtype=float)
    if grad.shape != state.first_moment.shape:
        raise DimensionMismatch("gradient and moment vectors differ in length")
    state.step_count += 1
    state.first_moment = state.beta1 * state.first_moment + (1 - state.beta1) * grad
    state.second_moment = state.beta2 * state.second_moment + (1 - state.beta2) * grad * grad
    m_hat = state.first_moment / (1 - state.beta1**state.step_count)
    v_hat = state.second_moment / (1 - state.beta2**state.step_count)
    return x - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


@dataclass
class FitReport:
    param_names: tuple
    final_log_params: np.ndarray
    nll_trace: list
    steps: int
    seed: int
    batches: list = field(default_factory=list)
    linear_params: frozenset = frozenset()  # names stored as-is rather than as logs

    @property
    def final_params(self) -> dict:
        return {name: float(v if name in self.linear_params else np.exp(v))
                for name, v in zip(self.param_names, self.final_log_params)}

    def to_dict(self) -> dict:
        return {
            "params": self.final_params,
            "log_params": {n: float(v) for n, v in zip(self.param_names, self.final_log_params)},
            "nll_trace": [float(v) for v in self.nll_trace],
            "steps": self.steps,
            "seed": self.seed,
        }


def gaussian_nll(y, Sigma, dSigma=(), max_jitter: float = DEFAULT_MAX_JITTER):
    """NLL of zero-mean ``y`` under ``N(0, Sigma)`` and its gradient.

    ``dSigma`` are derivatives of ``Sigma`` w.r.t. each parameter; the
    gradient is ``0.5 tr((Sigma^-1 - a a^T) dSigma)`` with ``a = Sigma^-1 y``.
    """
    y = np.asarray(y, dtype=float)
    F = cholesky_psd(Sigma, max_jitter)
    alpha = solve_posdef(F, y)
    n = y.shape[0]
    nll = 0.5 * float(y @ alpha) + 0.5 * log_det(F) + 0.5 * n * LOG_2PI
    if not dSigma:
        return nll, np.zeros(0)
    G = solve_posdef(F, np.eye(n)) - np.outer(alpha, alpha)
    grad = np.array([0.5 * np.sum(G * dS) for dS in dSigma])
    return nll, grad


def stage1_objective(log_params, T, y, period: float = 1.0):
    """NLL and gradient over ``(log l, log sf2, log noise)`` on one batch."""
    theta = PeriodicHyperParams.from_log(log_params, period)
    kern = PeriodicKernel(theta)
    K = gram(kern, T)
    n = K.shape[0]
    Sigma = K + theta.noise_variance * np.eye(n)
    dS = kernel_grads(kern, T) + [theta.noise_variance * np.eye(n)]
    return gaussian_nll(y, Sigma, dS)


def _batch_arrays(batch: RepetitionSet, channel: int = 0):
    return batch.times(), batch.values(channel)


def stage1_nll(theta: PeriodicHyperParams, batch: RepetitionSet) -> float:
    T, y = _batch_arrays(batch)
    n = T.shape[0]
    Sigma = gram(PeriodicKernel(theta), T) + theta.noise_variance * np.eye(n)
    return gaussian_nll(y, Sigma)[0]


def stage1_grad(theta: PeriodicHyperParams, batch: RepetitionSet) -> np.ndarray:
    T, y = _batch_arrays(batch)
    return stage1_objective(theta.to_log(), T, y, theta.period)[1]


def _draw_batch(rng: np.random.Generator, r: int, size: int) -> np.ndarray:
    return np.sort(rng.choice(r, size=size, replace=False))


def stage1_fit(rs: RepetitionSet, batch_size: int, steps: int = 100, lr: float = 0.1, seed: int = 0,
               init: PeriodicHyperParams | None = None):
    """Mini-batch Adam on the stage-1 NLL.

    Every step draws ``batch_size`` distinct repetitions uniformly at random,
    independently of previous steps.

    Returns
    -------
    theta : PeriodicHyperParams
        Trained parameters (noise not yet rescaled).
    report : FitReport
    """
    if not 1 <= batch_size <= rs.r:
        raise InvalidBatchSize(f"batch size {batch_size} outside [1, {rs.r}]")
    init = init or PeriodicHyperParams(1.0, 1.0, 0.1, rs.period)
    x = init.to_log()
    state = AdamState.zeros(x.size, lr=lr)
    rng = make_rng(seed)
    trace, batches = [], []
    for _ in range(steps):
        idx = _draw_batch(rng, rs.r, batch_size)
        T, y = _batch_arrays(rs.subset(idx))
        nll, grad = stage1_objective(x, T, y, rs.period)
        trace.append(nll)
        batches.append(idx.tolist())
        x = adam_update(state, x, grad)
    theta = PeriodicHyperParams.from_log(x, rs.period)
    report = FitReport(("length_scale", "signal_variance", "noise_variance"), x, trace, steps, seed, batches)
    return theta, report


def rescale_noise(theta: PeriodicHyperParams, r_effective: float) -> PeriodicHyperParams:
    """Multiply the noise by the number of repetitions conditioned on jointly."""
    if r_effective < 1:
        raise ValueError("r_effective must be >= 1")
    return theta.with_noise(theta.noise_variance * r_effective)


def stage1_posterior_at_inputs(T, y, theta: PeriodicHyperParams) -> PosteriorGaussian:
    return posterior(T, y, PeriodicKernel(theta), theta.noise_variance, T)


def stage2_covariance(psi: EnvelopeHyperParams, post: PosteriorGaussian, period: float = 1.0,
                      modulation: str = "schur", include_noise: bool = True) -> np.ndarray:
    """``W * S (+ s2 I)``; ``modulation="additive"`` gives ``W + S`` instead."""
    W = gram(EnvelopeKernel(psi, period), post.grid)
    if modulation == "schur":
        C = W * post.cov
    elif modulation == "additive":
        C = W + post.cov
    else:
        raise ValueError(f"unknown modulation {modulation!r}")
    if include_noise:
        C = C + psi.noise_variance * np.eye(C.shape[0])
    return C


def stage2_objective(log_params, y, post: PosteriorGaussian, period: float = 1.0,
                     modulation: str = "schur"):
    """NLL and gradient over ``(log l_psi, log var, log noise)``."""
    psi = EnvelopeHyperParams.from_log(log_params)
    y = np.asarray(y, dtype=float)
    if y.shape != post.mean.shape:
        raise DimensionMismatch(f"{y.shape[0]} observations but posterior has {post.mean.shape[0]} points")
    kern = EnvelopeKernel(psi, period)
    W = gram(kern, post.grid)
    dW = kernel_grads(kern, post.grid)
    n = y.shape[0]
    eye = np.eye(n)
    if modulation == "schur":
        Sigma = W * post.cov + psi.noise_variance * eye
        dS = [d * post.cov for d in dW]
    elif modulation == "additive":
        Sigma = W + post.cov + psi.noise_variance * eye
        dS = list(dW)
    else:
        raise ValueError(f"unknown modulation {modulation!r}")
    dS.append(psi.noise_variance * eye)
    return gaussian_nll(y - post.mean, Sigma, dS)


def stage2_nll(psi: EnvelopeHyperParams, y, post: PosteriorGaussian, period: float = 1.0,
               modulation: str = "schur") -> float:
    y = np.asarray(y, dtype=float)
    if y.shape != post.mean.shape:
        raise DimensionMismatch(f"{y.shape[0]} observations but posterior has {post.mean.shape[0]} points")
    Sigma = stage2_covariance(psi, post, period, modulation)
    return gaussian_nll(y - post.mean, Sigma)[0]


def stage2_grad(psi: EnvelopeHyperParams, y, post: PosteriorGaussian, period: float = 1.0,
                modulation: str = "schur") -> np.ndarray:
    return stage2_objective(psi.to_log(), y, post, period, modulation)[1]


def stage2_fit(y, post: PosteriorGaussian, steps: int = 100, lr: float = 0.1, seed: int = 0,
               init: EnvelopeHyperParams | None = None, period: float = 1.0,
               modulation: str = "schur"):
    """Full-batch Adam on the stage-2 NLL.

    The objective is deterministic; ``seed`` is only recorded in the report.
    """
    init = init or EnvelopeHyperParams(1.0, 1.0, 0.1)
    x = init.to_log()
    state = AdamState.zeros(x.size, lr=lr)
    trace = []
    for _ in range(steps):
        nll, grad = stage2_objective(x, y, post, period, modulation)
        trace.append(nll)
        x = adam_update(state, x, grad)
    psi = EnvelopeHyperParams.from_log(x)
    report = FitReport(("length_scale", "variance", "noise_variance"), x, trace, steps, seed)
    return psi, report


@dataclass
class TwoStageFit:
    theta_trained: PeriodicHyperParams
    theta: PeriodicHyperParams
    psi: EnvelopeHyperParams
    r_effective: float
    stage1: FitReport
    stage2: FitReport

    def to_dict(self) -> dict:
        return {
            "theta_trained": self.theta_trained.as_dict(),
            "theta": self.theta.as_dict(),
            "psi": self.psi.as_dict(),
            "r_effective": self.r_effective,
            "stage1": self.stage1.to_dict(),
            "stage2": self.stage2.to_dict(),
        }


def fit_two_stage(rs: RepetitionSet, batch_size: int, steps: int = 100, lr: float = 0.1, seed: int = 0,
                  r_effective: float | None = None, modulation: str = "schur") -> TwoStageFit:
    """Stage-1 fit, noise rescaling, stage-1 posterior at the inputs, stage-2 fit."""
    theta_raw, rep1 = stage1_fit(rs, batch_size, steps, lr, seed)
    r_eff = rs.r if r_effective is None else r_effective
    theta = rescale_noise(theta_raw, r_eff)
    T, y = rs.times(), rs.values(0)
    post = stage1_posterior_at_inputs(T, y, theta)
    psi, rep2 = stage2_fit(y, post, steps, lr, seed, period=rs.period, modulation=modulation)
    return TwoStageFit(theta_raw, theta, psi, r_eff, rep1, rep2)
