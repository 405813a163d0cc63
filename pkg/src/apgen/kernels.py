"""Covariance functions.

Four kernels are provided:

* :class:`PeriodicKernel` -- exponentiated sine-squared kernel, exactly
  ``p``-periodic in the lag.
* :class:`EnvelopeKernel` -- a squared-exponential kernel evaluated in the
  phase-embedded time :func:`phase_embedding`, whose derivative vanishes at
  every multiple of the period.  Paired with the periodic kernel it damps
  correlation between distant repetitions without moving the periodic maxima.
* :class:`WeightedKernel` -- the pointwise product of the two above.
* :class:`SquaredExponentialKernel` -- plain SE in raw time, for comparison.

All kernels broadcast over array inputs, so ``kernel(T[:, None], T[None, :])``
is a Gram matrix.  Hyperparameters live in frozen dataclasses and are
optimized as logarithms.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "PeriodicHyperParams",
    "EnvelopeHyperParams",
    "periodic_kernel",
    "phase_embedding",
    "phase_embedding_derivative",
    "envelope_kernel",
    "weighted_kernel",
    "squared_exponential_kernel",
    "PeriodicKernel",
    "EnvelopeKernel",
    "WeightedKernel",
    "SquaredExponentialKernel",
    "gram",
    "kernel_grads",
]


def _log(v: float) -> float:
    return float(np.log(v)) if v > 0 else -np.inf


@dataclass(frozen=True)
class PeriodicHyperParams:
    """Periodic kernel parameters plus the observation noise of stage 1.

    The period is fixed (normalized time has ``period == 1``) and is not part
    of the log-parameter vector.
    """

    length_scale: float = 1.0
    signal_variance: float = 1.0
    noise_variance: float = 0.1
    period: float = 1.0

    def __post_init__(self):
        if not self.length_scale > 0:
            raise ValueError("length_scale must be positive")
        if not self.signal_variance > 0:
            raise ValueError("signal_variance must be positive")
        if not self.noise_variance >= 0:
            raise ValueError("noise_variance must be nonnegative")
        if not self.period > 0:
            raise ValueError("period must be positive")

    def to_log(self) -> np.ndarray:
        return np.array(
            [_log(self.length_scale), _log(self.signal_variance), _log(self.noise_variance)]
        )

    @classmethod
    def from_log(cls, v, period: float = 1.0) -> "PeriodicHyperParams":
        v = np.asarray(v, dtype=float)
        return cls(float(np.exp(v[0])), float(np.exp(v[1])), float(np.exp(v[2])), period)

    def with_noise(self, noise_variance: float) -> "PeriodicHyperParams":
        return replace(self, noise_variance=float(noise_variance))

    def as_dict(self) -> dict:
        return {
            "length_scale": self.length_scale,
            "signal_variance": self.signal_variance,
            "noise_variance": self.noise_variance,
            "period": self.period,
        }


@dataclass(frozen=True)
class EnvelopeHyperParams:
    """Envelope length scale, envelope variance and output noise of stage 2."""

    length_scale: float = 1.0
    variance: float = 1.0
    noise_variance: float = 0.1

    def __post_init__(self):
        if not self.length_scale > 0:
            raise ValueError("length_scale must be positive")
        if not self.variance > 0:
            raise ValueError("variance must be positive")
        if not self.noise_variance >= 0:
            raise ValueError("noise_variance must be nonnegative")

    def to_log(self) -> np.ndarray:
        return np.array(
            [_log(self.length_scale), _log(self.variance), _log(self.noise_variance)]
        )

    @classmethod
    def from_log(cls, v) -> "EnvelopeHyperParams":
        v = np.asarray(v, dtype=float)
        return cls(float(np.exp(v[0])), float(np.exp(v[1])), float(np.exp(v[2])))

    def with_noise(self, noise_variance: float) -> "EnvelopeHyperParams":
        return replace(self, noise_variance=float(noise_variance))

    def as_dict(self) -> dict:
        return {
            "length_scale": self.length_scale,
            "variance": self.variance,
            "noise_variance": self.noise_variance,
        }


def _reduced_phase(x):
    # x minus the nearest integer; sin(pi x)^2 and sin(2 pi x) are unchanged
    # and vanish exactly at integers
    x = np.asarray(x, dtype=float)
    return x - np.round(x)


def periodic_kernel(t, t_prime, params: PeriodicHyperParams):
    """``sf2 * exp(-2 sin^2(pi (t - t') / p) / l^2)``.

    Uses the negative exponent; with a positive one the off-diagonal entries
    would exceed the diagonal and the Gram matrix would not be PSD.
    """
    s = np.sin(np.pi * _reduced_phase((np.asarray(t) - np.asarray(t_prime)) / params.period))
    return params.signal_variance * np.exp(-2.0 * s * s / params.length_scale**2)


def phase_embedding(t, period: float = 1.0):
    """Closed-form ``int_0^t sin^2(pi tau / p) dtau``."""
    t = np.asarray(t, dtype=float)
    return 0.5 * t - period / (4.0 * np.pi) * np.sin(2.0 * np.pi * _reduced_phase(t / period))


def phase_embedding_derivative(t, period: float = 1.0):
    s = np.sin(np.pi * _reduced_phase(np.asarray(t, dtype=float) / period))
    return s * s


def envelope_kernel(t, t_prime, params: EnvelopeHyperParams, period: float = 1.0):
    d = phase_embedding(t, period) - phase_embedding(t_prime, period)
    return params.variance * np.exp(-0.5 * d * d / params.length_scale**2)


def weighted_kernel(t, t_prime, theta: PeriodicHyperParams, psi: EnvelopeHyperParams):
    return envelope_kernel(t, t_prime, psi, theta.period) * periodic_kernel(t, t_prime, theta)


def squared_exponential_kernel(t, t_prime, length_scale: float = 1.0, variance: float = 1.0):
    d = np.asarray(t) - np.asarray(t_prime)
    return variance * np.exp(-0.5 * d * d / length_scale**2)


class PeriodicKernel:
    """Periodic kernel with gradients in ``(log l, log sf2)``."""

    param_names = ("log_length_scale", "log_signal_variance")

    def __init__(self, params: PeriodicHyperParams):
        self.params = params

    def __call__(self, t, t_prime):
        return periodic_kernel(t, t_prime, self.params)

    def diag(self, t):
        return np.full(np.shape(t), self.params.signal_variance, dtype=float)

    def grads(self, t, t_prime):
        p = self.params
        s = np.sin(np.pi * _reduced_phase((np.asarray(t) - np.asarray(t_prime)) / p.period))
        s2 = s * s
        k = p.signal_variance * np.exp(-2.0 * s2 / p.length_scale**2)
        return [k * (4.0 * s2 / p.length_scale**2), k]


class EnvelopeKernel:
    """Phase-embedded SE envelope with gradients in ``(log l_psi, log var)``."""

    param_names = ("log_length_scale", "log_variance")

    def __init__(self, params: EnvelopeHyperParams, period: float = 1.0):
        self.params = params
        self.period = period

    def __call__(self, t, t_prime):
        return envelope_kernel(t, t_prime, self.params, self.period)

    def diag(self, t):
        return np.full(np.shape(t), self.params.variance, dtype=float)

    def grads(self, t, t_prime):
        p = self.params
        d = phase_embedding(t, self.period) - phase_embedding(t_prime, self.period)
        d2 = d * d / p.length_scale**2
        w = p.variance * np.exp(-0.5 * d2)
        return [w * d2, w]


class WeightedKernel:
    """Product ``envelope * periodic``; gradients ordered periodic first."""

    param_names = PeriodicKernel.param_names + ("log_envelope_length_scale", "log_envelope_variance")

    def __init__(self, theta: PeriodicHyperParams, psi: EnvelopeHyperParams):
        self.periodic = PeriodicKernel(theta)
        self.envelope = EnvelopeKernel(psi, theta.period)

    def __call__(self, t, t_prime):
        return self.envelope(t, t_prime) * self.periodic(t, t_prime)

    def diag(self, t):
        return self.envelope.diag(t) * self.periodic.diag(t)

    def grads(self, t, t_prime):
        k = self.periodic(t, t_prime)
        w = self.envelope(t, t_prime)
        return [dk * w for dk in self.periodic.grads(t, t_prime)] + [
            dw * k for dw in self.envelope.grads(t, t_prime)
        ]


class SquaredExponentialKernel:
    param_names = ("log_length_scale", "log_variance")

    def __init__(self, length_scale: float = 1.0, variance: float = 1.0):
        self.length_scale = length_scale
        self.variance = variance

    def __call__(self, t, t_prime):
        return squared_exponential_kernel(t, t_prime, self.length_scale, self.variance)

    def diag(self, t):
        return np.full(np.shape(t), self.variance, dtype=float)

    def grads(self, t, t_prime):
        d = np.asarray(t) - np.asarray(t_prime)
        d2 = d * d / self.length_scale**2
        k = self.variance * np.exp(-0.5 * d2)
        return [k * d2, k]


def gram(kernel, T, T_prime=None) -> np.ndarray:
    """Matrix of pairwise kernel values ``kernel(T[i], T_prime[j])``."""
    T = np.atleast_1d(np.asarray(T, dtype=float))
    Tp = T if T_prime is None else np.atleast_1d(np.asarray(T_prime, dtype=float))
    return np.asarray(kernel(T[:, None], Tp[None, :]), dtype=float)


def kernel_grads(kernel, T) -> list[np.ndarray]:
    """Derivatives of the noiseless Gram matrix on ``T`` w.r.t. each log-parameter.

    Observation noise is not a kernel parameter; its derivative ``s2 * I``
    is added by the objectives in :mod:`apgen.training`.
    """
    T = np.atleast_1d(np.asarray(T, dtype=float))
    return [np.asarray(g, dtype=float) for g in kernel.grads(T[:, None], T[None, :])]
