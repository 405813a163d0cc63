"""Desk-scale reruns of the batch-size, output-noise and periodic-data studies.

Every runner returns an :class:`ExperimentResult` holding one dict per table
row plus equal-length plot columns.  Datasets come from the master seed; the
fit for row ``i`` uses ``seed + i``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import SynthConfig, SynthResult, dense_grid, synth_dataset
from .generator import build_gamma, sample_trajectories
from .gp import naive_weighted_posterior, posterior
from .kernels import PeriodicKernel
from .multioutput import fit_and_sample_2d
from .training import TwoStageFit, fit_two_stage

__all__ = [
    "BATCH_SIZES",
    "OUTPUT_NOISES",
    "EXPERIMENTS",
    "ExperimentResult",
    "score_fit",
    "table1",
    "table2",
    "table3",
    "fig2",
    "fig4",
    "experiment2d",
    "run_experiment",
]

BATCH_SIZES = (1, 2, 3, 5, 10)
OUTPUT_NOISES = (0.01, 0.05, 0.1, 0.3, 0.5)


@dataclass
class ExperimentResult:
    name: str
    rows: list
    columns: tuple
    plot: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)


def score_fit(synth: SynthResult, fit: TwoStageFit) -> tuple:
    """MSE between test and generated means, and between pointwise std devs.

    The generative model is built on the dense grid used for the test
    distribution.
    """
    cfg_R = synth.train.r
    per_rep = synth.dense_grid.size // cfg_R
    g = build_gamma(synth.train, fit.theta, fit.psi, cfg_R, per_rep)
    mse_mean = float(np.mean((g.mean - synth.test_mean) ** 2))
    mse_std = float(np.mean((g.std - synth.test_std) ** 2))
    return mse_mean, mse_std


def _fit_row(key: str, value, synth: SynthResult, batch_size: int, steps: int, lr: float, seed: int) -> dict:
    fit = fit_two_stage(synth.train, batch_size, steps, lr, seed)
    mse_mean, mse_std = score_fit(synth, fit)
    th, psi = fit.theta_trained, fit.psi
    return {
        key: value,
        "seed": seed,
        "mse_mean": mse_mean,
        "mse_std": mse_std,
        "theta_length_scale": th.length_scale,
        "theta_signal_variance": th.signal_variance,
        "theta_noise_variance": th.noise_variance,
        "theta_noise_rescaled": fit.theta.noise_variance,
        "psi_length_scale": psi.length_scale,
        "psi_variance": psi.variance,
        "psi_noise_variance": psi.noise_variance,
    }


_FIT_COLUMNS = (
    "seed", "mse_mean", "mse_std", "theta_length_scale", "theta_signal_variance", "theta_noise_variance",
    "theta_noise_rescaled", "psi_length_scale", "psi_variance", "psi_noise_variance",
)


def _batch_table(name: str, cfg: SynthConfig, seed: int, steps: int, lr: float, batch_sizes) -> ExperimentResult:
    synth = synth_dataset(cfg)
    rows = [_fit_row("batch_size", b, synth, b, steps, lr, seed + i) for i, b in enumerate(batch_sizes)]
    config = {"synth": asdict(cfg), "seed": seed, "steps": steps, "lr": lr}
    return ExperimentResult(name, rows, ("batch_size",) + _FIT_COLUMNS, config=config)


def table1(seed: int = 0, steps: int = 100, lr: float = 0.1, batch_sizes=BATCH_SIZES) -> ExperimentResult:
    """Approximately periodic data, varying the stage-1 batch size."""
    return _batch_table("table1", SynthConfig(seed=seed), seed, steps, lr, batch_sizes)


def table3(seed: int = 0, steps: int = 100, lr: float = 0.1, batch_sizes=BATCH_SIZES) -> ExperimentResult:
    """Noiseless strictly periodic data, varying the stage-1 batch size."""
    return _batch_table("table3", SynthConfig(seed=seed, prior="periodic"), seed, steps, lr, batch_sizes)


def table2(seed: int = 0, steps: int = 100, lr: float = 0.1, noises=OUTPUT_NOISES,
           batch_size: int = 2) -> ExperimentResult:
    """Approximately periodic data with added output noise; batch size fixed."""
    rows = []
    for i, s2 in enumerate(noises):
        synth = synth_dataset(SynthConfig(seed=seed, output_noise=s2))
        rows.append(_fit_row("output_noise", s2, synth, batch_size, steps, lr, seed + i))
    config = {"synth": asdict(SynthConfig(seed=seed)), "output_noises": list(noises), "batch_size": batch_size,
              "seed": seed, "steps": steps, "lr": lr}
    return ExperimentResult("table2", rows, ("output_noise",) + _FIT_COLUMNS, config=config)


def fig2(seed: int = 0, steps: int = 100, lr: float = 0.1, batch_size: int = 2,
         horizon: int = 3, samples_per_rep: int = 50) -> ExperimentResult:
    """Naive weighted-prior posterior versus the periodic posterior beyond the data.

    The evaluation grid covers ``horizon`` times the observed span.
    """
    synth = synth_dataset(SynthConfig(seed=seed))
    fit = fit_two_stage(synth.train, batch_size, steps, lr, seed)
    T, y = synth.train.times(), synth.train.values(0)
    grid = dense_grid(horizon * synth.train.r, samples_per_rep)
    naive = naive_weighted_posterior(T, y, fit.theta, fit.psi, grid)
    periodic = posterior(T, y, PeriodicKernel(fit.theta), fit.theta.noise_variance, grid)
    plot = {
        "t": grid,
        "naive_mean": naive.mean,
        "naive_variance": naive.variance,
        "periodic_mean": periodic.mean,
        "periodic_variance": periodic.variance,
    }
    row = {"prior_variance": fit.psi.variance * fit.theta.signal_variance,
           "max_abs_y": float(np.max(np.abs(y))),
           "naive_mean_tail_absmax": float(np.max(np.abs(naive.mean[-samples_per_rep:]))),
           "naive_variance_tail_mean": float(np.mean(naive.variance[-samples_per_rep:]))}
    config = {"seed": seed, "steps": steps, "lr": lr, "batch_size": batch_size, "horizon": horizon,
              "fit": fit.to_dict()}
    return ExperimentResult("fig2", [row], tuple(row), plot, config)


def fig4(seed: int = 0, steps: int = 100, lr: float = 0.1, batch_size: int = 2, count: int = 3,
         samples_per_rep: int = 100) -> ExperimentResult:
    """Test distribution against samples from the fitted generative model."""
    synth = synth_dataset(SynthConfig(seed=seed, dense_grid_per_rep=samples_per_rep))
    fit = fit_two_stage(synth.train, batch_size, steps, lr, seed)
    g = build_gamma(synth.train, fit.theta, fit.psi, synth.train.r, samples_per_rep)
    draws = sample_trajectories(g, count, seed=seed)
    plot = {"t": g.grid, "test_mean": synth.test_mean, "test_std": synth.test_std,
            "gamma_mean": g.mean, "gamma_std": g.std}
    for k, d in enumerate(draws, start=1):
        plot[f"sample_{k}"] = d
    mse_mean, mse_std = score_fit(synth, fit)
    row = {"mse_mean": mse_mean, "mse_std": mse_std}
    config = {"seed": seed, "steps": steps, "lr": lr, "batch_size": batch_size, "count": count,
              "fit": fit.to_dict()}
    return ExperimentResult("fig4", [row], tuple(row), plot, config)


def experiment2d(seed: int = 0, steps: int = 100, lr: float = 0.1, batch_size: int = 2, count: int = 3,
                 samples_per_rep: int = 50) -> ExperimentResult:
    """Two-channel LMC fit on ``[sin 2 pi t, -sin 4 pi t]`` and joint sampling."""
    synth = synth_dataset(SynthConfig(seed=seed, base_signal="sin2d"))
    res = fit_and_sample_2d(synth.train, batch_size, steps, lr, seed, samples_per_rep=samples_per_rep,
                            count=count)
    info = res.to_dict()
    n = res.gamma.repetitions * samples_per_rep
    plot = {"t": res.gamma.grid[:n]}
    for c in range(res.params.D):
        plot[f"gamma_mean_{c + 1}"] = res.channel(res.gamma.mean, c)
        plot[f"gamma_std_{c + 1}"] = res.channel(res.gamma.std, c)
        for k, d in enumerate(res.samples, start=1):
            plot[f"sample_{k}_{c + 1}"] = res.channel(d, c)
    row = {
        "coregionalization_correlation": info["coregionalization_correlation"][0][1],
        "psi_length_scale": res.psi.length_scale,
        "psi_variance": res.psi.variance,
        "psi_noise_variance": res.psi.noise_variance,
    }
    config = {"seed": seed, "steps": steps, "lr": lr, "batch_size": batch_size, "count": count, "fit": info}
    return ExperimentResult("experiment2d", [row], tuple(row), plot, config)


EXPERIMENTS = {
    "table1": table1,
    "table2": table2,
    "table3": table3,
    "fig2": fig2,
    "fig4": fig4,
    "experiment2d": experiment2d,
}


def run_experiment(name: str, seed: int = 0, steps: int = 100, lr: float = 0.1) -> ExperimentResult:
    try:
        fn = EXPERIMENTS[name]
    except KeyError:
        raise ValueError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}") from None
    return fn(seed=seed, steps=steps, lr=lr)
