"""Posterior-weighted Gaussian-process generator for approximately periodic time series.

The stage-1 posterior of a periodic kernel fixes the shape of one repetition;
a decaying envelope kernel, applied elementwise to that posterior covariance,
lets repetitions drift apart without shifting their phase.
"""

__version__ = "0.1.0"

from .dataset import RepetitionSet, SynthConfig, read_dataset, synth_dataset, write_dataset
from .generator import GammaModel, build_gamma, log_likelihood, sample_trajectories
from .gp import posterior
from .kernels import EnvelopeHyperParams, PeriodicHyperParams
from .training import fit_two_stage

__all__ = [
    "__version__",
    "RepetitionSet",
    "SynthConfig",
    "read_dataset",
    "synth_dataset",
    "write_dataset",
    "GammaModel",
    "build_gamma",
    "log_likelihood",
    "sample_trajectories",
    "posterior",
    "EnvelopeHyperParams",
    "PeriodicHyperParams",
    "fit_two_stage",
]
