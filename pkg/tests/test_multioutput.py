import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from apgen.dataset import SynthConfig, synth_dataset
from apgen.errors import DimensionMismatch, GridTooLarge
from apgen.kernels import PeriodicHyperParams, PeriodicKernel, gram, periodic_kernel
from apgen.multioutput import (
    CoregionalizationParams,
    build_lmc_gamma,
    fit_and_sample_2d,
    lmc_gram,
    lmc_nll,
    lmc_objective,
    lmc_stage1_fit,
)
from apgen.numerics import finite_diff_grad, min_eigenvalue


def _params(rng, D, Q):
    lats = tuple(PeriodicHyperParams(rng.uniform(0.4, 1.5), 1.0, 0.0) for _ in range(Q))
    return CoregionalizationParams(rng.standard_normal((D, Q)), lats, rng.uniform(0.05, 0.5, D))


@pytest.fixture(scope="module")
def synth2d():
    return synth_dataset(SynthConfig(seed=0, base_signal="sin2d"))


@pytest.fixture(scope="module")
def result2d(synth2d):
    return fit_and_sample_2d(synth2d.train, count=3)


def test_params_validation():
    lat = (PeriodicHyperParams(),)
    with pytest.raises(DimensionMismatch):
        CoregionalizationParams(np.ones((2, 2)), lat, np.ones(2))
    with pytest.raises(DimensionMismatch):
        CoregionalizationParams(np.ones((2, 1)), lat, np.ones(3))


def test_univariate_reduction_bit_exact():
    th = PeriodicHyperParams(0.7, 1.0, 0.0)
    T = np.linspace(0, 3, 17)
    p = CoregionalizationParams(np.array([[1.0]]), (th,), np.array([0.1]))
    assert np.array_equal(lmc_gram(p, T), gram(PeriodicKernel(th), T))


def test_identity_mixing_is_block_diagonal():
    lats = (PeriodicHyperParams(0.5, 1.0, 0.0), PeriodicHyperParams(1.2, 1.0, 0.0))
    p = CoregionalizationParams(np.eye(2), lats, np.ones(2))
    T = np.linspace(0, 1, 6)
    G = lmc_gram(p, T)
    assert np.array_equal(G[:6, 6:], np.zeros((6, 6)))
    assert np.array_equal(G[:6, :6], gram(PeriodicKernel(lats[0]), T))
    assert np.array_equal(G[6:, 6:], gram(PeriodicKernel(lats[1]), T))


@pytest.mark.parametrize("seed", range(5))
def test_gram_matches_elementwise_formula(seed):
    rng = np.random.default_rng(seed)
    D, Q = 2, 3
    p = _params(rng, D, Q)
    T = rng.uniform(0, 2, 5)
    G = lmc_gram(p, T)
    n = T.size
    for i in range(D):
        for j in range(D):
            for a in range(n):
                for b in range(n):
                    ref = sum(p.mixing[i, q] * p.mixing[j, q] * periodic_kernel(T[a], T[b], p.latents[q])
                              for q in range(Q))
                    assert abs(G[i * n + a, j * n + b] - ref) <= 1e-12


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 100))
def test_lmc_gram_psd(seed, n):
    rng = np.random.default_rng(seed)
    p = _params(rng, 2, 2)
    G = lmc_gram(p, np.sort(rng.uniform(0, 5, n)))
    assert np.max(np.abs(G - G.T)) <= 1e-12
    assert min_eigenvalue(G) >= -1e-8 * max(1.0, np.max(np.abs(G)))
    C = p.coregionalization()
    assert min_eigenvalue(C) >= -1e-8


@pytest.mark.parametrize("seed", range(5))
def test_lmc_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    tmpl = CoregionalizationParams.default(2)
    x = tmpl.to_vector() + rng.normal(0, 0.3, tmpl.to_vector().size)
    T = np.sort(rng.uniform(0, 2, 8))
    Y = rng.standard_normal((8, 2))
    nll, g = lmc_objective(x, tmpl, T, Y)
    fd = finite_diff_grad(lambda v: lmc_objective(v, tmpl, T, Y)[0], x)
    assert np.max(np.abs(g - fd) / np.maximum(1.0, np.abs(fd))) <= 1e-4
    assert nll == pytest.approx(lmc_nll(tmpl.from_vector(x), T, Y), rel=1e-12)


def test_vector_roundtrip():
    p = _params(np.random.default_rng(1), 2, 2)
    q = p.from_vector(p.to_vector())
    assert np.allclose(q.mixing, p.mixing) and np.allclose(q.noise, p.noise)


def test_stage1_report_keeps_mixing_linear(synth2d):
    params, rep = lmc_stage1_fit(synth2d.train, 2, steps=5)
    assert rep.final_params["mixing_01"] == pytest.approx(params.mixing[0, 1])
    assert rep.final_params["noise_1"] == pytest.approx(params.noise[1])


def test_2d_mean_phase_aligned(result2d):
    g = result2d.gamma
    for c in range(2):
        m = result2d.channel(g.mean, c).reshape(g.repetitions, g.samples_per_rep)
        assert np.max(np.abs(m - m[0])) <= 1e-8


def test_2d_samples_vary_across_repetitions(result2d):
    g = result2d.gamma
    for c in range(2):
        for s in result2d.samples:
            reps = result2d.channel(s, c).reshape(g.repetitions, g.samples_per_rep)
            assert np.all(np.max(np.abs(np.diff(reps, axis=0)), axis=1) > 0)


def test_2d_result_serializable(result2d):
    d = result2d.to_dict()
    assert len(d["coregionalization"]) == 2
    assert d["min_eigenvalue_coregionalization"] >= -1e-8
    assert result2d.samples.shape == (3, 2 * result2d.gamma.repetitions * 50)


def test_2d_grid_cap(synth2d, result2d):
    with pytest.raises(GridTooLarge):
        build_lmc_gamma(synth2d.train, result2d.params, result2d.psi, 20, 60)


@pytest.mark.slow
def test_independent_channels_weakly_coupled():
    # ten repetitions leave a sampling correlation near 0.3 between two independent
    # smooth channels, so this check uses thirty
    for seed in range(3):
        s = synth_dataset(SynthConfig(seed=seed, base_signal="sin2d", n_repetitions=30))
        params, _ = lmc_stage1_fit(s.train, 5, seed=seed)
        C = params.coregionalization()
        assert abs(C[0, 1]) / np.sqrt(C[0, 0] * C[1, 1]) <= 0.3
