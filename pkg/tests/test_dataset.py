import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from apgen.dataset import (
    Repetition,
    RepetitionSet,
    SynthConfig,
    check_approximate_periodicity,
    dense_grid,
    normalize_repetitions,
    read_dataset,
    synth_dataset,
    write_dataset,
)
from apgen.errors import ConfigInvalid, EmptySegment, FormatError, NonMonotoneTime, TooFewRepetitions


def test_repetition_validation():
    with pytest.raises(EmptySegment):
        Repetition(np.array([]), np.array([]))
    with pytest.raises(NonMonotoneTime):
        Repetition(np.array([0.0, 0.0]), np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        Repetition(np.array([0.0, 1.0]), np.array([1.0]))


def test_normalize_single_segment_halves_times():
    rs = normalize_repetitions([(np.array([0.0, 1.0, 2.0]), np.array([3.0, 4.0, 5.0]))])
    assert np.array_equal(rs[0].t, [0.0, 0.5, 1.0])
    assert np.array_equal(rs[0].y[:, 0], [3.0, 4.0, 5.0])


def test_normalize_two_segments_get_unit_slots():
    segs = [(np.linspace(0, 1, 5), np.zeros(5)), (np.linspace(1, 4, 7), np.ones(7))]
    rs = normalize_repetitions(segs)
    assert rs[0].t[0] == 0.0 and rs[0].t[-1] == 1.0
    assert rs[1].t[0] == 1.0 and rs[1].t[-1] == 2.0


def test_normalize_with_boundaries():
    rs = normalize_repetitions([(np.array([0.5, 1.5]), np.zeros(2))], boundaries=[0.0, 2.0])
    assert np.array_equal(rs[0].t, [0.25, 0.75])


def test_normalize_errors():
    with pytest.raises(EmptySegment):
        normalize_repetitions([(np.array([]), np.array([]))])
    with pytest.raises(NonMonotoneTime):
        normalize_repetitions([(np.array([1.0, 0.5]), np.zeros(2))])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(-50, 50), st.floats(0.1, 20), st.integers(2, 12)), min_size=1, max_size=6))
def test_normalize_idempotent(specs):
    segs = [(np.linspace(a, a + d, n), np.arange(n, dtype=float)) for a, d, n in specs]
    once = normalize_repetitions(segs)
    twice = normalize_repetitions([(rep.t, rep.y) for rep in once])
    for a, b in zip(once, twice):
        assert np.max(np.abs(a.t - b.t)) <= 1e-15 * max(1.0, len(specs))
        assert np.array_equal(a.y, b.y)


def _set(curves):
    t = np.linspace(0, 1, 11)
    return RepetitionSet(tuple(Repetition(t + i, c(t)) for i, c in enumerate(curves)))


def test_periodicity_identical_and_offset():
    rep = lambda t: np.sin(2 * np.pi * t)
    rep_offset = lambda t: np.sin(2 * np.pi * t) + 0.3
    r = check_approximate_periodicity(_set([rep, rep, rep]), 1e-9)
    # phases are recovered as (t + i) - i, exact only up to rounding
    assert r.max_distance <= 1e-12 and r.passed
    r = check_approximate_periodicity(_set([rep, rep_offset]), 0.2)
    assert r.max_distance == pytest.approx(0.3, abs=1e-12)
    assert not r.passed


def test_periodicity_needs_two():
    with pytest.raises(TooFewRepetitions):
        check_approximate_periodicity(_set([np.cos]), 1.0)


def test_periodicity_on_synthetic(default_synth):
    r = check_approximate_periodicity(default_synth.train, 10.0)
    assert 0 < r.max_distance < np.inf
    assert r.passed == (r.max_distance <= 10.0)


def test_dense_grid_layout():
    g = dense_grid(3, 4)
    assert g.size == 12
    assert np.allclose(g[:5], [0, 0.25, 0.5, 0.75, 1.0])
    assert g[-1] < 3.0


def test_synth_defaults_shape(default_synth):
    s = default_synth
    assert s.train.r == 10
    assert all(len(rep) == 20 for rep in s.train)
    assert s.dense_grid.size == 1000
    assert s.test_cov.shape == (1000, 1000)
    assert s.train.metadata["seed"] == 0
    flat = s.train_indices.reshape(-1)
    assert np.array_equal(s.train.times(), s.dense_grid[flat])
    assert np.array_equal(s.train.values(), s.test_draw[flat])


def test_synth_deterministic():
    a = synth_dataset(SynthConfig(seed=3))
    b = synth_dataset(SynthConfig(seed=3))
    assert np.array_equal(a.test_draw, b.test_draw)
    assert np.array_equal(a.train.times(), b.train.times())


def test_synth_noiseless_draw_is_latent_sample():
    a = synth_dataset(SynthConfig(seed=5))
    b = synth_dataset(SynthConfig(seed=5, output_noise=0.1))
    diff = b.test_draw - a.test_draw
    assert np.var(diff) == pytest.approx(0.1, rel=0.15)
    assert np.array_equal(a.test_mean, b.test_mean)


def test_synth_consecutive_repetitions_differ(default_synth):
    d = default_synth.test_draw.reshape(10, 100)
    assert np.all(np.max(np.abs(np.diff(d, axis=0)), axis=1) > 0)


def test_synth_strictly_periodic_limit():
    s = synth_dataset(SynthConfig(seed=1, gen_noise=0.0, gen_l_w=1e12))
    m = s.test_mean.reshape(10, 100)
    assert np.max(np.abs(m - m[0])) <= 1e-6


def test_synth_two_channels():
    s = synth_dataset(SynthConfig(seed=0, base_signal="sin2d"))
    assert s.train.dim == 2
    assert s.test_mean.shape == (1000, 2)
    assert s.test_cov.shape == (2, 1000, 1000)


@pytest.mark.parametrize("kw", [dict(n_repetitions=0), dict(points_per_rep=101), dict(gen_l_k=0.0),
                                dict(output_noise=-1.0), dict(base_signal="cos"), dict(prior="other")])
def test_synth_config_invalid(kw):
    with pytest.raises(ConfigInvalid):
        SynthConfig(**kw).validate()


def test_roundtrip_bit_exact(tmp_path, default_synth):
    path = tmp_path / "train.csv"
    write_dataset(default_synth.train, path)
    back = read_dataset(path)
    assert back.r == default_synth.train.r
    for a, b in zip(default_synth.train, back):
        assert np.array_equal(a.t, b.t)
        assert np.array_equal(a.y, b.y)
    meta = json.loads(path.with_suffix(".json").read_text())
    assert meta["seed"] == 0 and meta["r"] == 10 and meta["D"] == 1 and meta["period"] == 1.0


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1e300, 1e300, allow_nan=False, allow_infinity=False), min_size=1, max_size=20))
def test_roundtrip_arbitrary_floats(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("rt") / "d.csv"
    y = np.array(values)
    rs = RepetitionSet((Repetition(np.arange(len(y)) / len(y), y),))
    write_dataset(rs, path)
    assert np.array_equal(read_dataset(path)[0].y[:, 0], y)


def test_roundtrip_two_channels(tmp_path):
    s = synth_dataset(SynthConfig(seed=2, base_signal="sin2d", n_repetitions=3))
    write_dataset(s.train, tmp_path / "d.csv")
    back = read_dataset(tmp_path / "d.csv")
    assert back.dim == 2
    assert np.array_equal(back.values(None), s.train.values(None))


@pytest.mark.parametrize("text,fragment", [
    ("", "empty"),
    ("repetition_index,y_1\n0,1\n", "'t'"),
    ("rep,t,y_1\n0,0,1\n", "'repetition_index'"),
    ("repetition_index,t\n0,0\n", "'y_1'"),
    ("repetition_index,t,y_1\n0,0,abc\n", "non-numeric"),
    ("repetition_index,t,y_1\n0,0\n", "fields"),
    ("repetition_index,t,y_1\n1,0,1\n0,0.5,2\n", "repetition indices"),
])
def test_read_format_errors(tmp_path, text, fragment):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(FormatError) as exc:
        read_dataset(p)
    assert fragment in str(exc.value)


def test_format_error_reports_position(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("repetition_index,t,y_1\n0,0,1\n0,0.5,x\n")
    with pytest.raises(FormatError) as exc:
        read_dataset(p)
    assert exc.value.line == 3 and exc.value.column == 3


def test_bad_sidecar(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("repetition_index,t,y_1\n0,0,1\n")
    p.with_suffix(".json").write_text("{not json")
    with pytest.raises(FormatError):
        read_dataset(p)


def test_missing_file(tmp_path):
    with pytest.raises(OSError):
        read_dataset(tmp_path / "nope.csv")
