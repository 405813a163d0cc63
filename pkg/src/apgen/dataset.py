"""Repetition containers, time normalization, synthetic data and file I/O.

A :class:`RepetitionSet` stores ``r`` repetitions placed globally: repetition
``i`` (0-based) occupies ``[i p, (i + 1) p]``.  Values are stored as
``(n_i, D)`` arrays even when ``D == 1``.

On disk a dataset is a CSV file with header ``repetition_index,t,y_1..y_D``
and a JSON sidecar (same stem, ``.json`` suffix) holding period, seed and
generator config.  Floats are written with 17 significant digits so a
round trip is bit-exact.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    ConfigInvalid,
    EmptySegment,
    FormatError,
    NonMonotoneTime,
    TooFewRepetitions,
)
from .gp import posterior
from .kernels import EnvelopeHyperParams, PeriodicHyperParams, PeriodicKernel, WeightedKernel
from .numerics import cholesky_psd, make_rng, sample_mvn

__all__ = [
    "Repetition",
    "RepetitionSet",
    "normalize_repetitions",
    "PeriodicityReport",
    "check_approximate_periodicity",
    "SynthConfig",
    "SynthResult",
    "BASE_SIGNALS",
    "dense_grid",
    "synth_dataset",
    "write_dataset",
    "read_dataset",
    "sidecar_path",
    "format_float",
]


@dataclass(frozen=True)
class Repetition:
    t: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).reshape(-1)
        y = np.asarray(self.y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        if y.shape[0] != t.shape[0]:
            raise ValueError(f"{t.shape[0]} times but {y.shape[0]} values")
        if t.size == 0:
            raise EmptySegment("repetition has no samples")
        if np.any(np.diff(t) <= 0):
            raise NonMonotoneTime("times must be strictly increasing within a repetition")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return self.t.shape[0]


@dataclass(frozen=True)
class RepetitionSet:
    repetitions: tuple
    period: float = 1.0
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        reps = tuple(self.repetitions)
        if len(reps) < 1:
            raise ValueError("need at least one repetition")
        dims = {rep.y.shape[1] for rep in reps}
        if len(dims) != 1:
            raise ValueError(f"inconsistent output dimensions {sorted(dims)}")
        object.__setattr__(self, "repetitions", reps)

    @property
    def r(self) -> int:
        return len(self.repetitions)

    @property
    def dim(self) -> int:
        return self.repetitions[0].y.shape[1]

    def __len__(self):
        return self.r

    def __getitem__(self, i) -> Repetition:
        return self.repetitions[i]

    def subset(self, indices) -> "RepetitionSet":
        return RepetitionSet(tuple(self.repetitions[i] for i in indices), self.period, self.metadata)

    def times(self) -> np.ndarray:
        return np.concatenate([rep.t for rep in self.repetitions])

    def values(self, channel: int | None = 0) -> np.ndarray:
        """Concatenated outputs; ``channel=None`` returns the ``(N, D)`` array."""
        y = np.concatenate([rep.y for rep in self.repetitions], axis=0)
        return y if channel is None else y[:, channel]

    def repetition_index(self) -> np.ndarray:
        return np.concatenate([np.full(len(rep), i) for i, rep in enumerate(self.repetitions)])


def normalize_repetitions(segments: Sequence, boundaries: Sequence | None = None,
                          period: float = 1.0) -> RepetitionSet:
    """Map every segment affinely onto its own period slot ``[i p, (i + 1) p]``.

    Each segment is ``(times, values)``.  By default a segment's interval is
    ``[times[0], times[-1]]``; pass ``boundaries`` (``r + 1`` cut points) when
    the samples do not reach the interval ends.  Only linear time warps are
    supported.
    """
    segments = list(segments)
    if boundaries is not None and len(boundaries) != len(segments) + 1:
        raise ValueError("boundaries must have one more entry than segments")
    reps = []
    for i, (t, y) in enumerate(segments):
        t = np.asarray(t, dtype=float).reshape(-1)
        if t.size == 0:
            raise EmptySegment(f"segment {i} is empty")
        if np.any(np.diff(t) <= 0):
            raise NonMonotoneTime(f"segment {i} times are not strictly increasing")
        if boundaries is None:
            a, b = t[0], t[-1]
        else:
            a, b = float(boundaries[i]), float(boundaries[i + 1])
        if t.size == 1 and boundaries is None:
            u = np.zeros(1)
        else:
            if not b > a:
                raise NonMonotoneTime(f"segment {i} has an empty interval [{a}, {b}]")
            u = (t - a) / (b - a)
        reps.append(Repetition(period * (u + i), y))
    return RepetitionSet(tuple(reps), period)


@dataclass(frozen=True)
class PeriodicityReport:
    max_distance: float
    epsilon: float
    worst_pair: tuple

    @property
    def passed(self) -> bool:
        return self.max_distance <= self.epsilon


def check_approximate_periodicity(rs: RepetitionSet, epsilon: float, grid_size: int = 200) -> PeriodicityReport:
    """Largest pairwise sup-distance between repetitions on a shared phase grid.

    Each repetition is linearly interpolated (constant beyond its first and
    last sample) onto ``grid_size`` phases in ``[0, 1]``.  For ``D > 1`` the
    sup is taken over channels too.
    """
    if rs.r < 2:
        raise TooFewRepetitions("need at least two repetitions")
    phases = np.linspace(0.0, 1.0, grid_size)
    curves = []
    for i, rep in enumerate(rs.repetitions):
        u = rep.t / rs.period - i
        curves.append(np.stack([np.interp(phases, u, rep.y[:, d]) for d in range(rs.dim)], axis=1))
    best, pair = 0.0, (0, 1)
    for i, j in combinations(range(rs.r), 2):
        dist = float(np.max(np.abs(curves[i] - curves[j])))
        if dist > best:
            best, pair = dist, (i, j)
    return PeriodicityReport(best, float(epsilon), pair)


def _sin(t):
    return np.sin(2.0 * np.pi * t)


def _neg_sin2(t):
    return -np.sin(4.0 * np.pi * t)


BASE_SIGNALS = {
    "sin": (_sin,),
    "sin2d": (_sin, _neg_sin2),
}


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the synthetic test-data generator.

    ``gen_noise`` is the observation noise of the conditioning step,
    ``output_noise`` the white noise added to the test draw.  With
    ``prior="periodic"`` the envelope is dropped and the data are exactly
    periodic.
    """

    n_repetitions: int = 10
    points_per_rep: int = 20
    base_signal: str = "sin"
    gen_l_k: float = 0.7
    gen_l_w: float = 0.8
    gen_noise: float = 1.5
    output_noise: float = 0.0
    seed: int = 0
    dense_grid_per_rep: int = 100
    prior: str = "weighted"
    condition_points_per_rep: int = 12
    condition_span: str = "all"

    def validate(self) -> None:
        if self.n_repetitions < 1 or self.points_per_rep < 1 or self.dense_grid_per_rep < 1:
            raise ConfigInvalid("repetition and grid counts must be positive")
        if self.points_per_rep > self.dense_grid_per_rep:
            raise ConfigInvalid("points_per_rep cannot exceed dense_grid_per_rep")
        if self.condition_points_per_rep < 1:
            raise ConfigInvalid("condition_points_per_rep must be positive")
        if self.base_signal not in BASE_SIGNALS:
            raise ConfigInvalid(f"unknown base_signal {self.base_signal!r}")
        if self.prior not in ("weighted", "periodic"):
            raise ConfigInvalid(f"unknown prior {self.prior!r}")
        if self.condition_span not in ("all", "first"):
            raise ConfigInvalid(f"unknown condition_span {self.condition_span!r}")
        if not (self.gen_l_k > 0 and self.gen_l_w > 0):
            raise ConfigInvalid("generator length scales must be positive")
        if self.gen_noise < 0 or self.output_noise < 0:
            raise ConfigInvalid("noise variances must be nonnegative")
        if self.seed < 0:
            raise ConfigInvalid("seed must be a nonnegative integer")


@dataclass(frozen=True)
class SynthResult:
    """Generator output.

    For ``D == 1`` the test arrays are 1-D (mean, draw) and 2-D (cov); for
    ``D > 1`` a trailing channel axis is added to mean/draw and a leading one
    to cov.  Channels are generated independently.
    """

    train: RepetitionSet
    test_mean: np.ndarray
    test_cov: np.ndarray
    test_draw: np.ndarray
    dense_grid: np.ndarray
    train_indices: np.ndarray

    @property
    def test_std(self) -> np.ndarray:
        var = np.diagonal(self.test_cov, axis1=-2, axis2=-1)
        return np.sqrt(np.clip(var, 0.0, None)).T if var.ndim > 1 else np.sqrt(np.clip(var, 0.0, None))


def dense_grid(n_repetitions: int, per_rep: int, period: float = 1.0) -> np.ndarray:
    """Phase-aligned grid: ``per_rep`` points per period, right endpoint excluded."""
    i, j = np.meshgrid(np.arange(n_repetitions), np.arange(per_rep), indexing="ij")
    return (period * (i + j / per_rep)).reshape(-1)


def synth_dataset(cfg: SynthConfig) -> SynthResult:
    """Sample approximately periodic test data and pick random training points.

    The latent test trajectory is a draw from the posterior of the generator
    prior conditioned on the base signal; with ``condition_span="all"`` the
    signal is observed ``condition_points_per_rep`` times in every period,
    with ``"first"`` only in the first one.
    """
    cfg.validate()
    theta = PeriodicHyperParams(cfg.gen_l_k, 1.0, cfg.gen_noise)
    if cfg.prior == "weighted":
        kernel = WeightedKernel(theta, EnvelopeHyperParams(cfg.gen_l_w, 1.0, 0.0))
    else:
        kernel = PeriodicKernel(theta)

    R, m = cfg.n_repetitions, cfg.dense_grid_per_rep
    grid = dense_grid(R, m)
    c_reps = R if cfg.condition_span == "all" else 1
    t_cond = dense_grid(c_reps, cfg.condition_points_per_rep)

    rng = make_rng(cfg.seed)
    means, covs, draws = [], [], []
    for signal in BASE_SIGNALS[cfg.base_signal]:
        post = posterior(t_cond, signal(t_cond), kernel, cfg.gen_noise, grid)
        draw = sample_mvn(post.mean, cholesky_psd(post.cov), 1, rng)[0]
        if cfg.output_noise > 0:
            draw = draw + np.sqrt(cfg.output_noise) * rng.standard_normal(draw.shape)
        means.append(post.mean)
        covs.append(post.cov)
        draws.append(draw)

    idx = np.stack([np.sort(rng.choice(m, cfg.points_per_rep, replace=False)) + i * m for i in range(R)])
    Y = np.stack(draws, axis=1)
    reps = tuple(Repetition(grid[row], Y[row]) for row in idx)
    meta = {"generator": asdict(cfg), "seed": cfg.seed}
    train = RepetitionSet(reps, 1.0, meta)

    if len(means) == 1:
        return SynthResult(train, means[0], covs[0], draws[0], grid, idx)
    return SynthResult(train, np.stack(means, axis=1), np.stack(covs), Y, grid, idx)


def format_float(v: float) -> str:
    return format(float(v), ".17g")


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def write_dataset(rs: RepetitionSet, path, metadata: dict | None = None) -> None:
    """Write CSV plus JSON sidecar. ``metadata`` is merged into the sidecar."""
    path = Path(path)
    D = rs.dim
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["repetition_index", "t"] + [f"y_{d + 1}" for d in range(D)])
    for i, rep in enumerate(rs.repetitions):
        for t, y in zip(rep.t, rep.y):
            writer.writerow([i, format_float(t)] + [format_float(v) for v in y])
    path.write_text(buf.getvalue())
    meta = dict(rs.metadata)
    if metadata:
        meta.update(metadata)
    meta.update({"period": rs.period, "D": D, "r": rs.r})
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_dataset(path) -> RepetitionSet:
    """Read a dataset CSV (and its sidecar when present).

    Raises
    ------
    FormatError
        Empty file, missing header columns, non-numeric cells or ragged rows.
    OSError
        If the file cannot be read.
    """
    path = Path(path)
    text = path.read_text()
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or not any(cell.strip() for cell in rows[0]):
        raise FormatError(f"{path}: empty file", line=1)
    header = [h.strip() for h in rows[0]]
    for col, name in enumerate(("repetition_index", "t")):
        if len(header) <= col or header[col] != name:
            raise FormatError(f"{path}: missing column {name!r}", line=1, column=col + 1)
    ycols = header[2:]
    if not ycols:
        raise FormatError(f"{path}: missing column 'y_1'", line=1, column=3)
    for d, name in enumerate(ycols):
        if name != f"y_{d + 1}":
            raise FormatError(f"{path}: expected column 'y_{d + 1}', found {name!r}", line=1, column=d + 3)
    if len(rows) < 2:
        raise FormatError(f"{path}: no data rows", line=2)

    groups: dict[int, tuple[list, list]] = {}
    order = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise FormatError(f"{path}: expected {len(header)} fields, got {len(row)}", line=lineno)
        try:
            rep = int(row[0])
        except ValueError:
            raise FormatError(f"{path}: bad repetition_index {row[0]!r}", line=lineno, column=1) from None
        vals = []
        for col, cell in enumerate(row[1:], start=2):
            try:
                vals.append(float(cell))
            except ValueError:
                raise FormatError(f"{path}: non-numeric value {cell!r}", line=lineno, column=col) from None
        if rep not in groups:
            groups[rep] = ([], [])
            order.append(rep)
        groups[rep][0].append(vals[0])
        groups[rep][1].append(vals[1:])
    if order != sorted(order) or order != list(range(len(order))):
        raise FormatError(f"{path}: repetition indices must run 0..r-1 in order", column=1)

    meta = {}
    side = sidecar_path(path)
    if side.exists():
        try:
            meta = json.loads(side.read_text())
        except json.JSONDecodeError as exc:
            raise FormatError(f"{side}: invalid JSON: {exc.msg}", line=exc.lineno, column=exc.colno) from None
    period = float(meta.get("period", 1.0))
    try:
        reps = tuple(Repetition(np.array(groups[i][0]), np.array(groups[i][1])) for i in order)
    except NonMonotoneTime as exc:
        raise FormatError(f"{path}: {exc}") from None
    return RepetitionSet(reps, period, meta)
