"""Command-line interface: ``apgen {synth,fit,sample,score,experiment}``.

Exit codes: 0 success, 2 usage or configuration error, 3 input/output or
file-format error, 4 numerically degenerate covariance.  Every output embeds
the seed and the full configuration, and reruns with the same seed write
byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import SynthConfig, dense_grid, format_float, read_dataset, synth_dataset, write_dataset
from .errors import ConfigInvalid, FormatError, NotFactorizable
from .experiments import EXPERIMENTS, run_experiment
from .generator import build_gamma, log_likelihood, sample_trajectories
from .kernels import EnvelopeHyperParams, PeriodicHyperParams
from .training import fit_two_stage

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_DEGENERATE = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _write_text(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror}", EXIT_IO) from None


def _columns_csv(columns: dict) -> str:
    names = list(columns)
    arrays = [np.asarray(columns[n]) for n in names]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for row in zip(*arrays):
        w.writerow([v if isinstance(v, (int, np.integer)) else format_float(v) for v in row])
    return buf.getvalue()


def _rows_csv(rows: list, columns: tuple) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([v if isinstance(v, (int, np.integer)) else format_float(v) for v in (row[c] for c in columns)])
    return buf.getvalue()


def _out_dir(args) -> Path:
    out = Path(args.out)
    if out.is_dir():
        return out
    if out.exists():
        raise CliError(f"{out} exists and is not a directory", EXIT_IO)
    if not args.create:
        raise CliError(f"output directory {out} does not exist (pass --create)", EXIT_IO)
    try:
        out.mkdir(parents=True)
    except OSError as exc:
        raise CliError(f"cannot create {out}: {exc.strerror}", EXIT_IO) from None
    return out


def _readable(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"cannot read {p}: no such file", EXIT_IO)
    return p


def _load_univariate(path: Path):
    rs = read_dataset(path)
    if rs.dim != 1:
        raise CliError(f"{path} has {rs.dim} channels; multichannel data is handled by "
                       "'apgen experiment experiment2d'", EXIT_CONFIG)
    return rs


def _load_model(path: Path):
    try:
        model = json.loads(path.read_text())
        th, ps = model["theta"], model["psi"]
        theta = PeriodicHyperParams(th["length_scale"], th["signal_variance"], th["noise_variance"], th["period"])
        psi = EnvelopeHyperParams(ps["length_scale"], ps["variance"], ps["noise_variance"])
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc.msg}", line=exc.lineno, column=exc.colno) from None
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: not a model file (missing {exc})") from None
    return model, theta, psi


def cmd_synth(args) -> int:
    out = _out_dir(args)
    cfg = SynthConfig(n_repetitions=args.reps, points_per_rep=args.points_per_rep, base_signal=args.signal,
                      output_noise=args.noise, seed=args.seed, prior=args.prior)
    res = synth_dataset(cfg)
    config = {"command": "synth", "synth": asdict(cfg), "seed": cfg.seed, "version": __version__}
    write_dataset(res.train, out / "train.csv", {"config": config})
    D = res.train.dim
    mean = res.test_mean.reshape(res.dense_grid.size, D)
    std = res.test_std.reshape(res.dense_grid.size, D)
    draw = res.test_draw.reshape(res.dense_grid.size, D)
    cols = {"repetition_index": np.repeat(np.arange(cfg.n_repetitions), cfg.dense_grid_per_rep),
            "t": res.dense_grid}
    for d in range(D):
        cols[f"mean_{d + 1}"] = mean[:, d]
        cols[f"std_{d + 1}"] = std[:, d]
        cols[f"draw_{d + 1}"] = draw[:, d]
    _write_text(out / "test.csv", _columns_csv(cols))
    _write_text(out / "metadata.json", _dump_json(config))
    return EXIT_OK


def cmd_fit(args) -> int:
    data = _readable(args.data)
    out = _out_dir(args)
    rs = _load_univariate(data)
    if not 1 <= args.batch_size <= rs.r:
        raise CliError(f"--batch-size {args.batch_size} outside [1, {rs.r}]", EXIT_CONFIG)
    fit = fit_two_stage(rs, args.batch_size, args.steps, args.lr, args.seed)
    model = fit.to_dict()
    model["config"] = {"command": "fit", "data": str(args.data), "batch_size": args.batch_size,
                       "steps": args.steps, "lr": args.lr, "seed": args.seed, "version": __version__}
    model["seed"] = args.seed
    _write_text(out / "model.json", _dump_json(model))
    return EXIT_OK


def _trajectory_csv(grid, rep_index, draws) -> str:
    cols = {"repetition_index": rep_index, "t": grid}
    for k, d in enumerate(draws, start=1):
        cols[f"traj_{k}"] = d
    return _columns_csv(cols)


def cmd_sample(args) -> int:
    model_path, data = _readable(args.model), _readable(args.data)
    out = _out_dir(args)
    if args.count < 0:
        raise CliError("--count must be nonnegative", EXIT_CONFIG)
    _, theta, psi = _load_model(model_path)
    rs = _load_univariate(data)
    g = build_gamma(rs, theta, psi, args.reps, args.samples_per_rep)
    draws = sample_trajectories(g, args.count, args.no_output_noise, args.seed)
    _write_text(out / "trajectories.csv", _trajectory_csv(g.grid, g.repetition_index(), draws))
    config = {"command": "sample", "model": str(args.model), "data": str(args.data), "reps": args.reps,
              "samples_per_rep": args.samples_per_rep, "count": args.count,
              "no_output_noise": args.no_output_noise, "seed": args.seed, "version": __version__}
    _write_text(out / "trajectories.json", _dump_json(config))
    return EXIT_OK


def _read_trajectories(path: Path):
    rows = list(csv.reader(io.StringIO(path.read_text())))
    if not rows:
        raise FormatError(f"{path}: empty file", line=1)
    header = rows[0]
    if header[:2] != ["repetition_index", "t"] or len(header) < 3:
        raise FormatError(f"{path}: expected columns repetition_index,t,traj_1,...", line=1)
    try:
        body = np.array([[float(c) for c in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if body.ndim != 2 or body.shape[1] != len(header):
        raise FormatError(f"{path}: ragged or empty trajectory table")
    return header[2:], body[:, 0].astype(int), body[:, 1], body[:, 2:].T


def cmd_score(args) -> int:
    model_path, data, traj_path = _readable(args.model), _readable(args.data), _readable(args.trajectories)
    out = _out_dir(args)
    _, theta, psi = _load_model(model_path)
    rs = _load_univariate(data)
    names, rep_index, t, trajs = _read_trajectories(traj_path)
    R = args.reps
    m = args.samples_per_rep
    if R is None or m is None:
        R = int(rep_index.max()) + 1 if rep_index.size else 0
        m = rep_index.size // R if R else 0
    grid = dense_grid(R, m, theta.period)
    if t.shape != grid.shape or not np.allclose(t, grid, rtol=0.0, atol=1e-12):
        raise CliError(f"trajectory grid ({t.size} points) does not match the model grid "
                       f"({R} repetitions x {m} samples = {grid.size} points)", EXIT_CONFIG)
    g = build_gamma(rs, theta, psi, R, m)
    scores = {name: log_likelihood(g, x) for name, x in zip(names, trajs)}
    ranking = sorted(scores, key=lambda k: (-scores[k], k))
    report = {
        "scores": scores,
        "ranking": ranking,
        "config": {"command": "score", "model": str(args.model), "data": str(args.data),
                   "trajectories": str(args.trajectories), "reps": R, "samples_per_rep": m,
                   "seed": args.seed, "version": __version__},
        "seed": args.seed,
    }
    text = _dump_json(report)
    _write_text(out / "scores.json", text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_experiment(args) -> int:
    out = _out_dir(args)
    res = run_experiment(args.name, args.seed, args.steps, args.lr)
    _write_text(out / f"{res.name}.csv", _rows_csv(res.rows, res.columns))
    if res.plot:
        _write_text(out / f"{res.name}_plot.csv", _columns_csv(res.plot))
    meta = {"command": "experiment", "name": res.name, "seed": args.seed, "steps": args.steps, "lr": args.lr,
            "version": __version__, "details": res.config}
    _write_text(out / f"{res.name}.json", _dump_json(meta))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="apgen", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, steps=False):
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--create", action="store_true", help="create the output directory if missing")
        p.add_argument("--seed", type=int, default=0)
        if steps:
            p.add_argument("--steps", type=int, default=100)
            p.add_argument("--lr", type=float, default=0.1)

    p = sub.add_parser("synth", help="generate a synthetic train/test dataset")
    common(p)
    p.add_argument("--reps", type=int, default=10, help="number of repetitions")
    p.add_argument("--points-per-rep", type=int, default=20)
    p.add_argument("--noise", type=float, default=0.0, help="output noise variance added to the test draw")
    p.add_argument("--signal", choices=("sin", "sin2d"), default="sin")
    p.add_argument("--prior", choices=("weighted", "periodic"), default="weighted")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="two-stage hyperparameter fit")
    p.add_argument("data")
    common(p, steps=True)
    p.add_argument("--batch-size", type=int, default=2)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sample", help="draw trajectories from a fitted model")
    p.add_argument("model")
    p.add_argument("data")
    common(p)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--samples-per-rep", type=int, default=100)
    p.add_argument("--count", type=int, default=3)
    p.add_argument("--no-output-noise", action="store_true", help="sample without the output-noise diagonal")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("score", help="log-likelihood of trajectories under a fitted model")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("trajectories")
    common(p)
    p.add_argument("--reps", type=int, default=None, help="defaults to the trajectory file")
    p.add_argument("--samples-per-rep", type=int, default=None, help="defaults to the trajectory file")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("experiment", help="rerun a table or figure study")
    p.add_argument("name", choices=sorted(EXPERIMENTS))
    common(p, steps=True)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        code, msg = exc.code, str(exc)
    except NotFactorizable as exc:
        code, msg = EXIT_DEGENERATE, f"degenerate covariance: {exc}"
    except FormatError as exc:
        code, msg = EXIT_IO, str(exc)
    except OSError as exc:
        code, msg = EXIT_IO, f"{exc.filename or 'io'}: {exc.strerror or exc}"
    except (ConfigInvalid, ValueError) as exc:
        code, msg = EXIT_CONFIG, str(exc)
    print(f"apgen: error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
