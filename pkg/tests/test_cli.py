import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from apgen.cli import main
from apgen.dataset import read_dataset


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(root / "data"), "--create", "--seed", "0"]) == 0
    assert main(["fit", str(root / "data" / "train.csv"), "--out", str(root / "model"), "--create",
                 "--batch-size", "2", "--seed", "0"]) == 0
    assert main(["sample", str(root / "model" / "model.json"), str(root / "data" / "train.csv"),
                 "--out", str(root / "samples"), "--create", "--reps", "10", "--count", "3"]) == 0
    return root


def _read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def test_synth_defaults(workdir):
    rs = read_dataset(workdir / "data" / "train.csv")
    assert rs.r == 10 and all(len(rep) == 20 for rep in rs)
    meta = json.loads((workdir / "data" / "metadata.json").read_text())
    assert meta["seed"] == 0 and meta["synth"]["output_noise"] == 0.0
    header, body = _read_csv(workdir / "data" / "test.csv")
    assert header == ["repetition_index", "t", "mean_1", "std_1", "draw_1"]
    assert body.shape == (1000, 5)


def test_synth_noise_flag_recorded(tmp_path):
    assert main(["synth", "--out", str(tmp_path), "--noise", "0.1", "--seed", "0"]) == 0
    meta = json.loads((tmp_path / "metadata.json").read_text())
    assert meta["synth"]["output_noise"] == 0.1
    _, noisy = _read_csv(tmp_path / "test.csv")
    main(["synth", "--out", str(tmp_path / "clean"), "--create", "--seed", "0"])
    _, clean = _read_csv(tmp_path / "clean" / "test.csv")
    assert np.array_equal(noisy[:, 2], clean[:, 2])
    assert not np.array_equal(noisy[:, 4], clean[:, 4])


def test_missing_output_dir_is_io_error(tmp_path, capsys):
    assert main(["synth", "--out", str(tmp_path / "absent")]) == 3
    assert "--create" in capsys.readouterr().err


def test_fit_model_contents(workdir):
    model = json.loads((workdir / "model" / "model.json").read_text())
    assert model["seed"] == 0
    assert 0.1 <= model["theta_trained"]["noise_variance"] <= 1.0
    assert model["theta"]["noise_variance"] == pytest.approx(10 * model["theta_trained"]["noise_variance"])
    assert len(model["stage1"]["nll_trace"]) == 100 and len(model["stage2"]["nll_trace"]) == 100
    assert model["config"]["batch_size"] == 2


def test_fit_batch_size_too_large(workdir, capsys):
    code = main(["fit", str(workdir / "data" / "train.csv"), "--out", str(workdir / "model"),
                 "--batch-size", "11"])
    assert code == 2
    assert "batch-size" in capsys.readouterr().err


def test_fit_missing_input(tmp_path):
    assert main(["fit", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == 3


def test_fit_malformed_input(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("repetition_index,t\n0,0\n")
    assert main(["fit", str(bad), "--out", str(tmp_path)]) == 3
    assert "y_1" in capsys.readouterr().err


def test_fit_rejects_multichannel(tmp_path, capsys):
    main(["synth", "--out", str(tmp_path), "--signal", "sin2d"])
    assert main(["fit", str(tmp_path / "train.csv"), "--out", str(tmp_path)]) == 2
    assert "experiment2d" in capsys.readouterr().err


def test_sample_shape(workdir):
    header, body = _read_csv(workdir / "samples" / "trajectories.csv")
    assert header == ["repetition_index", "t", "traj_1", "traj_2", "traj_3"]
    assert body.shape == (1000, 5)
    assert np.array_equal(body[:, 0], np.repeat(np.arange(10), 100))


def test_sample_without_output_noise_differs(workdir, tmp_path):
    args = [str(workdir / "model" / "model.json"), str(workdir / "data" / "train.csv"), "--reps", "10",
            "--count", "2"]
    main(["sample", *args, "--out", str(tmp_path / "a"), "--create"])
    main(["sample", *args, "--out", str(tmp_path / "b"), "--create", "--no-output-noise"])
    _, a = _read_csv(tmp_path / "a" / "trajectories.csv")
    _, b = _read_csv(tmp_path / "b" / "trajectories.csv")
    assert not np.array_equal(a, b)
    assert json.loads((tmp_path / "b" / "trajectories.json").read_text())["no_output_noise"] is True


def _score(workdir, traj, out, *extra):
    return main(["score", str(workdir / "model" / "model.json"), str(workdir / "data" / "train.csv"),
                 str(traj), "--out", str(out), *extra])


def _write_traj(path, t, rep, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["repetition_index", "t"] + list(columns))
        for i in range(len(t)):
            w.writerow([int(rep[i]), repr(float(t[i]))] + [repr(float(v[i])) for v in columns.values()])


def test_score_ranks_and_mean_is_maximal(workdir, tmp_path, capsys):
    _, body = _read_csv(workdir / "samples" / "trajectories.csv")
    rep, t, x = body[:, 0], body[:, 1], body[:, 2]
    from apgen.cli import _load_model
    from apgen.generator import build_gamma
    _, theta, psi = _load_model(workdir / "model" / "model.json")
    g = build_gamma(read_dataset(workdir / "data" / "train.csv"), theta, psi, 10, 100)
    path = tmp_path / "t.csv"
    _write_traj(path, t, rep, {"sample": x, "doubled": 2 * x, "mean": g.mean})
    assert _score(workdir, path, tmp_path) == 0
    report = json.loads(capsys.readouterr().out)
    s = report["scores"]
    assert s["sample"] > s["doubled"]
    assert s["mean"] >= max(s.values())
    assert report["ranking"][0] == "mean"
    assert (tmp_path / "scores.json").read_text() == json.dumps(report, indent=2, sort_keys=True) + "\n"


def test_score_grid_mismatch(workdir, tmp_path, capsys):
    assert _score(workdir, workdir / "samples" / "trajectories.csv", tmp_path, "--reps", "5",
                  "--samples-per-rep", "100") == 2
    assert "does not match" in capsys.readouterr().err


def test_experiment_table3(tmp_path):
    assert main(["experiment", "table3", "--out", str(tmp_path), "--seed", "0"]) == 0
    header, body = _read_csv(tmp_path / "table3.csv")
    assert header[0] == "batch_size" and "mse_mean" in header and "mse_std" in header
    assert list(body[:, 0]) == [1, 2, 3, 5, 10]
    assert np.all(body[:, header.index("theta_noise_variance")] <= 0.01)
    assert json.loads((tmp_path / "table3.json").read_text())["seed"] == 0


def test_experiment_fig2_plot_data(tmp_path):
    assert main(["experiment", "fig2", "--out", str(tmp_path)]) == 0
    header, body = _read_csv(tmp_path / "fig2_plot.csv")
    assert header == ["t", "naive_mean", "naive_variance", "periodic_mean", "periodic_variance"]
    tail = body[-50:]
    head = body[:50]
    assert np.max(np.abs(tail[:, 1])) < np.max(np.abs(head[:, 1]))
    assert np.mean(tail[:, 2]) > np.mean(head[:, 2])


def test_unknown_experiment_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["experiment", "table9", "--out", str(tmp_path)])
    assert exc.value.code == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "apgen", "synth", "--out", str(tmp_path), "--reps", "3"],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert read_dataset(tmp_path / "train.csv").r == 3
