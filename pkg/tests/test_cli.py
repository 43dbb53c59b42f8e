import csv
import subprocess
import sys

import numpy as np
import pytest

from radapt.cli import emit_exact_csv, emit_loss_csv, emit_solution_csv, main, parse_counts, read_config
from radapt.errors import UsageError
from radapt.problems import make_experiment

SIX = {"partition_0.csv", "partition_1.csv", "exact.csv", "loss_clean0.csv", "loss_clean1.csv", "manifest"}


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_solution_csv_1d(tmp_path):
    p = tmp_path / "s.csv"
    emit_solution_csv([np.array([0.0, 0.5, 1.0])], [0.0, 1.0, 0.0], p)
    text = p.read_text()
    assert text == "x,u_pred\n0.0,0.0\n0.5,1.0\n1.0,0.0\n"


def test_solution_csv_2d(tmp_path):
    p = tmp_path / "s.csv"
    ax = [np.linspace(0, 1, 5), np.linspace(0, 1, 9)]
    emit_solution_csv(ax, np.arange(45.0), p)
    rows = _rows(p)
    assert rows[0] == ["x", "y", "u_pred"] and len(rows) == 46
    assert rows[2] == ["0.0", "0.125", "1.0"]


def test_full_precision(tmp_path):
    p = tmp_path / "s.csv"
    v = 1.0 / 3.0
    emit_solution_csv([np.array([0.0, 1.0])], [v, np.pi], p)
    rows = _rows(p)
    assert float(rows[1][1]) == v and float(rows[2][1]) == np.pi


def test_exact_csv(tmp_path):
    p = tmp_path / "e.csv"
    emit_exact_csv(make_experiment(2), p)
    rows = _rows(p)
    assert rows[0] == ["x", "u_exact"] and len(rows) == 1001
    emit_exact_csv(make_experiment(6), p)
    rows = _rows(p)
    assert rows[0] == ["x", "y", "u_exact"]
    pts = np.array(rows[1:], dtype=float)
    assert not np.any((pts[:, 0] < 0) & (pts[:, 1] < 0))


def test_loss_csv_round_trip(tmp_path):
    hist = [(e, 1 if e < 5 else 2, 0.0, 1.0 / (e + 1)) for e in range(10)]
    p0, p1 = tmp_path / "l0.csv", tmp_path / "l1.csv"
    emit_loss_csv(hist, 1, p0)
    emit_loss_csv(hist, 2, p1)
    r0, r1 = _rows(p0), _rows(p1)
    assert r0[0] == r1[0] == ["epoch", "lossN"]
    back = [(int(e), float(v)) for e, v in r0[1:] + r1[1:]]
    assert back == [(e, err) for e, _, _, err in hist]
    emit_loss_csv([], 1, p0)
    assert p0.read_text() == "epoch,lossN\n"


def test_parse_counts():
    assert parse_counts("1,2,4,...,512") == [1, 2, 4, 8, 16, 32, 64, 128, 256, 512]
    assert parse_counts("1,2,4,…,16") == [1, 2, 4, 8, 16]
    assert parse_counts("3, 5, 9") == [3, 5, 9]
    for bad in ("", "2,...,8", "4,2,...,1", "0,1"):
        with pytest.raises(UsageError):
            parse_counts(bad)


def test_read_config(tmp_path):
    p = tmp_path / "c"
    p.write_text("# comment\nexperiment = 2\nstage1-epochs = 5\nversion.numpy = 1\n")
    assert read_config(p) == {"experiment": "2", "stage1_epochs": "5"}
    p.write_text("colour = red\n")
    with pytest.raises(UsageError):
        read_config(p)


def test_bad_inputs_exit_1(tmp_path, capsys):
    assert main(["run", "--experiment", "9", "--out", str(tmp_path)]) == 1
    assert main(["run", "--experiment", "2", "--loss", "collocation", "--out", str(tmp_path)]) == 1
    bad = tmp_path / "bad"
    bad.write_text("nonsense\n")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path)]) == 1
    assert "error" in capsys.readouterr().err


def test_run_ex2_seed7(tmp_path):
    out = tmp_path / "ex2"
    assert main(["run", "--experiment", "2", "--elements", "16", "--seed", "7", "--out", str(out)]) == 0
    assert {p.name for p in out.iterdir()} == SIX
    l0, l1 = _rows(out / "loss_clean0.csv"), _rows(out / "loss_clean1.csv")
    assert len(l0) == 1001 and l1[1][0] == "1000"
    assert float(l1[-1][1]) < float(l0[-1][1])
    # rerunning from the manifest alone reproduces every CSV bit for bit
    again = tmp_path / "again"
    assert main(["run", "--config", str(out / "manifest"), "--out", str(again)]) == 0
    for name in SIX - {"manifest"}:
        assert (out / name).read_bytes() == (again / name).read_bytes()


def test_run_ex1_gibbs(tmp_path):
    args = ["run", "--experiment", "1", "--loss", "least-squares", "--beta", "1e-3", "--elements", "8"]
    assert main(args + ["--out", str(tmp_path)]) == 0
    p0 = np.array(_rows(tmp_path / "partition_0.csv")[1:], dtype=float)
    p1 = np.array(_rows(tmp_path / "partition_1.csv")[1:], dtype=float)
    # overshoot threshold as calibrated for the acceptance run
    assert p0[:, 1].max() > 1.02
    assert p1[:, 1].max() <= 1.02


def test_convergence_table(tmp_path):
    args = [
        "run", "--experiment", "2", "--stage1-epochs", "20", "--stage2-epochs", "20",
        "--convergence", "2,4,...,16", "--out", str(tmp_path),
    ]
    assert main(args) == 0
    rows = _rows(tmp_path / "norma.csv")
    assert rows[0] == ["elements", "static", "static_FEM", "r", "r_FEM"]
    assert [int(r[0]) for r in rows[1:]] == [2, 4, 8, 16]
    assert all(float(v) > 0 for r in rows[1:] for v in r[1:])
    assert main(["run", "--experiment", "5", "--convergence", "2,4,8", "--out", str(tmp_path)]) == 1


def test_out_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("RADAPT_OUT", str(tmp_path / "env"))
    monkeypatch.chdir(tmp_path)
    assert main(["run", "--experiment", "4", "--stage1-epochs", "3", "--stage2-epochs", "3"]) == 0
    assert {p.name for p in (tmp_path / "env").iterdir()} == SIX


def test_abort_keeps_partial_artifacts(tmp_path, monkeypatch):
    import radapt.cli as cli
    from radapt.training import TrainResult, TrainingAborted

    def boom(*a, **k):
        raise TrainingAborted("non-finite loss", 3, TrainResult(None, None, [(0, 1, 1.0, 0.5), (1, 1, 0.9, 0.4)]))

    monkeypatch.setattr(cli, "train_two_stage", boom)
    assert main(["run", "--experiment", "3", "--out", str(tmp_path)]) == 2
    assert (tmp_path / "manifest").exists() and (tmp_path / "exact.csv").exists()
    assert len(_rows(tmp_path / "loss_clean0.csv")) == 3
    assert not (tmp_path / "partition_0.csv").exists()


def test_module_entry_point(tmp_path):
    res = subprocess.run(
        [sys.executable, "-m", "radapt", "run", "--experiment", "4", "--stage1-epochs", "2",
         "--stage2-epochs", "2", "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert res.returncode == 0, res.stderr
    assert "experiment 4" in res.stdout
