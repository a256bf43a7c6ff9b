import json
import re
import subprocess
import sys

import pytest

from vradmm.cli import main
from vradmm.data import RawDataset, make_synthetic, serialize_libsvm
from vradmm.tracefile import read_bench, read_trace

SOLVE = ["solve", "--data", "synthetic", "--n", "60", "--iters", "40"]


@pytest.fixture
def libsvm_file(tmp_path):
    X, y = make_synthetic(40, 8, seed=1)
    p = tmp_path / "syn.libsvm"
    p.write_text(serialize_libsvm(RawDataset.from_dense(X, y)), encoding="utf-8")
    return p


def test_solve_writes_trace(tmp_path, capsys):
    out = tmp_path / "t.csv"
    assert main(SOLVE + ["--algo", "saga", "--seed", "7", "--out", str(out)]) == 0
    table = read_trace(out)
    assert len(table) == 41 and table["t"][-1] == 40
    assert "saga: T=40" in capsys.readouterr().err


def test_solve_is_byte_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = SOLVE + ["--algo", "svrg", "--m", "20", "--seed", "3", "--diagnostics"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_solve_to_stdout(capsys):
    assert main(SOLVE + ["--algo", "sadmm", "--seed", "1", "--record-every", "10"]) == 0
    lines = capsys.readouterr().out.strip().split("\n")
    assert lines[0].startswith("t,epoch,") and len(lines) == 1 + 5


def test_seed_is_required(capsys):
    assert main(SOLVE + ["--algo", "saga"]) == 2
    assert "--seed is required" in capsys.readouterr().err


def test_seed_from_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"algorithm": "sag", "seed": 5, "iterations": 20, "out_path": str(tmp_path / "o.csv")}))
    assert main(["solve", "--config", str(cfg), "--data", "synthetic", "--n", "30"]) == 0
    assert len(read_trace(tmp_path / "o.csv")) == 21


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"algorithm": "sag", "seed": 5, "iterations": 20}))
    out = tmp_path / "o.csv"
    assert main(["solve", "--config", str(cfg), "--n", "30", "--iters", "10", "--out", str(out)]) == 0
    assert len(read_trace(out)) == 11


def test_bad_config_reported(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"eta": -1, "seed": 1}))
    assert main(["solve", "--config", str(cfg)]) == 2
    assert "eta:" in capsys.readouterr().err


def test_svrg_divisibility_reported(capsys):
    assert main(SOLVE[:-2] + ["--iters", "41", "--algo", "svrg", "--seed", "1"]) == 2
    assert "divisible" in capsys.readouterr().err


def test_missing_data_file(tmp_path, capsys):
    assert main(["solve", "--data", str(tmp_path / "none.libsvm"), "--seed", "1"]) == 2
    assert "none.libsvm" in capsys.readouterr().err


def test_corrupt_data_file_line(tmp_path, capsys):
    p = tmp_path / "bad.libsvm"
    p.write_text("+1 1:1\n-1 2:x\n", encoding="utf-8")
    assert main(["solve", "--data", str(p), "--seed", "1"]) == 2
    err = capsys.readouterr().err
    assert "bad.libsvm" in err and "line 2" in err


def test_unwritable_output(tmp_path, capsys):
    assert main(SOLVE + ["--algo", "saga", "--seed", "1", "--out", str(tmp_path / "no" / "t.csv")]) == 2
    assert "t.csv" in capsys.readouterr().err


def test_libsvm_input_and_split(libsvm_file, tmp_path):
    out = tmp_path / "t.csv"
    assert main(["solve", "--data", str(libsvm_file), "--algo", "saga", "--iters", "15", "--seed", "2",
                 "--split", "--out", str(out)]) == 0
    assert read_trace(out).header[-1] == "test_loss"


@pytest.mark.parametrize("jobs", ["1", "2"])
def test_bench(tmp_path, jobs):
    out = tmp_path / "b.csv"
    assert main(["bench", "--data", "synthetic", "--n", "40", "--iters", "40", "--seed", "0",
                 "--algos", "svrg", "saga", "sadmm", "--jobs", jobs, "--out", str(out)]) == 0
    table = read_bench(out)
    assert sorted(set(table["algorithm"])) == ["sadmm", "saga", "svrg"]


def test_bench_parallel_matches_serial(tmp_path):
    base = ["bench", "--data", "synthetic", "--n", "40", "--iters", "40", "--seed", "0", "--algos", "sag", "saga"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(base + ["--out", str(a)]) == 0
    assert main(base + ["--jobs", "2", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_params_reports_sigma(libsvm_file, capsys):
    assert main(["params", "--data", str(libsvm_file), "--iters", "8"]) == 0
    out = capsys.readouterr().out
    sa = float(re.search(r"sigma_A\s+(\S+)", out).group(1))
    assert sa >= 1.0
    for name in ("svrg", "sag", "saga"):
        assert re.search(rf"^{name}\s", out, re.M)


def test_params_overflow_is_reported(capsys):
    assert main(["params", "--data", "synthetic", "--n", "200", "--iters", "5000"]) == 0
    assert "overflow" in capsys.readouterr().out


def test_check_tiny(capsys):
    assert main(["check", "--tiny"]) == 0
    out = capsys.readouterr().out
    assert "[FAIL]" not in out and "invariants hold" in out


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "vradmm", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("vradmm ")
