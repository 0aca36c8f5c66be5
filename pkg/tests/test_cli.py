import json
import subprocess
import sys

import numpy as np
import pytest

from serwkit import cli
from serwkit.align import random_orthogonal
from serwkit.exceptions import InputError, SolverError


def write_csv(path, arr):
    np.savetxt(path, np.atleast_2d(arr), delimiter=",", fmt="%.17g")
    return str(path)


@pytest.fixture
def clouds(tmp_path, rng):
    x = rng.standard_normal((8, 3))
    y = x[rng.permutation(8)] @ random_orthogonal(3, rng).T + 1.5
    z = rng.standard_normal((7, 2))
    return {
        "x": write_csv(tmp_path / "x.csv", x),
        "x2": write_csv(tmp_path / "x2.csv", x),
        "y": write_csv(tmp_path / "y.csv", y),
        "z": write_csv(tmp_path / "z.csv", z),
        "dir": tmp_path,
    }


def report(path):
    return json.loads(open(path).read())


def test_load_three_by_two(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("0,1\n2,3\n4.5,-1e-3\n")
    space = cli.load_space(str(p))
    assert (space.n, space.dim) == (3, 2)
    np.testing.assert_allclose(space.weights, 1 / 3)


@pytest.mark.parametrize("text,needle", [
    ("0,1\n2\n", "line 2"),
    ("0,1\n2,abc\n", "line 2, column 2"),
    ("", "empty"),
])
def test_malformed_csv(tmp_path, text, needle, capsys):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(InputError, match=needle):
        cli.load_matrix(str(p))
    assert cli.run(["embed", "--a", str(p), "--dim", "1"]) == 1
    assert needle in capsys.readouterr().err


def test_missing_file(tmp_path, capsys):
    assert cli.run(["w2", "--a", str(tmp_path / "nope.csv"), "--b", str(tmp_path / "n.csv")]) == 1
    assert "nope.csv" in capsys.readouterr().err


def test_weights_renormalised_with_warning(tmp_path):
    p = tmp_path / "w.txt"
    p.write_text("0.5\n0.499999\n")
    with pytest.warns(UserWarning, match="renormali"):
        w = cli.load_weights(str(p), 2)
    assert w.sum() == pytest.approx(1.0, abs=1e-15)
    p.write_text("0.5\n-0.5\n")
    with pytest.raises(InputError):
        cli.load_weights(str(p), 2)
    p.write_text("1.0\n")
    with pytest.raises(InputError):
        cli.load_weights(str(p), 2)


def test_w2_identical_files_zero(clouds):
    out = clouds["dir"] / "r.json"
    assert cli.run(["w2", "--a", clouds["x"], "--b", clouds["x2"], "--solver", "exact",
                    "--out", str(out)]) == 0
    rep = report(out)
    assert rep["value"] == 0.0
    assert rep["coupling"] == "r.coupling.csv"
    assert (clouds["dir"] / "r.coupling.csv").exists()
    assert '"value": 0.0' in out.read_text()


def test_w2_sinkhorn(clouds):
    out = clouds["dir"] / "s.json"
    assert cli.run(["w2", "--a", clouds["x"], "--b", clouds["y"], "--solver", "sinkhorn",
                    "--epsilon", "0.05", "--out", str(out)]) == 0
    assert report(out)["epsilon"] == 0.05


def test_gw_isometric_clouds(clouds):
    out = clouds["dir"] / "g.json"
    assert cli.run(["gw", "--a", clouds["x"], "--b", clouds["y"], "--out", str(out)]) == 0
    assert report(out)["value"] < 1e-8


def test_serw_zero_epochs_equals_fserw(clouds):
    o1, o2 = clouds["dir"] / "f.json", clouds["dir"] / "s.json"
    common = ["--a", clouds["x"], "--b", clouds["z"], "--dim", "2", "--seed", "3"]
    assert cli.run(["fserw", *common, "--out", str(o1)]) == 0
    assert cli.run(["serw", *common, "--epochs", "0", "--out", str(o2)]) == 0
    line = [ln for ln in o1.read_text().splitlines() if '"value"' in ln]
    assert line == [ln for ln in o2.read_text().splitlines() if '"value"' in ln]


def test_report_fields_exact(clouds, tmp_path):
    seq = tmp_path / "seq.csv"
    seq.write_text("0\n1\n2\n1\n")
    base = ["--a", clouds["x"], "--b", clouds["z"]]
    cases = {
        "w2": ["w2", "--a", clouds["x"], "--b", clouds["y"]],
        "gw": ["gw", *base, "--restarts", "2"],
        "fserw": ["fserw", *base],
        "serw": ["serw", *base, "--epochs", "1", "--batches", "2"],
        "bounds": ["bounds", *base, "--epochs", "1", "--batches", "1", "--restarts", "2"],
        "embed": ["embed", "--a", clouds["x"], "--dim", "2"],
        "dtw": ["dtw", "--a", str(seq), "--b", str(seq)],
        "curve": ["curve", "--synthetic", "4", "--points", "6", "--period", "4"],
        "sweep": ["sweep", *base, "--dims", "1,2", "--restarts", "2"],
        "ratios": ["ratios", *base, "--c", clouds["y"], "--dim", "2", "--restarts", "2"],
    }
    assert set(cases) == set(cli.REPORT_FIELDS)
    for name, argv in cases.items():
        out = tmp_path / f"{name}.json"
        assert cli.run([*argv, "--out", str(out)]) == 0, name
        assert list(report(out)) == cli.REPORT_FIELDS[name], name


def test_config_layering(clouds, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"restarts": 1, "seed": 9}))
    out = tmp_path / "g.json"
    argv = ["gw", "--a", clouds["x"], "--b", clouds["z"], "--config", str(cfg)]
    assert cli.run([*argv, "--out", str(out)]) == 0
    assert (report(out)["restarts"], report(out)["seed"]) == (1, 9)
    assert cli.run([*argv, "--restarts", "3", "--out", str(out)]) == 0
    assert (report(out)["restarts"], report(out)["seed"]) == (3, 9)


def test_config_unknown_key(clouds, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"restart": 1}))
    assert cli.run(["gw", "--a", clouds["x"], "--b", clouds["z"], "--config", str(cfg)]) == 1
    assert "unknown keys" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["gw", "--restarts", "0"],
    ["serw", "--epochs", "-1"],
    ["w2", "--solver", "sinkhorn", "--epsilon", "0"],
    ["fserw", "--dim", "50"],
])
def test_invalid_options(clouds, argv):
    cmd, *rest = argv
    assert cli.run([cmd, "--a", clouds["x"], "--b", clouds["z"], *rest]) == 1


def test_usage_errors(capsys):
    assert cli.run(["nosuch"]) == 1
    assert cli.run(["w2"]) == 1
    assert cli.run(["--help"]) == 0


def test_solver_failure_exit_two(clouds, monkeypatch, capsys):
    def boom(cfg):
        raise SolverError("pivot budget exhausted", 7)

    monkeypatch.setitem(cli.COMMANDS, "gw", boom)
    assert cli.run(["gw", "--a", clouds["x"], "--b", clouds["z"]]) == 2
    assert "solver failure" in capsys.readouterr().err


def test_json_formatting():
    assert cli.dumps({"a": 1.0, "b": [0.1, 2], "c": float("nan")}) == (
        '{\n  "a": 1.0,\n  "b": [0.10000000000000001, 2],\n  "c": null\n}\n')


def test_deterministic_bytes(clouds, tmp_path):
    argv = ["serw", "--a", clouds["x"], "--b", clouds["z"], "--epochs", "2", "--batches", "2"]
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}.json"
        assert cli.run([*argv, "--out", str(out)]) == 0
        outs.append(out.read_bytes().replace(f"run{k}".encode(), b"run"))
    assert outs[0] == outs[1]


def test_console_entry_point(clouds):
    proc = subprocess.run([sys.executable, "-m", "serwkit.cli", "w2", "--a", clouds["x"],
                           "--b", clouds["x2"]], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "0" in proc.stdout
