import filecmp
import json

import pytest

from modalflow import io
from modalflow.cli import main


def run(*argv):
    return main([str(a) for a in argv])


def profile_counts(path):
    _, rows = io.read_csv(path)
    return [int(r[1]) for r in rows]


def pattern(counts):
    out = []
    for c in counts:
        if not out or out[-1] != c:
            out.append(c)
    return out


def test_tree_bimodal1d(tmp_path, capsys):
    assert run("tree", "--fixture", "bimodal1d", "--out-dir", tmp_path) == 0
    assert pattern(profile_counts(tmp_path / "profile.csv")) == [1, 2, 1]
    tree = json.loads((tmp_path / "tree.json").read_text())
    assert tree["schema_version"] == 1 and len(tree["critical_points"]) == 3
    assert "[1, 2, 1]" in capsys.readouterr().out


def test_tree_unimodal(tmp_path):
    assert run("tree", "--fixture", "normal2d", "--out-dir", tmp_path, "--resolution", 64) == 0
    assert set(profile_counts(tmp_path / "profile.csv")) == {1}


def test_missing_fixture(tmp_path, capsys):
    assert run("tree", "--fixture", tmp_path / "nope.json", "--out-dir", tmp_path) == 2
    assert "error" in capsys.readouterr().err


def test_flow_outputs(tmp_path):
    assert run("flow", "--out-dir", tmp_path, "--start", "0.5,0.5", "--start", "2.5,0.8",
               "--basin-grid", 20) == 0
    for k in (0, 1):
        header, rows = io.read_csv(tmp_path / f"trajectory_{k}.csv")
        assert header == ["tau", "x_1", "x_2", "f", "grad_norm"]
        side = json.loads((tmp_path / f"trajectory_{k}.json").read_text())
        assert side["stop_reason"] == "ConvergedToCritical"
    header, rows = io.read_csv(tmp_path / "basins.csv")
    assert len(rows) == 400 and {r[2] for r in rows} <= {"-1", "0", "1"}


def test_flow_rejects_wrong_dimension(tmp_path):
    assert run("flow", "--out-dir", tmp_path, "--start", "1,2,3") == 2


def test_project_radial(tmp_path):
    assert run("project", "--fixture", "normal2d", "--out-dir", tmp_path,
               "--start", "0.6,0.8", "--eta", 0.01, "--ceiling", 0.15) == 0
    header, rows = io.read_csv(tmp_path / "walk_0.csv")
    assert header[:4] == ["step", "x_1", "x_2", "f"] and "normality_residual" in header
    for r in rows:
        x, y = float(r[1]), float(r[2])
        assert abs(0.8 * x - 0.6 * y) < 1e-6
    assert json.loads((tmp_path / "walk_0.json").read_text())["stop_reason"] == "LevelCeiling"


def test_project_validation(tmp_path):
    assert run("project", "--out-dir", tmp_path, "--eta", 0) == 2
    assert run("project", "--out-dir", tmp_path, "--level", 5.0) == 2


def test_hybrid_single_and_sweep(tmp_path):
    assert run("hybrid", "--out-dir", tmp_path, "--t", 0.07, "--grid-points", 20,
               "--resolution", 128) == 0
    d = json.loads((tmp_path / "hybrid.json").read_text())
    assert len(d["groups"]) == 2 and d["noise_modes"] == []
    assert run("hybrid", "--out-dir", tmp_path / "s", "--sweep", "--grid-points", 10,
               "--resolution", 64) == 0
    _, rows = io.read_csv(tmp_path / "s" / "hybrid_sweep.csv")
    assert len(rows) == 64
    assert run("hybrid", "--out-dir", tmp_path) == 2


def test_verify_exit_codes(tmp_path):
    args = ["verify", "--fixtures", "bimodal1d", "--statements", "hybrid-partition",
            "projection-infinitesimal", "--out-dir"]
    assert run(*args, tmp_path / "a") == 0
    assert run(*args, tmp_path / "b", "--tolerance", 0) == 1
    report = json.loads((tmp_path / "b" / "report.json").read_text())
    assert report["passed"] is False
    bad = tmp_path / "bad.json"
    bad.write_text('{"kind": "gmm", "dim": 2, "weights": [1.0]}')
    assert run("verify", "--fixtures", bad, "--out-dir", tmp_path) == 2
    assert run("verify", "--statements", "no-such-check", "--out-dir", tmp_path) == 2


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        run("flow", "--kind", "sideways")
    assert exc.value.code == 2


def test_identical_invocations_identical_files(tmp_path):
    for sub in ("a", "b"):
        assert run("project", "--out-dir", tmp_path / sub, "--n-starts", 2, "--seed", 7) == 0
        assert run("flow", "--out-dir", tmp_path / sub, "--basin-grid", 15) == 0
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    assert cmp.left_list == cmp.right_list and cmp.diff_files == []
    _, mism, err = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", cmp.common_files, shallow=False)
    assert mism == [] and err == []
