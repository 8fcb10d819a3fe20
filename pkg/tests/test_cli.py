import json
import subprocess
import sys

import numpy as np
import pytest

from harmonic_riccati.cli import main

from test_config import SCALAR_YAML


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_solve_scalar(capsys):
    code, out, _ = run(capsys, "solve", "--preset", "scalar")
    assert code == 0
    doc = json.loads(out)
    np.testing.assert_allclose(doc["P"], [2.0492, 2.3909, 3.9901], atol=1e-3)
    assert doc["report"]["converged"]


def test_solve_writes_trace_history(capsys, tmp_path):
    code, out, _ = run(capsys, "solve", "--preset", "scalar", "--init", "100", "--out", str(tmp_path / "s_"))
    assert code == 0
    path = tmp_path / "s_trace_history.csv"
    assert json.loads(out)["files"] == [str(path)]
    assert path.read_text().startswith("k,trace_P1,trace_P2,trace_P3\n0,100.0,")


def test_demo_bound(capsys):
    code, out, _ = run(capsys, "demo-bound")
    doc = json.loads(out)
    assert doc["bound"] == 7.0 and doc["bound_exceeds_exact"]
    assert doc["exact"] == pytest.approx(3.9901, abs=1e-4)


def test_certify_scalar(capsys):
    code, out, _ = run(capsys, "certify", "--preset", "scalar")
    doc = json.loads(out)
    assert code == 0 and doc["uniqueness_certified"]
    assert doc["contraction"]["certified"] and doc["schur"]["lyapunov_ok"]
    assert doc["validation"]["L_primitive"]["passed"]


def test_steady_dump(capsys, tmp_path):
    code, out, _ = run(capsys, "steady", "--preset", "scalar", "--dump-pcal", "--out", str(tmp_path / "x_"))
    doc = json.loads(out)
    assert code == 0 and len(doc["per_node_trace"]) == 3
    assert (tmp_path / "x_pcal.txt").exists() and (tmp_path / "x_steady.csv").exists()


def test_sweep_icf(capsys):
    code, out, _ = run(capsys, "sweep", "--preset", "scalar", "--variant", "icf", "--depths", "1,30",
                       "--epsilon", "0.3")
    doc = json.loads(out)
    assert code == 0
    np.testing.assert_allclose(doc["traces"][-1], (1 + 5 ** 0.5) / 2, atol=1e-2)


def test_simulate_small(capsys, tmp_path):
    code, out, _ = run(capsys, "simulate", "--preset", "scalar", "--trials", "20", "--horizon", "10",
                       "--out", str(tmp_path) + "/")
    doc = json.loads(out)
    assert code == 0 and doc["trials"] == 20 and len(doc["files"]) == 3


def test_config_file(capsys, tmp_path):
    path = tmp_path / "p.yaml"
    path.write_text(SCALAR_YAML)
    code, out, _ = run(capsys, "solve", "--config", str(path))
    assert code == 0
    np.testing.assert_allclose(json.loads(out)["P"], [2.0492, 2.3909, 3.9901], atol=1e-3)


def test_error_line(capsys):
    code, out, err = run(capsys, "solve", "--preset", "mystery")
    assert code == 1 and out == ""
    doc = json.loads(err.strip())
    assert doc["type"] == "PreconditionError" and "unknown preset" in doc["error"]


def test_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["solve", "--variant", "kf"])
    assert exc.value.code == 2


def test_console_script():
    res = subprocess.run([sys.executable, "-m", "harmonic_riccati.cli", "demo-bound"], capture_output=True, text=True)
    assert res.returncode == 0 and json.loads(res.stdout)["bound"] == 7.0
