import json
import subprocess
import sys

import pytest

from glass_complexity.cli import main, run
from glass_complexity.output import SCHEMA_VERSION, config_hash, git_blob_sha1


def run_json(capsys, argv):
    code = run(argv)
    out = capsys.readouterr().out
    return code, json.loads(out)


def test_git_blob_hash_matches_git():
    # `printf hello | git hash-object --stdin`
    assert git_blob_sha1(b"hello") == "b6fc4c620b67d95f953a5c1c1230aaab5db5a1b0"


def test_complexity_semicircle_edge(capsys):
    code, doc = run_json(capsys, ["complexity", "--p", "3", "--q", "3", "--gamma", "0.5"])
    assert code == 0
    res = doc["result"]
    assert abs(res["e_inf"] - 1.8257) <= 1e-3
    assert res["passed"] and all(res["checks"].values())
    assert doc["schema_version"] == SCHEMA_VERSION
    assert doc["input_hash"] == config_hash(doc["config"])


def test_two_point_gap(capsys):
    code, doc = run_json(capsys, ["two-point", "--p", "10", "--q", "10", "--gamma", "0.5", "--E", "-2.0"])
    assert code == 0
    assert abs(doc["result"]["gap"]) <= 1e-8
    assert doc["result"]["argmax"] == [0.0, 0.0]


def test_verify_lemmas_headline(capsys):
    code, doc = run_json(capsys, ["verify-lemmas", "--p", "96", "--q", "96", "--gamma", "0.5",
                                  "--instances", "100"])
    assert code == 0
    assert abs(doc["result"]["sigma_hat_at_eth"] - (-0.002782)) <= 1e-5
    assert doc["result"]["e0_lt_eth"] is True


def test_measure_files_and_rerun_bytes(tmp_path):
    outs = []
    for k in range(2):
        d = tmp_path / f"run{k}"
        assert main(["measure", "--p", "2", "--q", "3", "--gamma", "0.4", "--format", "both", "--out", str(d)]) == 0
        outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
    assert outs[0] == outs[1]
    assert set(outs[0]) == {"measure.json", "measure_density.csv"}
    csv_head = outs[0]["measure_density.csv"].decode().splitlines()
    doc = json.loads(outs[0]["measure.json"])
    assert csv_head[0].startswith(f"# schema_version={SCHEMA_VERSION} input_hash={doc['input_hash']}")
    assert csv_head[1] == "x,density,density_block1,density_block2"


def test_worker_count_not_in_config(capsys):
    _, a = run_json(capsys, ["mc-spectrum", "--N", "40", "--samples", "3", "--workers", "1", "--w1-tol", "1"])
    _, b = run_json(capsys, ["mc-spectrum", "--N", "40", "--samples", "3", "--workers", "2", "--w1-tol", "1"])
    assert a == b
    assert "workers" not in a["config"]


def test_failing_check_exits_one(capsys):
    code, doc = run_json(capsys, ["mc-spectrum", "--N", "40", "--samples", "2", "--w1-tol", "1e-9"])
    assert code == 1
    assert doc["result"]["passed"] is False


def test_invalid_params_exit_two(capsys):
    assert main(["complexity", "--p", "1"]) == 2
    assert "p, q must be >= 2" in capsys.readouterr().err
    assert main(["mc-landscape", "--p", "3", "--q", "3", "--N", "200", "--restarts", "1"]) == 2
    assert "budget" in capsys.readouterr().err


def test_bad_flags_exit_nonzero(capsys):
    assert main(["complexity", "--bogus"]) == 2
    assert main(["nonsense"]) == 2
    assert main(["measure", "--eta", "0,-1"]) == 2
    capsys.readouterr()


def test_covariance_subcommand(capsys):
    code, doc = run_json(capsys, ["covariance", "--p", "3", "--q", "4", "--samples", "2", "--grid", "40"])
    assert code == 0
    assert set(doc["result"]["checks"]) >= {"table_matches_oracle", "det_closed_matches_assembled",
                                            "sigma_E_identity", "hessian_HL_positive_definite"}


def test_workers_env_fallback(monkeypatch, capsys):
    monkeypatch.setenv("GLASS_COMPLEXITY_WORKERS", "2")
    code, _ = run_json(capsys, ["mc-spectrum", "--N", "30", "--samples", "2", "--w1-tol", "1"])
    assert code == 0


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "glass_complexity", "complexity", "--p", "3", "--q", "3"],
                          capture_output=True, text=True, timeout=300)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["command"] == "complexity"
