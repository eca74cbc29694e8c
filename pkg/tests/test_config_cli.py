import json
import os
import subprocess
import sys

import pytest

from hessbundle.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_IO, EXIT_OK, main
from hessbundle.config import DEFAULTS, SCHEMA, RunConfig, load_config
from hessbundle.errors import ConfigurationError


def _write(tmp_path, **fields):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"schema": SCHEMA, **fields}))
    return str(path)


def test_defaults_valid():
    cfg = load_config()
    assert cfg.n == 2 and cfg.N == 16 and cfg.k == 2
    assert cfg.data == DEFAULTS


@pytest.mark.parametrize(
    "fields",
    [
        {"k": 3},
        {"N": 12},
        {"N": 4},
        {"n": 4, "k": 1},
        {"band": 6},
        {"m": [1, 2, 3]},
        {"amplitude": -1},
        {"solver": {"tol": 0}},
        {"solver": {"start": "nowhere"}},
        {"path": {"kinds": ["spline"]}},
        {"samples": {"t_samples": 1}},
        {"typo": 1},
        {"solver": {"tolerance": 1e-6}},
        {"seed": True},
    ],
)
def test_schema_violations(fields):
    with pytest.raises(ConfigurationError):
        load_config(text=json.dumps({"schema": SCHEMA, **fields}))


def test_schema_version_required():
    with pytest.raises(ConfigurationError):
        load_config(text=json.dumps({"schema": "hbl-config/2"}))
    with pytest.raises(ConfigurationError):
        load_config(text="{not json")
    with pytest.raises(ConfigurationError):
        load_config(text="[1, 2]")


def test_digest_and_overrides():
    a = load_config()
    b = a.with_overrides({"seed": 4})
    assert a.digest() != b.digest() and b.seed == 4
    assert RunConfig(dict(b.data)).digest() == b.digest()
    with pytest.raises(ConfigurationError):
        a.with_overrides({"solver": {}})
    assert a.with_overrides({"m": [1, 2]}).levels == (1, 2)


def test_cli_k_greater_than_n(tmp_path, capsys):
    assert main(["verify", "--config", _write(tmp_path, k=3), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "k=3" in capsys.readouterr().err


def test_cli_bad_override(tmp_path):
    assert main(["verify", "--set", "seed", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["verify", "--set", "solver=1", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_cli_missing_config(tmp_path):
    assert main(["verify", "--config", str(tmp_path / "absent.json")]) == EXIT_IO


def test_cli_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["functional", "--set", "N=8", "--out", str(blocker / "sub")]) == EXIT_IO


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
def test_cli_read_only_directory(tmp_path):
    ro = tmp_path / "ro"
    ro.mkdir()
    ro.chmod(0o555)
    try:
        assert main(["functional", "--set", "N=8", "--out", str(ro)]) == EXIT_IO
    finally:
        ro.chmod(0o755)


def test_cli_verify_subset(tmp_path):
    cfg = _write(tmp_path, N=8, verify={"suites": ["geometry", "constant_model", "nakano_lemma"]}, samples={"nakano": 50})
    out = tmp_path / "new" / "dir"
    assert main(["verify", "--config", cfg, "--out", str(out)]) == EXIT_OK
    doc = json.loads((out / "verdict.json").read_text())
    assert doc["passed"] and set(doc["suites"]) == {"geometry", "constant_model", "nakano_lemma"}
    assert "seconds" not in json.dumps(doc)
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == "verify" and len(man["config_sha256"]) == 64
    assert set(man["versions"]) >= {"numpy", "scipy", "numba", "python"}
    assert "total" in man["timings_seconds"]


def test_cli_verify_failure_exit(tmp_path):
    # geometry identities hold to ~1e-15, so a 1e-18 tolerance must fail
    cfg = _write(tmp_path, N=8, verify={"suites": ["geometry"], "tol_scale": 1e-6})
    assert main(["verify", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_FAIL


def test_cli_unknown_suite(tmp_path):
    cfg = _write(tmp_path, N=8, verify={"suites": ["nope"]})
    assert main(["verify", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_cli_functional_deterministic(tmp_path):
    outs = []
    for i in range(2):
        out = tmp_path / f"f{i}"
        assert main(["functional", "--set", "N=8", "--set", "amplitude=0.2", "--out", str(out)]) == EXIT_OK
        outs.append((out / "functional.csv").read_bytes())
    assert outs[0] == outs[1]
    assert outs[0].decode().startswith("k,path_kind,Q,M0,logdet_term,M,lambda\n")


def test_cli_solve_report_and_positivity(tmp_path):
    cfg = _write(tmp_path, N=8, solver={"cone_sample": 8})
    run = tmp_path / "run"
    assert main(["solve", "--config", cfg, "--out", str(run)]) == EXIT_OK
    conv = json.loads((run / "convergence.json").read_text())
    assert conv["converged"] and conv["residual_sup"] < 1e-6
    assert main(["report", str(run)]) == EXIT_OK
    for name in ("plot_M.csv", "plot_residual.csv", "plot_cone_margin.csv"):
        assert (run / name).read_text().startswith("iter,")
    assert json.loads((run / "manifest.json").read_text())["command"] == "solve"
    pos = tmp_path / "pos"
    assert main(["positivity", "--config", cfg, "--metric", str(run / "metric.hbl"), "--out", str(pos)]) == EXIT_OK
    reps = json.loads((pos / "positivity.json").read_text())["reports"]
    assert all(r["positive"] for r in reps)
    # start a second solve from the saved metric: already converged
    again = tmp_path / "again"
    assert main(["solve", "--config", cfg, "--start", str(run / "metric.hbl"), "--out", str(again)]) == EXIT_OK
    assert json.loads((again / "convergence.json").read_text())["iterations"] == 0


def test_cli_functional_with_snapshots(tmp_path):
    cfg = _write(tmp_path, N=8, solver={"cone_sample": 0, "max_iters": 2})
    run = tmp_path / "run"
    assert main(["solve", "--config", cfg, "--out", str(run)]) == EXIT_FAIL  # budget too small
    assert (run / "metric.hbl").exists()
    out = tmp_path / "f"
    snap = str(run / "metric.hbl")
    assert main(["functional", "--config", cfg, "--h0", snap, "--h", snap, "--out", str(out)]) == EXIT_OK
    rows = (out / "functional.csv").read_text().splitlines()[1:]
    assert all(abs(float(r.split(",")[5])) < 1e-12 for r in rows)


def test_cli_corrupt_snapshot(tmp_path):
    bad = tmp_path / "bad.hbl"
    bad.write_bytes(b"HBL1garbage")
    assert main(["positivity", "--set", "N=8", "--metric", str(bad), "--out", str(tmp_path / "o")]) == EXIT_IO
    assert not (tmp_path / "o" / "positivity.json").exists()


def test_cli_report_missing_run(tmp_path):
    assert main(["report", str(tmp_path / "nothing")]) == EXIT_IO


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "hessbundle", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "positivity" in out.stdout
