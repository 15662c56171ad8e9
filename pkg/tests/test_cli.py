import json
import subprocess
import sys

import numpy as np
import pytest

from ardkit import __version__
from ardkit.cli import RunConfig, main, read_config_file
from ardkit.dataio import DataValidationError, load_prefix

FAST = ["--chains", "2", "--iterations", "100", "--warmup", "100"]


def sim(tmp_path, name="d", seed=1, n=40):
    out = tmp_path / name
    code = main(["simulate", "--model", "barrier", "--out", str(out), "--seed", str(seed), "--set", "sample_n", str(n)])
    assert code == 0
    return out


@pytest.fixture()
def fitted(tmp_path):
    data = sim(tmp_path)
    post = tmp_path / "post"
    assert main(["fit", "--model", "er", "--data", str(data), "--out", str(post), "--seed", "3", *FAST]) == 0
    return data, post


def test_simulate_outputs_and_determinism(tmp_path):
    a = sim(tmp_path, "a")
    b = sim(tmp_path, "b")
    for suffix in (".ard.csv", ".meta.json"):
        assert (tmp_path / f"a{suffix}").read_bytes() == (tmp_path / f"b{suffix}").read_bytes()
    truth = json.loads((tmp_path / "a.truth.json").read_text())
    assert truth["provenance"]["seed"] == 1
    assert truth["provenance"]["tool_version"] == __version__
    cfg = json.loads((tmp_path / "a.config.json").read_text())
    assert cfg["config"]["sample_n"] == 40
    assert load_prefix(a).fingerprint == cfg["dataset_fingerprint"]
    c = sim(tmp_path, "c", seed=2)
    assert load_prefix(c).fingerprint != load_prefix(b).fingerprint


def test_simulate_from_config_file(tmp_path):
    cfg = tmp_path / "gen.json"
    cfg.write_text(json.dumps({"sample_n": 7, "seed": 5}))
    assert main(["simulate", "--model", "barrier", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 0
    assert load_prefix(tmp_path / "x").n == 7


def test_fit_diagnose_ppc_report(fitted, tmp_path):
    data, post = fitted
    manifest = json.loads((post / "manifest.json").read_text())
    assert manifest["model"] == "er"
    summary = json.loads((post / "summary.json").read_text())
    assert summary["provenance"]["seed"] == 3 and "log_d" in summary["summary"]

    assert main(["diagnose", "--posterior", str(post), "--trace", "log_d,beta[0]"]) == 0
    diag = json.loads((post / "diagnostics.json").read_text())
    assert set(diag["rhat"]) == set(manifest["names"])
    trace = (post / "trace.csv").read_text().splitlines()
    assert trace[0] == "chain,iteration,parameter,value" and len(trace) == 1 + 2 * 2 * 100
    assert (post / "trace.csv.provenance.json").exists()

    assert main(["ppc", "--posterior", str(post), "--data", str(data), "--m", "0,1"]) == 0
    ppc = json.loads((post / "ppc.json").read_text())
    assert ppc["m_set"] == [0, 1] and ppc["provenance"]["dataset_fingerprint"] == manifest["fingerprint"]
    assert (post / "ppc.csv").read_text().startswith("subpop,m,observed,lower,upper,contained")

    assert main(["report", "--posterior", str(post), "--data", str(data)]) == 0
    rep = json.loads((post / "report.json").read_text())
    assert "coverage_90" in rep and "true_mean_degree" in rep["degree"]
    assert (post / "report.subpops.csv.provenance.json").exists()
    assert (post / "report.degrees.csv").read_text().startswith("ego,posterior_mean_degree,true_degree")


def test_fit_is_reproducible(fitted, tmp_path):
    data, post = fitted
    again = tmp_path / "again"
    assert main(["fit", "--model", "er", "--data", str(data), "--out", str(again), "--seed", "3", *FAST]) == 0
    assert np.array_equal(np.load(post / "draws.npz")["draws"], np.load(again / "draws.npz")["draws"])


def test_config_file_and_set_override(tmp_path):
    data = sim(tmp_path)
    cfg = tmp_path / "run.cfg"
    cfg.write_text("model = vd\nchains = 2\niterations = 100\nwarmup = 50  # short\n")
    out = tmp_path / "p"
    assert main(["fit", "--data", str(data), "--out", str(out), "--config", str(cfg), "--set", "thin", "2", "--no-rescale"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["model"] == "vd"
    assert manifest["config"]["thin"] == 2
    assert manifest["rescaled"] is False


def test_ppc_rejects_other_dataset(fitted, tmp_path, capsys):
    _, post = fitted
    other = sim(tmp_path, "other", seed=9)
    assert main(["ppc", "--posterior", str(post), "--data", str(other)]) == 1
    assert "fit to dataset" in capsys.readouterr().err


def test_cv_command(tmp_path):
    data = sim(tmp_path, n=20)
    out = tmp_path / "cv.json"
    args = ["cv", "--models", "er,vd", "--data", str(data), "--folds", "2", "--out", str(out), *FAST]
    assert main(args) == 0
    doc = json.loads(out.read_text())
    assert {r["model"] for r in doc["rows"]} == {"er", "vd"}
    assert np.load(tmp_path / "cv.pointwise.npz")["er"].shape == (20, 30)
    assert main(["cv", "--models", "barrier", "--data", str(data), "--out", str(out)]) == 1


@pytest.mark.parametrize(
    "argv",
    [
        ["frobnicate"],
        [],
        ["fit", "--data", "x"],
        ["fit", "--model", "nope", "--data", "x", "--out", "y"],
        ["simulate", "--model", "er", "--out", "x"],
    ],
)
def test_usage_errors_exit_one(argv):
    assert main(argv) == 1


def test_validation_errors_exit_one(tmp_path, capsys):
    assert main(["fit", "--data", str(tmp_path / "missing"), "--out", str(tmp_path / "p")]) == 1
    data = sim(tmp_path)
    assert main(["fit", "--data", str(data), "--out", str(tmp_path / "p"), "--set", "colour", "red"]) == 1
    assert "unknown configuration keys" in capsys.readouterr().err
    assert main(["simulate", "--model", "latent", "--out", str(tmp_path / "s"), "--set", "zeta", "-1"]) == 1


def test_barrier_degree_cap_rejected(tmp_path, capsys):
    data = sim(tmp_path)
    code = main(["fit", "--model", "barrier", "--data", str(data), "--out", str(tmp_path / "p"), "--set", "max_degree", "1", *FAST])
    assert code == 1
    assert "max degree cap" in capsys.readouterr().err


def test_missing_posterior_exits_one(tmp_path):
    (tmp_path / "broken").mkdir()
    (tmp_path / "broken" / "manifest.json").write_text("{}")
    assert main(["diagnose", "--posterior", str(tmp_path / "broken")]) == 1


def test_runtime_failure_exits_two(tmp_path, monkeypatch, capsys):
    import ardkit.cli

    def boom(*args, **kwargs):
        raise RuntimeError("sampler exploded")

    monkeypatch.setattr(ardkit.cli, "run_chains", boom)
    data = sim(tmp_path)
    assert main(["fit", "--data", str(data), "--out", str(tmp_path / "p"), *FAST]) == 2
    assert "runtime failure" in capsys.readouterr().err


def test_read_config_file_forms(tmp_path):
    p = tmp_path / "a.json"
    p.write_text('{"chains": 3}')
    assert read_config_file(p) == {"chains": 3}
    p.write_text("chains = 3\nmodel = latent\nm_set = [0, 2]\n")
    assert read_config_file(p) == {"chains": 3, "model": "latent", "m_set": [0, 2]}
    p.write_text("chains 3\n")
    with pytest.raises(DataValidationError):
        read_config_file(p)
    assert RunConfig.from_sources({"chains": 3}, {"chains": 5}).chains == 5


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "ardkit", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and __version__ in res.stdout
    res = subprocess.run([sys.executable, "-m", "ardkit", "bogus"], capture_output=True, text=True)
    assert res.returncode == 1 and "invalid choice" in res.stderr
