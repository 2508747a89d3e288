"""Command-line harness: configuration, artifacts and exit codes."""

import json

import numpy as np
import pytest

from shelab.cli import ConfigError, load_config, run

DIRAC = {"atoms": [[0.0, 1.0]]}
PAM = {"mode": "pam", "lam": 1.0}
SIM = {"measure": DIRAC, "rho": PAM, "grid": {"L": 3.0, "dx": 0.1, "t_max": 0.2, "dt": 0.0025},
       "replicas": 40, "batch": 15, "save_every": 20, "save_window": [-1, 1], "seed": 7}


def _write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def _meta(out):
    return json.loads((out / "metadata.json").read_text())


def test_moments_reproduce_closed_forms(tmp_path):
    cfg = _write(tmp_path, {"measure": {"density": {"kind": "constant", "params": {"scale": 1.0}}},
                            "rho": PAM, "t": [0.5, 1.0], "x": {"linspace": [0, 1, 3]}, "p": [2, 4]})
    out = tmp_path / "m"
    assert run(["moments", "--config", cfg, "--out", str(out)]) == 0
    rows = json.loads((out / "moments.json").read_text())
    assert len(rows) == 6
    from shelab.moments import MomentKernel, kernel_H
    for r in rows:
        assert r["second_moment"] == pytest.approx(1.0 + kernel_H(MomentKernel(1.0, 1.0), r["t"]), rel=1e-14)
        assert r["bound_p4"] >= r["second_moment"]
    assert (out / "moments.csv").read_text().startswith("t,x,J0,second_moment")


def test_simulate_is_deterministic_across_threads(tmp_path):
    cfg = _write(tmp_path, SIM)
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["simulate", "--config", cfg, "--out", str(a), "--threads", "1"]) == 0
    assert run(["simulate", "--config", cfg, "--out", str(b), "--threads", "0"]) == 0
    for name in ("ensemble.csv", "moment_summary.csv", "moment_summary.json", "ensemble_metadata.json",
                 "metadata.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    c = tmp_path / "c"
    assert run(["simulate", "--config", cfg, "--out", str(c), "--seed", "8"]) == 0
    assert (a / "ensemble.csv").read_bytes() != (c / "ensemble.csv").read_bytes()


def test_metadata_round_trip(tmp_path):
    cfg = _write(tmp_path, SIM)
    out = tmp_path / "s"
    assert run(["simulate", "--config", cfg, "--out", str(out), "--format", "json"]) == 0
    meta = _meta(out)
    again = load_config("simulate", meta["config"])
    assert again.doc == meta["config"] and again.run_id == meta["run_id"]
    assert not (out / "moment_summary.csv").exists()
    assert "ensemble.csv" in meta["artifacts"]


def test_verify_and_fault_injection(tmp_path):
    assert run(["verify", "--trials", "20", "--out", str(tmp_path / "v")]) == 0
    rep = json.loads((tmp_path / "v" / "verify_report.json").read_text())
    assert all(r["passed"] for r in rep) and all(r["trials"] == 20 for r in rep)
    code = run(["verify", "--trials", "20", "--inject-fault", "--out", str(tmp_path / "f")])
    assert code == 3
    rep = json.loads((tmp_path / "f" / "verify_report.json").read_text())
    assert [r["lemma_id"] for r in rep if not r["passed"]] == ["gaussian_product"]
    assert _meta(tmp_path / "f")["acceptance"] is False


def test_synthetic_holder(tmp_path):
    cfg = _write(tmp_path, {"mode": "synthetic", "synthetic": {"beta": 0.3, "direction": "time", "replicas": 300},
                            "time_lags": [0.015625, 0.03125, 0.0625, 0.125, 0.25],
                            "expect": {"time": [0.25, 0.35]}})
    out = tmp_path / "h"
    assert run(["holder", "--config", cfg, "--out", str(out)]) == 0
    est = json.loads((out / "estimates.json").read_text())
    assert est["time"]["exponent"] == pytest.approx(0.3, abs=0.03)
    assert (out / "lags_time.csv").exists()


def test_weaklimit_expectation_failure_exits_3(tmp_path):
    doc = {"measure": DIRAC, "rho": PAM, "grid": {"L": 3.0, "dx": 0.1, "t_max": 0.2, "dt": 0.0025},
           "replicas": 100, "save_times": [0.1, 0.2], "save_window": [-2.5, 2.5],
           "phi": {"kind": "bump", "width": 1.0}, "t_list": [0.1, 0.2], "expect": {"decreasing": True}}
    out = tmp_path / "w"
    # errors grow from t = 0.1 to 0.2, so "decreasing" must fail
    assert run(["weaklimit", "--config", _write(tmp_path, doc), "--out", str(out)]) == 3
    rows = json.loads((out / "weaklimit.json").read_text())
    assert [r["t"] for r in rows] == [0.1, 0.2]


@pytest.mark.parametrize("doc,path", [
    ({"measure": DIRAC, "rho": {"mode": "pam", "lam": "x"}, "t": [1]}, "rho"),
    ({"measure": DIRAC, "rho": PAM, "t": [1], "bogus": 1}, "bogus"),
    ({"measure": DIRAC, "rho": PAM, "t": [-1]}, "t"),
    ({"measure": DIRAC, "rho": PAM, "t": [1], "p": [3]}, "p"),
    ({"measure": {"atoms": [[0, 0]]}, "rho": PAM, "t": [1]}, "measure"),
])
def test_config_errors_name_the_field(tmp_path, capsys, doc, path):
    assert run(["moments", "--config", _write(tmp_path, doc), "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert "config error" in err and path in err


def test_simulate_config_errors():
    bad = dict(SIM, grid={"L": 3.0, "dx": 0.1, "t_max": 0.2, "dt": 0.01})
    with pytest.raises(ConfigError, match="grid"):
        load_config("simulate", bad)
    with pytest.raises(ConfigError, match="save_window"):
        load_config("simulate", dict(SIM, save_window=[1, -1]))
    with pytest.raises(ConfigError, match="seed"):
        load_config("simulate", dict(SIM, seed=-1))


def test_flag_errors(tmp_path):
    assert run(["moments"]) == 1
    assert run(["moments", "--config", str(tmp_path / "missing.json")]) == 1
    assert run(["simulate", "--config", _write(tmp_path, SIM), "--trials", "3"]) == 1
    assert run(["simulate", "--config", _write(tmp_path, SIM), "--threads", "-1"]) == 1


def test_numerical_failure_exits_2(tmp_path):
    doc = dict(SIM, rho={"mode": "pam", "lam": 1e5}, replicas=2, batch=2)
    assert run(["simulate", "--config", _write(tmp_path, doc), "--out", str(tmp_path / "n")]) == 2


def test_power_law_mode(tmp_path):
    doc = {"mode": "power_law", "a": 0.75, "rho": PAM, "t": {"logspace": [-3, -1, 4]},
           "expect": {"increasing_as_t_decreases": True}}
    out = tmp_path / "p"
    assert run(["holder", "--config", _write(tmp_path, doc), "--out", str(out)]) == 0
    vals = [r["I_norm_sq"] for r in json.loads((out / "power_law.json").read_text())]
    assert np.all(np.diff(vals) < 0)
