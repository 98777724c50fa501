import json

import numpy as np
import pytest

from nnmpc.cli import main
from nnmpc.config import AppConfig, config_from_dict, load_config
from nnmpc.errors import ConfigError

from conftest import closed_form_steady_state


def run_cli(capsys, argv):
    code = main(argv)
    out = capsys.readouterr().out
    return code, json.loads(out)


def test_steady_state_subcommand(capsys):
    code, doc = run_cli(capsys, ["steady-state"])
    assert code == 0
    assert doc["residual_inf_norm"] < 1e-10
    assert np.max(np.abs(np.array(doc["x_s"]) - closed_form_steady_state())) < 1e-9


def test_linearize_subcommand_with_ts_flag(capsys):
    code, d1 = run_cli(capsys, ["linearize"])
    assert code == 0 and d1["ts"] == 0.1
    code, d2 = run_cli(capsys, ["linearize", "--ts", "0.2"])
    assert code == 0 and d2["ts"] == 0.2
    A1 = np.array(d1["A"])
    A2 = np.array(d2["A"])
    assert np.max(np.abs(A2 - A1 @ A1)) < 1e-9  # doubling ts squares A


def test_mpc_step_subcommand(capsys):
    code, doc = run_cli(capsys, ["mpc-step", "--state", "2.18,6.0,0.87"])
    assert code == 0
    assert 0.0 <= doc["u0"] < 5.0
    assert doc["status"] == "optimal"
    assert doc["kkt_residuals"]["stationarity"] < 1e-8


def test_mpc_step_infeasible_state_is_domain_error(capsys):
    code, doc = run_cli(capsys, ["mpc-step", "--state", "0,1000,0"])
    assert code == 1
    assert doc["error"] == "InfeasibleError"


def test_malformed_state_is_usage_error(capsys):
    code, doc = run_cli(capsys, ["mpc-step", "--state", "1,2"])
    assert code == 2
    assert doc["error"] == "usage"


def test_qp_selftest_subcommand(capsys):
    code, doc = run_cli(capsys, ["qp-selftest", "--n", "10"])
    assert code == 0
    assert doc["failed"] == 0


def test_invalid_config_rejected_before_compute(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"mpc": {"x_min": [0, 0, 2.0], "x_max": [10, 14, 1.1]}}))
    code, doc = run_cli(capsys, ["steady-state", "--config", str(bad)])
    assert code == 2
    assert doc["error"] == "config"
    assert "x_min" in doc["message"]


def test_unknown_config_section_rejected(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"mcp": {}}))
    code, doc = run_cli(capsys, ["steady-state", "--config", str(bad)])
    assert code == 2


def test_config_defaults_and_overrides(tmp_path):
    assert load_config(None) == AppConfig()
    cfg = config_from_dict({"plant": {"cA_feed": 3.0}, "mpc": {"horizon": 10},
                            "train": {"seed": 5}, "seed": 9})
    assert cfg.plant.cA_feed == 3.0
    assert cfg.mpc.horizon == 10
    assert cfg.train.seed == 5
    assert cfg.seed == 9
    with pytest.raises(ConfigError):
        config_from_dict({"plant": {"k9": 1.0}})


def test_missing_model_file_is_usage_error(tmp_path, capsys):
    code, doc = run_cli(capsys, ["nn-step", "--state", "1,2,0.5",
                                 "--model", str(tmp_path / "nope.json")])
    assert code == 2


def test_small_end_to_end_pipeline(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({
        "train": {"max_epochs": 40, "seed": 1},
        "harness": {"steps": 15, "disturbance": {"offset_cB": -0.5, "step": 5}},
    }))
    ds = tmp_path / "ds.csv"
    model = tmp_path / "model.json"
    traj = tmp_path / "traj.csv"
    rep1, rep2 = tmp_path / "rep1.json", tmp_path / "rep2.json"

    code, doc = run_cli(capsys, ["gen-dataset", "--nk", "64", "--out", str(ds),
                                 "--config", str(cfg_path)])
    assert code == 0 and doc["n_kept"] + doc["n_dropped"] == 64

    code, doc = run_cli(capsys, ["train", "--dataset", str(ds), "--out", str(model),
                                 "--config", str(cfg_path)])
    assert code == 0 and doc["epochs_run"] <= 40

    code, doc = run_cli(capsys, ["nn-step", "--state", "2.2,3.9,0.9",
                                 "--model", str(model)])
    assert code == 0 and 0.0 <= doc["u0"] <= 10.0

    code, doc = run_cli(capsys, ["simulate", "--controller", "nn", "--model", str(model),
                                 "--x0", "1.0,2.0,0.5", "--out", str(traj),
                                 "--config", str(cfg_path), "--disturb"])
    assert code == 0 and doc["input_violations"] == 0
    assert traj.read_text().startswith("t,cA,cB,cC,u,controller")

    code, doc = run_cli(capsys, ["simulate", "--controller", "mpc", "--x0", "1.0,2.0,0.5",
                                 "--out", str(tmp_path / "t2.csv"), "--config", str(cfg_path)])
    assert code == 0 and not doc["aborted"]

    for rep in (rep1, rep2):
        code, doc = run_cli(capsys, ["evaluate", "--n", "3", "--steps", "15", "--seed", "1",
                                     "--model", str(model), "--out", str(rep),
                                     "--config", str(cfg_path)])
        assert code == 0 and doc["n_runs"] == 3
    assert rep1.read_bytes() == rep2.read_bytes()
