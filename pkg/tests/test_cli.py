import csv
import json

import pytest

from scalable_abc.cli import (DECAY_COLUMNS, GAUSSIAN_COLUMNS, SV_COLUMNS, format_value, main)

GAUSS_CFG = {"n": 500, "d_list": [2, 4], "rates": [0.02, 0.4], "replicates": 2, "N": 5000,
             "mles_restarts": 1}
SV_CFG = {"n_list": [40], "replicates": 2, "N": 1500, "N0": 150, "pilot_N": 1000}
DECAY_CFG = {"n_list": [100, 400], "N": 20000, "N_iis": 5000, "iis": {"N": 5000, "N0": 500}}


def write_cfg(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def header(path):
    with open(path, newline="") as fh:
        return next(csv.reader(fh))


@pytest.mark.parametrize("command,cfg,csv_name,columns", [
    ("run-gaussian", GAUSS_CFG, "gaussian_mse.csv", GAUSSIAN_COLUMNS),
    ("run-sv", SV_CFG, "sv_mse.csv", SV_COLUMNS),
    ("decay", DECAY_CFG, "decay.csv", DECAY_COLUMNS),
])
def test_commands_write_schema_and_rerun_identically(tmp_path, command, cfg, csv_name, columns):
    conf = write_cfg(tmp_path, cfg)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main([command, "--config", conf, "--seed", "42", "--out", str(a)]) == 0
    assert header(a / csv_name) == columns
    raw = (a / csv_name).read_bytes()
    assert b"\r" not in raw
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["seed"] == 42 and manifest["command"] == command
    assert main([command, "--config", str(a / "manifest.json"), "--out", str(b)]) == 0
    assert (b / csv_name).read_bytes() == raw


def test_gaussian_columns_exact():
    assert GAUSSIAN_COLUMNS == ["method", "d", "summary_variant", "eps_or_rate", "coord", "mse",
                                "mse_times_n", "replicates", "seed"]
    assert SV_COLUMNS == ["method", "n", "coord", "mse", "mse_times_n", "ratio_vs_rabc",
                          "replicates", "seed"]
    assert DECAY_COLUMNS == ["proposal", "n", "p_acc_hat", "ess", "eps"]


@pytest.mark.parametrize("command", ["run-gaussian", "run-sv"])
def test_zero_replicates_is_config_error(tmp_path, command):
    assert main([command, "--replicates", "0", "--seed", "1", "--out", str(tmp_path)]) == 2


def test_decay_zero_budget_is_config_error(tmp_path):
    assert main(["decay", "--N", "0", "--seed", "1", "--out", str(tmp_path)]) == 2


def test_bad_config_file(tmp_path):
    conf = write_cfg(tmp_path, {"not_a_field": 1})
    assert main(["run-gaussian", "--config", conf, "--out", str(tmp_path)]) == 2
    assert main(["run-gaussian", "--config", str(tmp_path / "missing.json"),
                 "--out", str(tmp_path)]) == 2


def test_sampler_failure_exit_code(tmp_path):
    conf = write_cfg(tmp_path, dict(GAUSS_CFG, rates=[], eps_values=[1e-14]))
    assert main(["run-gaussian", "--config", conf, "--seed", "1", "--out", str(tmp_path)]) == 1


def test_entropy_seed_is_recorded(tmp_path):
    conf = write_cfg(tmp_path, DECAY_CFG)
    assert main(["decay", "--config", conf, "--out", str(tmp_path)]) == 0
    seed = json.loads((tmp_path / "manifest.json").read_text())["seed"]
    assert 0 <= seed < 2 ** 64


def test_sample_command(tmp_path):
    out = tmp_path / "s"
    args = ["sample", "--truth", "1,1.4142135623730951", "--n", "1000", "--N", "20000",
            "--seed", "3", "--out", str(out)]
    assert main(args) == 0
    assert header(out / "particles.csv") == ["theta_1", "theta_2", "weight", "distance"]
    rep = header(out / "report.csv")
    assert {"ess", "n_acc", "p_acc_hat", "h_hat_1", "sigma_is_hat_2", "mcv_hat_1"} <= set(rep)
    first = (out / "particles.csv").read_bytes()
    assert main(args + ["--workers", "3"]) == 0
    assert (out / "particles.csv").read_bytes() == first


def test_sample_from_summary_file(tmp_path):
    s_obs = tmp_path / "s.csv"
    s_obs.write_text("s1,s2,s3\n6.2,0.26,-9.5\n")
    out = tmp_path / "o"
    assert main(["sample", "--model", "sv", "--n", "100", "--s-obs", str(s_obs), "--N", "3000",
                 "--method", "iis", "--seed", "1", "--out", str(out)]) == 0
    assert header(out / "particles.csv")[:3] == ["theta_1", "theta_2", "theta_3"]


def test_sample_validation(tmp_path):
    assert main(["sample", "--seed", "1", "--out", str(tmp_path)]) == 2
    assert main(["sample", "--truth", "0,1", "--d", "3", "--n", "100", "--N", "100",
                 "--rate", "2", "--seed", "1", "--out", str(tmp_path)]) == 2


def test_format_value():
    assert format_value(0.1) == "0.10000000000000001"
    assert format_value(3) == "3"
    assert format_value("rate=0.5") == "rate=0.5"
    assert format_value(float("nan")) == "nan"
