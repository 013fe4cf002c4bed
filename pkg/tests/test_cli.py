import json

import numpy as np
import pytest

from ndeepc.cli import main
from ndeepc.config import load_config

SMALL_CONFIG = """
version: 1
seed: 11
plant: {mass: 1.0, length: 1.0, gravity: 9.81, damping: 0.1, ts: 0.033}
excitation: {range: [-2.0, 2.0], band: [0.0, 1.0], period: 80, num_sines: 6,
             freq_trials: 8, phase_trials: 1, seed: 3}
structure: {t_ini: 2, horizon: 3}
network: {hidden: [8], activation: tanh}
training: {learning_rate: 2.0e-3, epochs: 300, report_every: 100, seed: 4}
control: {q: 200.0, r: 0.5, lambda: 1.0e4, slack_weight: 1.0e4,
          u_min: -2.0, u_max: 2.0, y_min: -3.2, y_max: 3.2, formulation: p3}
reference: {kind: steps, levels: [0.2, -0.2], dwell: 10}
simulation: {t_sim: 25}
"""


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "experiment.yaml"
    path.write_text(SMALL_CONFIG)
    return path


def run(args):
    return main([str(a) for a in args])


def test_generate_train_certify_simulate(config_path, tmp_path, capsys):
    out = tmp_path / "out"
    assert run(["generate", "--config", config_path, "--out", out]) == 0
    data = (out / "data.csv").read_text().splitlines()
    assert data[0] == "k,u,y"
    assert len(data) - 1 == 80 + 2  # excitation record plus t_ini tail

    assert run(["train", "--config", config_path, "--out", out]) == 0
    captured = capsys.readouterr().out
    assert "feature data matrix: 8x" in captured
    weights = json.loads((out / "weights.json").read_text())
    assert weights["format"] == "ndeepc-weights"
    assert weights["meta"]["t_ini"] == 2
    loss_lines = (out / "training_loss.csv").read_text().splitlines()
    assert loss_lines[0] == "epoch,loss"
    cert = json.loads((out / "certificate.json").read_text())
    assert "certificate" in cert and "min_singular_value" in cert

    assert run(["certify", "--config", config_path, "--out", out]) == 0
    assert run(["simulate", "--config", config_path, "--out", out]) == 0
    log_lines = (out / "closed_loop_p3.csv").read_text().splitlines()
    assert log_lines[0] == "k,u,y,r,u_ref,solve_s,converged"
    assert len(log_lines) - 1 == 25
    metrics = json.loads((out / "metrics_p3.json").read_text())
    assert metrics["formulation"] == "p3"
    assert metrics["j_ise"] >= 0.0

    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "simulate"
    cfg = load_config(config_path)
    assert manifest["config_hash"] == cfg.config_hash()


def test_generate_deterministic_bytes(config_path, tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert run(["generate", "--config", config_path, "--out", out_a]) == 0
    assert run(["generate", "--config", config_path, "--out", out_b]) == 0
    assert (out_a / "data.csv").read_bytes() == (out_b / "data.csv").read_bytes()


def test_linear_formulation_needs_no_weights(config_path, tmp_path):
    out = tmp_path / "out"
    cfg_text = SMALL_CONFIG.replace("formulation: p3", "formulation: linear")
    linear_cfg = tmp_path / "linear.yaml"
    linear_cfg.write_text(cfg_text)
    assert run(["generate", "--config", linear_cfg, "--out", out]) == 0
    assert run(["simulate", "--config", linear_cfg, "--out", out]) == 0
    assert (out / "closed_loop_linear.csv").exists()


def test_compare_formulation_writes_table(config_path, tmp_path):
    out = tmp_path / "out"
    cfg_text = SMALL_CONFIG.replace("formulation: p3", "formulation: compare")
    cmp_cfg = tmp_path / "compare.yaml"
    cmp_cfg.write_text(cfg_text)
    assert run(["generate", "--config", cmp_cfg, "--out", out]) == 0
    assert run(["train", "--config", cmp_cfg, "--out", out]) == 0
    assert run(["simulate", "--config", cmp_cfg, "--out", out]) == 0
    table = (out / "compare.csv").read_text().splitlines()
    assert len(table) == 4  # header + p1 + p2 + p3
    for name in ("p1", "p2", "p3"):
        assert (out / f"closed_loop_{name}.csv").exists()
        assert (out / f"metrics_{name}.json").exists()


def test_missing_weights_is_config_error(config_path, tmp_path, capsys):
    out = tmp_path / "out"
    assert run(["generate", "--config", config_path, "--out", out]) == 0
    code = run(["simulate", "--config", config_path, "--out", out])
    assert code == 2
    assert "error: config:" in capsys.readouterr().err


def test_invalid_config_rejected(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text(SMALL_CONFIG.replace("period: 80", "period: 6"))
    code = run(["generate", "--config", bad, "--out", tmp_path / "out"])
    assert code == 2
    err = capsys.readouterr().err
    assert err.startswith("error: config:")


def test_unknown_key_rejected(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text(SMALL_CONFIG + "\nbogus_section: {a: 1}\n")
    assert run(["generate", "--config", bad, "--out", tmp_path / "out"]) == 2


def test_zero_amplitude_range_rejected(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text(SMALL_CONFIG.replace("range: [-2.0, 2.0]", "range: [1.0, 1.0]"))
    assert run(["generate", "--config", bad, "--out", tmp_path / "out"]) == 2


def test_config_hash_stable_and_sensitive(config_path, tmp_path):
    cfg_a = load_config(config_path)
    cfg_b = load_config(config_path)
    assert cfg_a.config_hash() == cfg_b.config_hash()
    other = tmp_path / "other.yaml"
    other.write_text(SMALL_CONFIG.replace("seed: 11", "seed: 12"))
    assert load_config(other).config_hash() != cfg_a.config_hash()


def test_config_column_bound_validation(tmp_path):
    # 1 + t_ini + horizon samples short of the regressor dimension
    bad = tmp_path / "bad.yaml"
    bad.write_text(SMALL_CONFIG.replace("period: 80", "period: 5")
                   .replace("num_sines: 6", "num_sines: 2"))
    assert main(["generate", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
