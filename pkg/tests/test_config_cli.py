import json
import os
from pathlib import Path

import numpy as np
import pytest

from ctxbo.cli import main
from ctxbo.config import (ComparisonSpec, ControllerSpec, OUTPUT_DIR_ENV,
                          comparison_from_dict, load_run_config,
                          run_config_from_dict, run_config_to_dict)
from ctxbo.errors import ConfigError


def _analytic_cfg(tmp_path, **overrides):
    d = {
        "evaluator": {"kind": "analytic", "benchmark": "quad1d", "noise_std": 0.01},
        "j_max": 2, "k_max": 2, "seed": 1,
        "output_dir": str(tmp_path / "out"),
    }
    d.update(overrides)
    return d


def test_run_config_parses_analytic(tmp_path):
    cfg = run_config_from_dict(_analytic_cfg(tmp_path))
    assert cfg.evaluator.kind == "analytic"
    assert cfg.z_domain.dim == 1
    assert cfg.j_max == 2


def test_run_config_requires_seed(tmp_path):
    d = _analytic_cfg(tmp_path)
    del d["seed"]
    with pytest.raises(ConfigError):
        run_config_from_dict(d)


def test_run_config_rejects_bad_budgets(tmp_path):
    with pytest.raises(ConfigError):
        run_config_from_dict(_analytic_cfg(tmp_path, j_max=0))
    with pytest.raises(ConfigError):
        run_config_from_dict(_analytic_cfg(tmp_path, k_max=0))


def test_run_config_cavsim_domains(tmp_path):
    cfg = run_config_from_dict({
        "evaluator": {"kind": "cavsim", "metric": {"n_s": 2}},
        "seed": 3, "output_dir": str(tmp_path)})
    assert cfg.z_domain.dim == 2
    np.testing.assert_allclose(cfg.z_domain.lower, [-2.0, -2.0])
    assert cfg.evaluator.metric.n_s == 2


def test_run_config_roundtrip_dict(tmp_path):
    cfg = run_config_from_dict(_analytic_cfg(tmp_path))
    again = run_config_from_dict(run_config_to_dict(cfg))
    assert run_config_to_dict(again) == run_config_to_dict(cfg)


def test_output_dir_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path / "forced"))
    cfg = run_config_from_dict(_analytic_cfg(tmp_path))
    assert cfg.output_dir == str(tmp_path / "forced")


def test_comparison_spec_validation():
    with pytest.raises(ConfigError):
        comparison_from_dict({"controllers": [
            {"kind": "fixed", "omega1": [0.1, 1.0]}]})  # needs two
    with pytest.raises(ConfigError):
        ControllerSpec(kind="fixed", omega1=[0.0, 1.0])
    with pytest.raises(ConfigError):
        ControllerSpec(kind="adaptive", model_path=None)
    spec = comparison_from_dict({
        "controllers": [
            {"kind": "fixed", "omega1": [0.1, 1.0]},
            {"kind": "fixed", "omega1": [0.1, 3.16]},
        ],
        "episodes": 3, "seed": 5})
    assert isinstance(spec, ComparisonSpec)
    assert spec.episodes == 3


# -- CLI ----------------------------------------------------------------------


def test_cli_learn_invalid_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"evaluator": {"kind": "analytic"},
                               "j_max": 0, "seed": 1}))
    code = main(["learn", str(bad)])
    assert code == 2
    assert "configuration error" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_cli_learn_missing_file_exit_code(tmp_path, capsys):
    code = main(["learn", str(tmp_path / "nope.json")])
    assert code == 4


def test_cli_learn_and_heatmap_roundtrip(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    out_dir = tmp_path / "run"
    cfg.write_text(json.dumps({
        "evaluator": {"kind": "analytic", "benchmark": "quad1d",
                      "noise_std": 0.01},
        "j_max": 3, "k_max": 3, "seed": 11,
        "output_dir": str(out_dir)}))
    assert main(["learn", str(cfg)]) == 0
    capsys.readouterr()
    model = out_dir / "solution_model.json"
    assert model.exists()
    assert (out_dir / "run_log.csv").exists()

    heat_dir = tmp_path / "heat"
    assert main(["heatmap", str(model), "--grid", "5",
                 "--out", str(heat_dir)]) == 0
    grids = sorted(heat_dir.glob("heatmap_z*.csv"))
    assert len(grids) == 1
    lines = grids[0].read_text().strip().splitlines()
    assert len(lines) == 1 + 5  # header + 5 grid points (1-D context)
    assert (heat_dir / "sampled_contexts.csv").exists()


def test_cli_heatmap_rejects_non_model(tmp_path, capsys):
    path = tmp_path / "x.json"
    path.write_text(json.dumps({"kind": "mystery"}))
    assert main(["heatmap", str(path)]) == 2


def test_cli_simulate_writes_trajectory(tmp_path, capsys):
    cfg = tmp_path / "sim.json"
    cfg.write_text(json.dumps({
        "evaluator": {"kind": "cavsim", "metric": {"n_s": 1}},
        "seed": 2, "output_dir": str(tmp_path / "simout")}))
    out = tmp_path / "traj.csv"
    code = main(["simulate", str(cfg), "--z", "0.0", "0.0",
                 "--theta", "0.0", "0.0", "--seed", "3",
                 "--out", str(out)])
    assert code == 0
    header = out.read_text().splitlines()[0]
    assert header == "t,p1,v1,a1,p2,v2,a2"
