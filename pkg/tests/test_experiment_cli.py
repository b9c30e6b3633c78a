import json

import pytest

from auxweight.cli import main as cli_main
from auxweight.errors import ConfigError
from auxweight.experiment import (config_from_dict, report_directory,
                                  rescale_experiment, run_experiment)
from auxweight.records import read_csv


def base_config(tmp_path, **train_overrides):
    train = {"scheme": "mtl", "strategy": "aux-ts-all-sims", "epochs": 4,
             "batch_size": 10, "hidden_dim": 8, "patience": 50,
             "aux_tasks": ["edge_generation", "attribute_generation"]}
    train.update(train_overrides)
    return {
        "name": "t",
        "dataset": {"kind": "sbm", "blocks": [20, 20], "p_in": 0.3, "p_out": 0.03,
                    "feature_dim": 6, "noise": 0.3, "seed": 3},
        "train": train,
        "seeds": [0, 1],
        "output_dir": str(tmp_path / "out"),
    }


def test_config_parsing_and_fingerprint(tmp_path):
    raw = base_config(tmp_path)
    cfg = config_from_dict(raw)
    assert cfg.train.epochs == 4
    assert cfg.fingerprint() == config_from_dict(base_config(tmp_path)).fingerprint()
    raw2 = base_config(tmp_path)
    raw2["train"]["epochs"] = 5
    assert config_from_dict(raw2).fingerprint() != cfg.fingerprint()


def test_unknown_train_field_rejected(tmp_path):
    raw = base_config(tmp_path)
    raw["train"]["learning_rate"] = 0.1
    with pytest.raises(ConfigError):
        config_from_dict(raw)


def test_no_seeds_rejected(tmp_path):
    raw = base_config(tmp_path)
    raw["seeds"] = []
    with pytest.raises(ConfigError):
        config_from_dict(raw)


def test_run_experiment_writes_all_files(tmp_path):
    cfg = config_from_dict(base_config(tmp_path))
    report = run_experiment(cfg)
    out = tmp_path / "out"
    for seed in (0, 1):
        assert (out / f"seed{seed}.csv").exists()
        assert (out / f"seed{seed}.summary.json").exists()
    assert (out / "aggregate.json").exists()
    assert report["completed"] == 2
    agg = json.loads((out / "aggregate.json").read_text())
    assert "micro_f1" in agg["aggregate"]


def test_rerun_is_byte_identical(tmp_path):
    cfg = config_from_dict(base_config(tmp_path))
    run_experiment(cfg)
    first = (tmp_path / "out" / "seed0.csv").read_bytes()
    run_experiment(cfg)
    assert (tmp_path / "out" / "seed0.csv").read_bytes() == first


def test_env_var_prefixes_relative_output(tmp_path, monkeypatch):
    raw = base_config(tmp_path)
    raw["output_dir"] = "rel/out"
    raw["seeds"] = [0]
    raw["train"]["epochs"] = 1
    monkeypatch.setenv("AUXWEIGHT_OUT", str(tmp_path / "root"))
    run_experiment(config_from_dict(raw))
    assert (tmp_path / "root" / "rel" / "out" / "seed0.csv").exists()


def test_rescale_grid_and_bit_identity(tmp_path):
    raw = base_config(tmp_path, strategy="aux-ts-all-sims")
    raw["seeds"] = [0]
    cfg = config_from_dict(raw)
    plain = run_experiment(cfg, out_dir=str(tmp_path / "plain"))
    result = rescale_experiment(cfg, out_dir=str(tmp_path / "grid"))
    assert sorted(result["matrix"]) == ["edge=1 attr=1", "edge=1 attr=5",
                                        "edge=5 attr=1", "edge=5 attr=5"]
    # the (1,1) cell is bit-identical to the plain run with the same seed
    base_rows = read_csv(tmp_path / "plain" / "seed0.csv")
    cell_rows = read_csv(tmp_path / "grid" / "edge1_attr1" / "seed0.csv")
    assert base_rows == cell_rows
    assert plain["aggregate"]["micro_f1"] == result["matrix"]["edge=1 attr=1"]["micro_f1"]


def test_rescale_scales_losses_exactly_at_step_zero(tmp_path):
    raw = base_config(tmp_path, strategy="fixed", scheme="pf")
    raw["train"]["pretrain_epochs"] = 2
    raw["seeds"] = [0]
    cfg = config_from_dict(raw)
    rescale_experiment(cfg, scales=((1, 1), (5, 1)), out_dir=str(tmp_path / "g2"))
    rows_11 = read_csv(tmp_path / "g2" / "edge1_attr1" / "seed0.csv")
    rows_51 = read_csv(tmp_path / "g2" / "edge5_attr1" / "seed0.csv")
    # edge task is task_id 1; its step-0 pretrain loss must be exactly 5x
    first_11 = next(r for r in rows_11 if r.step == 0 and r.task_id == 1)
    first_51 = next(r for r in rows_51 if r.step == 0 and r.task_id == 1)
    assert first_51.loss == 5.0 * first_11.loss
    one_11 = next(r for r in rows_11 if r.step == 0 and r.task_id == 2)
    one_51 = next(r for r in rows_51 if r.step == 0 and r.task_id == 2)
    assert one_51.loss == one_11.loss


def test_rescale_requires_both_tasks(tmp_path):
    raw = base_config(tmp_path)
    raw["train"]["aux_tasks"] = ["edge_generation"]
    with pytest.raises(ConfigError):
        rescale_experiment(config_from_dict(raw))


def test_report_directory_reaggregates(tmp_path):
    cfg = config_from_dict(base_config(tmp_path))
    report = run_experiment(cfg)
    again = report_directory(tmp_path / "out")
    assert again["completed"] == 2
    assert again["aggregate"]["micro_f1"]["mean"] == \
        report["aggregate"]["micro_f1"]["mean"]


def test_cli_run_and_report(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(base_config(tmp_path)))
    assert cli_main(["run", str(cfg_path)]) == 0
    out = capsys.readouterr().out
    assert "2/2 seeds completed" in out
    assert cli_main(["report", str(tmp_path / "out")]) == 0
    assert "2 seeds completed" in capsys.readouterr().out


def test_cli_pretrain_writes_checkpoints(tmp_path):
    raw = base_config(tmp_path, scheme="pf")
    raw["train"]["pretrain_epochs"] = 2
    raw["seeds"] = [0]
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(raw))
    assert cli_main(["pretrain", str(cfg_path)]) == 0
    assert (tmp_path / "out" / "pretrain_seed0.bin").exists()
    assert (tmp_path / "out" / "pretrain_seed0.manifest.json").exists()


def test_cli_rescale_custom_grid(tmp_path, capsys):
    raw = base_config(tmp_path)
    raw["seeds"] = [0]
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(raw))
    assert cli_main(["rescale", str(cfg_path), "--grid", "1,1;2,2"]) == 0
    out = capsys.readouterr().out
    assert "edge=1.0 attr=1.0" in out and "edge=2.0 attr=2.0" in out


def test_cli_reports_config_errors(tmp_path, capsys):
    cfg_path = tmp_path / "bad.json"
    raw = base_config(tmp_path)
    raw["train"]["strategy"] = "nope"
    cfg_path.write_text(json.dumps(raw))
    assert cli_main(["run", str(cfg_path)]) == 2
    assert "error" in capsys.readouterr().err


def test_cli_nonzero_exit_when_seed_aborts(tmp_path):
    raw = base_config(tmp_path)
    raw["train"]["divergence_limit"] = 1e-9
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(raw))
    assert cli_main(["run", str(cfg_path)]) == 1
