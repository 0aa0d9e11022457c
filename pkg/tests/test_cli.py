"""End-to-end CLI tests on desk-tiny configurations."""

import json

import numpy as np
import pytest

from slicescale import network_model as nm
from slicescale.cli import main

TINY = """
agent = wcsac
seed = 3
dti_count = 3
ttis_per_dti = 5
eval_episodes = 3
epochs = 2
episodes_per_epoch = 2
traffic_source = constant
constant_level = 3.0
wcsac.hidden = (8, 8)
wcsac.batch_size = 16
wcsac.start_steps = 8
wcsac.update_after = 8
"""


@pytest.fixture()
def tiny_config(tmp_path):
    path = tmp_path / "tiny.cfg"
    # tuples are not config-file syntax; write the list-free variant
    path.write_text(TINY.replace("wcsac.hidden = (8, 8)\n", "")
                    + "wcsac.replay_capacity = 2000\n")
    return path


def test_gen_and_fit_model(tmp_path, capsys):
    samples = tmp_path / "samples.csv"
    model_csv = tmp_path / "model.csv"
    assert main(["gen-model", "--samples-per-cell", "5", "--seed", "2",
                 "--out", str(samples)]) == 0
    assert main(["fit-model", "--samples", str(samples),
                 "--out", str(model_csv)]) == 0
    model = nm.load_model(model_csv)
    assert model.shape == (5, 8)
    out = capsys.readouterr().out
    assert "wrote 200 samples" in out and "fitted 5x8 grid" in out


def test_train_evaluate_cycle(tmp_path, tiny_config, capsys):
    out_dir = tmp_path / "run"
    assert main(["train", "--config", str(tiny_config), "--out", str(out_dir)]) == 0
    assert (out_dir / "checkpoints" / "best.npz").exists()
    assert (out_dir / "checkpoints" / "last.npz").exists()
    assert (out_dir / "metrics.csv").exists()
    assert (out_dir / "curves.csv").exists()
    summary = json.loads((out_dir / "summary.json").read_text())
    assert summary["command"] == "train"
    assert len(summary["curves"]) == 2

    eval_dir = tmp_path / "eval"
    log = tmp_path / "ep.jsonl"
    assert main(["evaluate", "--config", str(tiny_config),
                 "--checkpoint", str(out_dir / "checkpoints" / "best.npz"),
                 "--out", str(eval_dir), "--episodes", "2",
                 "--episode-log", str(log)]) == 0
    assert (eval_dir / "metrics.csv").exists()
    assert len(log.read_text().splitlines()) == 2 * 3  # episodes * dti_count


def test_evaluate_pred_alloc_without_checkpoint(tmp_path, capsys):
    cfg = tmp_path / "pa.cfg"
    cfg.write_text("agent = pred-alloc\ndti_count = 3\nttis_per_dti = 5\n"
                   "traffic_source = constant\nconstant_level = 5.0\n")
    out_dir = tmp_path / "pa"
    assert main(["evaluate", "--config", str(cfg), "--out", str(out_dir),
                 "--episodes", "2"]) == 0
    assert "bandwidth 80.0%" in capsys.readouterr().out


def test_evaluate_requires_checkpoint_for_agents(tmp_path, tiny_config):
    with pytest.raises(SystemExit, match="checkpoint"):
        main(["evaluate", "--config", str(tiny_config), "--out", str(tmp_path / "x")])


def test_sweeps_cli(tmp_path, capsys):
    cfg = tmp_path / "pa.cfg"
    cfg.write_text("agent = pred-alloc\ndti_count = 3\nttis_per_dti = 5\n"
                   "eval_episodes = 2\n")
    out_dir = tmp_path / "sweep"
    assert main(["sweep-conditions", "--config", str(cfg), "--out", str(out_dir),
                 "--d-values=-2,0,2", "--episodes", "2"]) == 0
    summary = json.loads((out_dir / "summary.json").read_text())
    assert summary["sweeps"][0]["values"] == [-2.0, 0.0, 2.0]
    assert (out_dir / "curves" / "sweep_condition_d.png").exists()

    out_dir2 = tmp_path / "sweepn"
    assert main(["sweep-noise", "--config", str(cfg), "--out", str(out_dir2),
                 "--sigmas", "0,0.4", "--episodes", "2"]) == 0
    assert "random-predictor" in capsys.readouterr().out


def test_finetune_cli(tmp_path, tiny_config):
    out_dir = tmp_path / "run"
    main(["train", "--config", str(tiny_config), "--out", str(out_dir)])
    ft_dir = tmp_path / "ft"
    assert main(["finetune", "--config", str(tiny_config),
                 "--checkpoint", str(out_dir / "checkpoints" / "best.npz"),
                 "--out", str(ft_dir), "--epochs", "1"]) == 0
    assert (ft_dir / "checkpoints" / "finetuned.npz").exists()
    summary = json.loads((ft_dir / "summary.json").read_text())
    assert len(summary["records"]) == 2  # pre and post


def test_report_reemission(tmp_path, tiny_config):
    out_dir = tmp_path / "run"
    main(["train", "--config", str(tiny_config), "--out", str(out_dir)])
    re_dir = tmp_path / "re"
    assert main(["report", "--summary", str(out_dir / "summary.json"),
                 "--out", str(re_dir)]) == 0
    assert (re_dir / "metrics.csv").read_bytes() == \
        (out_dir / "metrics.csv").read_bytes()
    assert (re_dir / "curves.csv").read_bytes() == \
        (out_dir / "curves.csv").read_bytes()
