"""
Tests for the command-line interface
"""
import json

import pytest

from infrastructure.persistence.codebook.codebook_store import save_codebook
from interface.cli.main import build_parser, main

TINY_CONFIG = """\
# tiny network for fast runs
base_channels = 8
channel_schedule = 8,16,16,16
primary_caps_dim = 4
caps_channels = 2
entity_caps = 4
entity_caps_dim = 4
epochs = 1
batch_size = 2
checkpoint_every = 2
device = cpu
"""


@pytest.fixture
def tiny_config_file(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY_CONFIG)
    return path


def test_help_exits_cleanly(capsys):
    with pytest.raises(SystemExit) as excinfo:
        main(["--help"])
    assert excinfo.value.code == 0
    assert "colorize" in capsys.readouterr().out


def test_missing_required_flag_is_a_usage_error():
    with pytest.raises(SystemExit) as excinfo:
        main(["train"])
    assert excinfo.value.code == 2


def test_no_command_prints_help():
    assert main([]) == 1


def test_parser_knows_every_command():
    parser = build_parser()
    for command in ("codebook", "train", "colorize", "eval", "probe", "ablate"):
        assert parser.parse_args(_minimal(command)).command == command


def _minimal(command):
    return {
        "codebook": ["codebook", "--data", "d"],
        "train": ["train", "--data", "d"],
        "colorize": ["colorize", "--checkpoint", "c", "--input", "i", "--output", "o"],
        "eval": ["eval", "--checkpoint", "c", "--data", "d"],
        "probe": ["probe", "--checkpoint", "c", "--data", "d"],
        "ablate": ["ablate", "--data", "d", "--out", "o"],
    }[command]


def test_unreadable_checkpoint_fails(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"garbage")
    assert main(["colorize", "--checkpoint", str(bad), "--input", str(tmp_path), "--output", str(tmp_path / "o")]) == 1
    assert main(["eval", "--checkpoint", str(tmp_path / "missing.ckpt"), "--data", str(tmp_path)]) == 1


def test_unknown_config_key_fails(tmp_path, image_folder):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("batch_sise = 2\n")
    assert main(["train", "--data", str(image_folder), "--config", str(cfg)]) == 1


def test_codebook_command(tmp_path, image_folder):
    out = tmp_path / "cb.txt"
    assert main(["codebook", "--data", str(image_folder), "--out", str(out)]) == 0
    assert out.read_text().startswith("# ucapsnet-codebook v1")


def test_train_colorize_eval_probe_flow(tmp_path, image_folder, image_writer, tiny_config_file, toy_codebook):
    codebook = save_codebook(toy_codebook, tmp_path / "toy_codebook.txt")
    run = tmp_path / "run"
    assert main(["train", "--data", str(image_folder), "--config", str(tiny_config_file),
                 "--codebook", str(codebook), "--run-dir", str(run)]) == 0
    latest = run / "checkpoints" / "latest.ckpt"
    assert latest.exists()
    assert (run / "checkpoints" / "step_000002.ckpt").exists()
    assert (run / "loss_log.csv").read_text().count("\n") == 3

    assert main(["train", "--data", str(image_folder), "--resume", str(latest), "--epochs", "2"]) == 0
    assert (run / "checkpoints" / "step_000004.ckpt").exists()

    out = tmp_path / "colourised"
    assert main(["colorize", "--checkpoint", str(latest), "--input", str(image_folder), "--output", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == sorted(p.name for p in image_folder.iterdir())

    assert main(["eval", "--checkpoint", str(latest), "--data", str(image_folder)]) == 0
    report = json.loads((run / "eval_report.json").read_text())
    assert report["image_count"] == 4

    labelled = tmp_path / "labelled"
    image_writer(labelled / "a", 3, seed=1)
    image_writer(labelled / "b", 3, seed=2)
    assert main(["probe", "--checkpoint", str(latest), "--data", str(labelled), "--epochs", "3"]) == 0
    probe = json.loads((run / "probe_report.json").read_text())
    assert probe["num_classes"] == 2


def test_both_presets_are_accepted():
    parser = build_parser()
    for preset in ("desk", "paper"):
        assert parser.parse_args(["train", "--data", "d", "--preset", preset]).preset == preset
        assert parser.parse_args(["ablate", "--data", "d", "--out", "o", "--preset", preset]).preset == preset
    with pytest.raises(SystemExit):
        parser.parse_args(["train", "--data", "d", "--preset", "huge"])


def test_eval_scores_the_learned_decoder_only():
    with pytest.raises(SystemExit) as excinfo:
        build_parser().parse_args(["eval", "--checkpoint", "c", "--data", "d", "--annealed"])
    assert excinfo.value.code == 2
