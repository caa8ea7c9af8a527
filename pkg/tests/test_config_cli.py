"""Config parsing and the command-line surface, including exit codes."""

import numpy as np
import pytest

from akn.checkpoint import load_checkpoint
from akn.cli import main
from akn.config import TrainConfig, load_config, parse_config
from akn.errors import ConfigError

DOCUMENTED_KEYS = ("stage", "split", "alpha", "tau", "rank", "reg", "transform",
                   "concat", "lr", "momentum", "epochs", "seed", "classes",
                   "clip_len", "height", "width", "batch")


def test_defaults():
    cfg = TrainConfig()
    cfg.validate()
    assert cfg.stage == 1
    assert cfg.split == "s3"
    assert cfg.alpha == 0.3
    assert cfg.tau is None                     # auto: H + W of selection grid
    assert cfg.rank and cfg.reg and cfg.transform and cfg.concat
    assert (cfg.classes, cfg.clip_len, cfg.height, cfg.width) == (4, 8, 32, 32)
    assert cfg.epochs == 30


def test_parse_documented_keys():
    text = "\n".join(f"{k} = {v}" for k, v in [
        ("stage", 2), ("split", "s4"), ("alpha", 0.5), ("tau", 7.5),
        ("rank", "false"), ("reg", 0), ("transform", "true"), ("concat", 1),
        ("lr", 0.02), ("momentum", 0.8), ("epochs", 5), ("seed", 42),
        ("classes", 8), ("clip_len", 4), ("height", 48), ("width", 48),
        ("batch", 4)])
    cfg = parse_config(text)
    assert cfg.stage == 2 and cfg.split == "s4" and cfg.alpha == 0.5
    assert cfg.tau == 7.5
    assert cfg.rank is False and cfg.reg is False
    assert cfg.transform is True and cfg.concat is True
    assert cfg.lr == 0.02 and cfg.momentum == 0.8
    assert cfg.classes == 8 and cfg.clip_len == 4
    assert cfg.height == cfg.width == 48 and cfg.batch == 4


def test_parse_comments_and_blank_lines():
    cfg = parse_config("# full line comment\n\nstage = 2   # trailing\n")
    assert cfg.stage == 2


def test_parse_tau_auto():
    assert parse_config("tau = auto").tau is None


def test_unknown_key_rejected():
    with pytest.raises(ConfigError) as err:
        parse_config("stage = 1\nwat = 3\n")
    assert "line 2" in str(err.value)


def test_missing_equals_rejected():
    with pytest.raises(ConfigError):
        parse_config("stage 1")


def test_bad_value_rejected():
    with pytest.raises(ConfigError):
        parse_config("epochs = soon")
    with pytest.raises(ConfigError):
        parse_config("rank = maybe")


def test_validate_ranges():
    for bad in ("alpha = 0", "alpha = 1.5", "split = stem", "stage = 3",
                "classes = 1", "classes = 9", "shift = 0.6", "momentum = 1.5"):
        with pytest.raises(ConfigError):
            parse_config(bad)


def test_validate_travel_fit():
    # default side 12, speed 2, clip_len 8: needs 12 + 14 = 26 <= min(H, W)
    with pytest.raises(ConfigError):
        parse_config("height = 24\nwidth = 24")


def test_load_config(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("stage = 2\nalpha = 0.1\n")
    cfg = load_config(str(p))
    assert cfg.stage == 2 and cfg.alpha == 0.1


# -- CLI ---------------------------------------------------------------------

SMOKE = ("classes = 4\nclip_len = 4\nheight = 16\nwidth = 16\nside = 5\n"
         "speed = 1\ntrain_count = 8\nval_count = 4\nbatch = 4\nepochs = 1\n")


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg1 = root / "stage1.cfg"
    cfg1.write_text(SMOKE + "stage = 1\n")
    cfg2 = root / "stage2.cfg"
    cfg2.write_text(SMOKE + "stage = 2\n")
    data = root / "data"
    out = root / "out"
    assert main(["gen", "--out", str(data), "--config", str(cfg1)]) == 0
    assert main(["train", "--data", str(data), "--config", str(cfg1),
                 "--out", str(out)]) == 0
    return root


def test_cli_gen_and_train_stage1(workdir):
    assert (workdir / "out" / "stage1.akck").exists()
    assert (workdir / "out" / "stage1_metrics.txt").exists()
    line = (workdir / "out" / "stage1_metrics.txt").read_text().splitlines()[0]
    assert line.startswith("epoch 1 lr ")


def test_cli_train_stage2_and_eval(workdir, capsys):
    assert main(["train", "--data", str(workdir / "data"),
                 "--config", str(workdir / "stage2.cfg"),
                 "--out", str(workdir / "out")]) == 0
    capsys.readouterr()
    assert main(["eval", "--ckpt", str(workdir / "out" / "stage2.akck"),
                 "--data", str(workdir / "data" / "val")]) == 0
    out = capsys.readouterr().out
    assert "top1 " in out
    assert "keypoint_in_mask " in out


def test_cli_stage2_checkpoint_has_1d_weights(workdir):
    blobs = load_checkpoint(str(workdir / "out" / "stage2.akck"))
    assert any(name.endswith(".1d") for name in blobs)
    assert blobs["meta.stage"] == 2.0


def test_cli_viz(workdir):
    out = workdir / "viz"
    clip = sorted((workdir / "data" / "val").glob("*.akv"))[0]
    assert main(["viz", "--ckpt", str(workdir / "out" / "stage2.akck"),
                 "--clip", str(clip), "--out", str(out)]) == 0
    assert (out / "frame_00.ppm").exists()
    assert (out / "heat_00.pgm").exists()
    assert (out / "points.txt").read_text().count("\n") >= 1


def test_cli_analyze(workdir, capsys):
    assert main(["analyze", "--config", str(workdir / "stage2.cfg")]) == 0
    out = capsys.readouterr().out
    assert out.startswith("layer\tkind\tparams\tflops")
    assert main(["analyze", "--config", str(workdir / "stage2.cfg"),
                 "--sweep"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("split\talpha\tgflops\tparams")
    assert len(out.splitlines()) == 10          # header + 3 splits x 3 alphas


def test_cli_exit_code_2_on_config_error(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("no_such_key = 1\n")
    assert main(["analyze", "--config", str(bad)]) == 2
    assert "config error" in capsys.readouterr().err


def test_cli_exit_code_3_on_io_error(tmp_path, capsys):
    assert main(["eval", "--ckpt", str(tmp_path / "missing.akck"),
                 "--data", str(tmp_path)]) == 3
    assert "i/o error" in capsys.readouterr().err


def test_cli_exit_code_3_on_corrupt_checkpoint(tmp_path, workdir):
    bad = tmp_path / "corrupt.akck"
    bad.write_bytes(b"AKCKgarbage")
    assert main(["eval", "--ckpt", str(bad),
                 "--data", str(workdir / "data" / "val")]) == 3


def test_cli_stage2_without_stage1_is_io_error(tmp_path, workdir):
    assert main(["train", "--data", str(workdir / "data"),
                 "--config", str(workdir / "stage2.cfg"),
                 "--out", str(tmp_path / "fresh")]) == 3
