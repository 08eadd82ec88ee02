import subprocess
import sys

import numpy as np
import pytest
from PIL import Image

from asymgan.cli import main
from asymgan.config import TrainConfig, save_config
from asymgan.engine import checkpoint_load, read_loss_log

from toydata import write_domain_dir


@pytest.fixture
def toy_cfg(tmp_path):
    root = tmp_path / "data"
    write_domain_dir(root / "trainA", 3, 32, 64, adverse=True, seed=1)
    write_domain_dir(root / "trainB", 3, 32, 64, seed=2)
    cfg = TrainConfig(base_channels=4, image_size=(32, 64), batch_size=1, iterations=2, checkpoint_every=5,
                      output_dir=str(tmp_path / "run"))
    path = tmp_path / "toy.cfg"
    save_config(cfg, path)
    return path, root, tmp_path / "run"


@pytest.fixture
def checkpoint(toy_cfg):
    path, root, run = toy_cfg
    assert main(["train", "--config", str(path), "--dataroot", str(root)]) == 0
    return run / "latest.ckpt"


def test_train_smoke(toy_cfg):
    path, root, run = toy_cfg
    assert main(["train", "--config", str(path), "--dataroot", str(root), "--iterations", "10"]) == 0
    assert len(read_loss_log(run / "losses.log")) == 10
    assert (run / "ckpt_0000010.ckpt").exists()


def test_train_ablation_flags(toy_cfg):
    path, root, run = toy_cfg
    code = main(["train", "--config", str(path), "--dataroot", str(root),
                 "--use-tnet", "false", "--use-uncertainty-loss", "false", "--output_dir", str(run / "wot")])
    assert code == 0
    rows = read_loss_log(run / "wot" / "losses.log")
    assert len(rows) == 2 and all(r["cyc_A"] >= 0 for r in rows)


@pytest.mark.parametrize("preset, has_tnet", [("no-tnet", False), ("no-uncertainty", True)])
def test_train_ablation_preset(toy_cfg, preset, has_tnet):
    path, root, run = toy_cfg
    out = run / preset
    assert main(["train", "--config", str(path), "--dataroot", str(root), "--ablation", preset,
                 "--output-dir", str(out)]) == 0
    state = checkpoint_load(out / "latest.ckpt")
    assert not state.cfg.use_uncertainty_loss
    assert bool(list(state.bundle.tnet.parameters())) is has_tnet


def test_train_missing_config(tmp_path):
    assert main(["train", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_train_invalid_override(toy_cfg):
    path, root, _ = toy_cfg
    assert main(["train", "--config", str(path), "--dataroot", str(root), "--lambda-cyc", "-1"]) == 2


def test_train_missing_data(toy_cfg, tmp_path):
    path, _, _ = toy_cfg
    assert main(["train", "--config", str(path), "--dataroot", str(tmp_path / "nope")]) == 4


def test_unknown_verb_is_usage_error(capsys):
    assert main(["paint"]) == 1
    assert "usage" in capsys.readouterr().err
    assert main([]) == 1


def test_translate_a2b(checkpoint, tmp_path):
    inputs = write_domain_dir(tmp_path / "in", 5, 64, 128, adverse=True, seed=4)
    out = tmp_path / "out"
    assert main(["translate", "--checkpoint", str(checkpoint), "--input-dir", str(inputs),
                 "--output-dir", str(out), "--direction", "A2B", "--with-uncertainty"]) == 0
    written = sorted(p.name for p in out.iterdir() if not p.stem.endswith("_sigma"))
    assert written == sorted(p.name for p in inputs.iterdir())
    assert len(list(out.glob("*_sigma.png"))) == 5
    with Image.open(out / written[0]) as im:
        assert im.size == (128, 64)


def test_translate_b2a_rejects_uncertainty(checkpoint, tmp_path):
    inputs = write_domain_dir(tmp_path / "in", 1, 32, 64, seed=4)
    code = main(["translate", "--checkpoint", str(checkpoint), "--input-dir", str(inputs),
                 "--output-dir", str(tmp_path / "out"), "--direction", "B2A", "--with-uncertainty"])
    assert code == 1


def test_translate_b2a(checkpoint, tmp_path):
    inputs = write_domain_dir(tmp_path / "in", 2, 32, 64, seed=4)
    assert main(["translate", "--checkpoint", str(checkpoint), "--input-dir", str(inputs),
                 "--output-dir", str(tmp_path / "out"), "--direction", "B2A"]) == 0
    assert len(list((tmp_path / "out").iterdir())) == 2


def test_translate_bad_checkpoint(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"garbage!" * 4)
    inputs = write_domain_dir(tmp_path / "in", 1, 32, 64)
    assert main(["translate", "--checkpoint", str(bad), "--input-dir", str(inputs),
                 "--output-dir", str(tmp_path / "out")]) == 4


def test_uncertainty_command(checkpoint, tmp_path, capsys):
    inputs = write_domain_dir(tmp_path / "in", 2, 32, 64, adverse=True, seed=4)
    assert main(["uncertainty", "--checkpoint", str(checkpoint), "--input-dir", str(inputs),
                 "--output-dir", str(tmp_path / "out")]) == 0
    assert len(list((tmp_path / "out").glob("*_sigma.png"))) == 2
    assert "sigma min" in capsys.readouterr().out


def test_fid_same_file(tmp_path, capsys):
    np.save(tmp_path / "a.npy", np.random.default_rng(0).normal(size=(40, 4)))
    assert main(["fid", str(tmp_path / "a.npy"), str(tmp_path / "a.npy")]) == 0
    assert capsys.readouterr().out.strip() in ("0.0000", "-0.0000")


def test_fid_known_shift(tmp_path, capsys):
    x = np.random.default_rng(1).normal(size=(100, 1))
    np.save(tmp_path / "a.npy", x)
    np.save(tmp_path / "b.npy", x + 2.0)
    assert main(["fid", str(tmp_path / "a.npy"), str(tmp_path / "b.npy")]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(4.0, abs=1e-4)


def test_fid_dimension_mismatch(tmp_path):
    np.save(tmp_path / "a.npy", np.zeros((5, 3)))
    np.save(tmp_path / "b.npy", np.zeros((5, 4)))
    assert main(["fid", str(tmp_path / "a.npy"), str(tmp_path / "b.npy")]) != 0


def test_miou_command(tmp_path, capsys):
    (tmp_path / "pred").mkdir()
    (tmp_path / "gt").mkdir()
    np.save(tmp_path / "gt" / "x.npy", np.array([[0, 0], [1, 1]]))
    np.save(tmp_path / "pred" / "x.npy", np.array([[0, 1], [1, 1]]))
    Image.fromarray(np.array([[0, 1], [1, 0]], np.uint8)).save(tmp_path / "gt" / "y.png")
    Image.fromarray(np.array([[0, 1], [1, 0]], np.uint8)).save(tmp_path / "pred" / "y.png")
    assert main(["miou", "--pred", str(tmp_path / "pred"), "--gt", str(tmp_path / "gt"),
                 "--num-classes", "2"]) == 0
    # pooled: class 0 inter 3 union 4, class 1 inter 4 union 5
    assert float(capsys.readouterr().out) == pytest.approx(round((3 / 4 + 4 / 5) / 2, 4))


def test_module_entry_point_help():
    proc = subprocess.run([sys.executable, "-m", "asymgan", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "translate" in proc.stdout
