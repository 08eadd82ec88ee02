import numpy as np
import pytest
import torch

from asymgan.config import TrainConfig
from asymgan.data import ArrayLoader
from asymgan.engine import (
    LOG_FIELDS,
    CheckpointError,
    CheckpointVersionError,
    MAGIC,
    checkpoint_load,
    checkpoint_save,
    learning_rate_at,
    new_train_state,
    read_loss_log,
    train,
    train_step,
)
from asymgan.losses import DivergenceError

from toydata import make_domain_images, write_domain_dir


def snapshot(module):
    return {k: v.detach().clone() for k, v in module.state_dict().items()}


def same(a, b):
    return all(torch.equal(a[k], b[k]) for k in a)


@pytest.fixture
def arrays():
    a = make_domain_images(4, 32, 64, adverse=True, seed=1).astype(np.float32) / 127.5 - 1
    b = make_domain_images(4, 32, 64, seed=2).astype(np.float32) / 127.5 - 1
    return a, b


def test_discriminator_step_freezes_generator(tiny_cfg, toy_pair, monkeypatch):
    state = new_train_state(tiny_cfg)
    gen_before = [snapshot(m) for m in state.bundle.generator_modules()]
    disc_before = snapshot(state.bundle.disc_a), snapshot(state.bundle.disc_b)
    # stop after the discriminator update
    monkeypatch.setattr(state.opt_g, "step", lambda *a, **k: None)
    train_step(state, *toy_pair)
    for m, before in zip(state.bundle.generator_modules(), gen_before):
        assert same(snapshot(m), before)
    assert not same(snapshot(state.bundle.disc_a), disc_before[0])
    assert not same(snapshot(state.bundle.disc_b), disc_before[1])


def test_generator_step_freezes_discriminators(tiny_cfg, toy_pair, monkeypatch):
    state = new_train_state(tiny_cfg)
    gen_before = snapshot(state.bundle.tnet)
    disc_before = snapshot(state.bundle.disc_a), snapshot(state.bundle.disc_b)
    monkeypatch.setattr(state.opt_d_a, "step", lambda *a, **k: None)
    monkeypatch.setattr(state.opt_d_b, "step", lambda *a, **k: None)
    train_step(state, *toy_pair)
    assert same(snapshot(state.bundle.disc_a), disc_before[0])
    assert same(snapshot(state.bundle.disc_b), disc_before[1])
    assert not same(snapshot(state.bundle.tnet), gen_before)
    assert state.iteration == 1


def test_step_report_consistent(tiny_cfg, toy_pair):
    state = new_train_state(tiny_cfg)
    r = train_step(state, *toy_pair)
    expected = (r.adv_G_A + r.adv_G_B + 10 * r.rec + r.feat + 10 * (r.cyc_A + r.cyc_B))
    assert r.total_G == pytest.approx(expected, rel=1e-6)
    assert r.total_D == pytest.approx(r.adv_D_A + r.adv_D_B, rel=1e-6)


def test_non_finite_aborts_with_term_name(tiny_cfg, toy_pair):
    state = new_train_state(tiny_cfg)
    x_a = toy_pair[0].clone()
    x_a[0, 0, 0, 0] = float("nan")
    with pytest.raises(DivergenceError) as info:
        train_step(state, x_a, toy_pair[1])
    assert info.value.term == "adv_D_A"


def test_ablation_uses_plain_cycle_loss(toy_pair):
    cfg = TrainConfig(base_channels=8, image_size=(32, 64), use_tnet=False, use_uncertainty_loss=False)
    state = new_train_state(cfg)
    r = train_step(state, *toy_pair)
    # plain L1 is never negative, and no T-net parameters exist
    assert r.cyc_A >= 0
    assert not list(state.bundle.tnet.parameters())


def test_overfit_on_fixed_batch(tiny_cfg, arrays):
    a, b = arrays
    x_a = torch.from_numpy(a[:2].transpose(0, 3, 1, 2).copy())
    x_b = torch.from_numpy(b[:2].transpose(0, 3, 1, 2).copy())
    state = new_train_state(tiny_cfg.replace(learning_rate=1e-3))
    totals = [train_step(state, x_a, x_b).total_G for _ in range(200)]
    assert np.mean(totals[-10:]) < np.mean(totals[5:15])


def test_constant_learning_rate_by_default():
    cfg = TrainConfig()
    assert {learning_rate_at(cfg, i) for i in (0, 5000, 99_999)} == {2e-4}
    decayed = TrainConfig(lr_decay=True, iterations=100)
    assert learning_rate_at(decayed, 10) == 2e-4
    assert learning_rate_at(decayed, 75) == pytest.approx(1e-4)
    assert learning_rate_at(decayed, 100) == 0


def test_checkpoint_round_trip(tiny_cfg, toy_pair, tmp_path):
    state = new_train_state(tiny_cfg)
    train_step(state, *toy_pair)
    checkpoint_save(state, tmp_path / "c.ckpt")
    loaded = checkpoint_load(tmp_path / "c.ckpt")
    assert loaded.iteration == 1 and loaded.cfg == tiny_cfg
    assert same(snapshot(loaded.bundle), snapshot(state.bundle))
    for o1, o2 in zip(state.optimizers, loaded.optimizers):
        s1, s2 = o1.state_dict()["state"], o2.state_dict()["state"]
        assert s1.keys() == s2.keys()
        for k in s1:
            assert all(torch.equal(s1[k][n], s2[k][n]) for n in s1[k])
    r1 = train_step(state, *toy_pair)
    r2 = train_step(loaded, *toy_pair)
    assert r1 == r2


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOTMAGIC" + b"\x00" * 32)
    with pytest.raises(CheckpointVersionError):
        checkpoint_load(path)


def test_checkpoint_wrong_version(tiny_cfg, tmp_path):
    path = tmp_path / "c.ckpt"
    checkpoint_save(new_train_state(tiny_cfg), path)
    raw = bytearray(path.read_bytes())
    raw[len(MAGIC)] = 99
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointVersionError, match="version 99"):
        checkpoint_load(path)


def test_checkpoint_corrupt(tiny_cfg, tmp_path):
    path = tmp_path / "c.ckpt"
    checkpoint_save(new_train_state(tiny_cfg), path)
    path.write_bytes(path.read_bytes()[:200])
    with pytest.raises(CheckpointError, match="corrupt"):
        checkpoint_load(path)


def _file_cfg(tmp_path, **kw):
    a = write_domain_dir(tmp_path / "data" / "trainA", 4, 32, 64, adverse=True, seed=1)
    b = write_domain_dir(tmp_path / "data" / "trainB", 4, 32, 64, seed=2)
    base = dict(base_channels=8, image_size=(32, 64), batch_size=2, iterations=4, checkpoint_every=2,
                data_root_adverse=str(a), data_root_normal=str(b), output_dir=str(tmp_path / "run"))
    return TrainConfig(**(base | kw))


def test_zero_iterations_writes_initial_checkpoint(tmp_path):
    cfg = _file_cfg(tmp_path, iterations=0)
    state = train(cfg)
    assert state.iteration == 0
    assert (tmp_path / "run" / "ckpt_0000000.ckpt").exists()
    assert read_loss_log(tmp_path / "run" / "losses.log") == []


def test_train_writes_log_and_checkpoints(tmp_path):
    cfg = _file_cfg(tmp_path)
    train(cfg)
    run = tmp_path / "run"
    lines = (run / "losses.log").read_text().splitlines()
    assert len(lines) == 4
    assert len(lines[0].split(",")) == len(LOG_FIELDS)
    assert [r["iter"] for r in read_loss_log(run / "losses.log")] == [1, 2, 3, 4]
    assert {p.name for p in run.glob("*.ckpt")} == {
        "ckpt_0000000.ckpt", "ckpt_0000002.ckpt", "ckpt_0000004.ckpt", "latest.ckpt"}


def test_resume_matches_uninterrupted(tmp_path):
    full = _file_cfg(tmp_path / "full", iterations=6, checkpoint_every=3)
    train(full)
    part = _file_cfg(tmp_path / "part", iterations=3, checkpoint_every=3)
    train(part)
    resumed = train(part.replace(iterations=6))
    assert resumed.iteration == 6
    log_full = (tmp_path / "full" / "run" / "losses.log").read_text()
    log_part = (tmp_path / "part" / "run" / "losses.log").read_text()
    assert log_full == log_part


def test_resume_rejects_architecture_change(tmp_path):
    cfg = _file_cfg(tmp_path, iterations=1)
    train(cfg)
    from asymgan.config import ConfigError
    with pytest.raises(ConfigError, match="base_channels"):
        train(cfg.replace(base_channels=4, iterations=2))


def test_in_memory_training(tiny_cfg, arrays):
    loader = ArrayLoader(*arrays, batch_size=2, seed=0)
    reports = []
    state = train(tiny_cfg.replace(iterations=3), loader=loader, output_dir=False,
                  callback=lambda s, r: reports.append(r))
    assert state.iteration == 3 and len(reports) == 3
