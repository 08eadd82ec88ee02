"""Alternating discriminator/generator optimisation, checkpoints and loss logs.

Checkpoint layout: the 8-byte magic ``ASYMGAN\\0``, a little-endian uint32
format version, then a ``torch.save`` payload with the config snapshot,
iteration counter, network and optimiser state dicts and RNG/loader state.

Loss log: one comma-separated line per completed iteration with the fields
of :data:`LOG_FIELDS`, no header.
"""

from __future__ import annotations

import io
import logging
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import torch

from . import losses as L
from .config import ConfigError, Domain, TrainConfig, config_from_mapping, seed_all
from .data import UnpairedLoader, scan_dataset
from .graph import forward_all_paths
from .networks import ModelBundle, init_model_bundle

logger = logging.getLogger(__name__)

MAGIC = b"ASYMGAN\x00"
FORMAT_VERSION = 1
LOG_FIELDS = ("iter", "rec", "feat", "cyc_A", "cyc_B", "adv_G_A", "adv_G_B",
              "adv_D_A", "adv_D_B", "total_G", "total_D")
# config keys that change the parameter layout
ARCH_KEYS = ("base_channels", "use_tnet", "sigma_floor")


class CheckpointError(OSError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


def _adam(params, cfg: TrainConfig) -> torch.optim.Adam:
    return torch.optim.Adam(params, lr=cfg.learning_rate, betas=(cfg.adam_beta1, cfg.adam_beta2))


@dataclass
class TrainState:
    bundle: ModelBundle
    opt_g: torch.optim.Adam
    opt_d_a: torch.optim.Adam
    opt_d_b: torch.optim.Adam
    cfg: TrainConfig
    iteration: int = 0
    loader_state: dict | None = field(default=None, repr=False)

    @property
    def optimizers(self):
        return (self.opt_g, self.opt_d_a, self.opt_d_b)


def new_train_state(cfg: TrainConfig) -> TrainState:
    seed_all(cfg.seed)
    bundle = init_model_bundle(cfg)
    return TrainState(
        bundle=bundle,
        opt_g=_adam(bundle.generator_parameters(), cfg),
        opt_d_a=_adam(bundle.disc_a.parameters(), cfg),
        opt_d_b=_adam(bundle.disc_b.parameters(), cfg),
        cfg=cfg,
    )


def learning_rate_at(cfg: TrainConfig, iteration: int) -> float:
    """Constant rate, or linear decay to zero over the second half with ``lr_decay``."""
    if not cfg.lr_decay or cfg.iterations == 0:
        return cfg.learning_rate
    half = cfg.iterations / 2
    return cfg.learning_rate * min(1.0, max(0.0, (cfg.iterations - iteration) / half))


def _requires_grad(modules: Iterable[torch.nn.Module], flag: bool) -> None:
    for m in modules:
        for p in m.parameters():
            p.requires_grad_(flag)


def train_step(state: TrainState, x_a: torch.Tensor, x_b: torch.Tensor) -> L.LossReport:
    """One discriminator update followed by one generator update."""
    cfg, m = state.cfg, state.bundle
    lr = learning_rate_at(cfg, state.iteration)
    for opt in state.optimizers:
        for group in opt.param_groups:
            group["lr"] = lr

    paths = forward_all_paths(m, x_a, x_b, cfg)
    discs = (m.disc_a, m.disc_b)

    _requires_grad(discs, True)
    adv_d_a = L.lsgan_d_loss(m.disc_a(x_a), m.disc_a(paths.x_fake_A.detach()))
    adv_d_b = L.lsgan_d_loss(m.disc_b(x_b), m.disc_b(paths.x_fake_B.detach()))
    L.check_finite(adv_D_A=adv_d_a, adv_D_B=adv_d_b)
    state.opt_d_a.zero_grad(set_to_none=True)
    state.opt_d_b.zero_grad(set_to_none=True)
    L.discriminator_total(adv_d_a, adv_d_b).backward()
    state.opt_d_a.step()
    state.opt_d_b.step()

    _requires_grad(discs, False)
    try:
        adv_g_a = L.lsgan_g_loss(m.disc_a(paths.x_fake_A))
        adv_g_b = L.lsgan_g_loss(m.disc_b(paths.x_fake_B))
    finally:
        _requires_grad(discs, True)
    rec = L.reconstruction_loss(x_a, paths.x_rec_A, x_b, paths.x_rec_B)
    feat = L.feature_matching_loss(paths.feat_A_enhanced, paths.feat_of_fake_B,
                                   paths.feat_B, paths.feat_of_fake_A)
    if cfg.use_uncertainty_loss:
        cyc_a = L.uncertainty_cyclic_loss(x_a, paths.x_cyc_A, paths.sigma)
    else:
        cyc_a = L.plain_cyclic_loss(x_a, paths.x_cyc_A)
    cyc_b = L.plain_cyclic_loss(x_b, paths.x_cyc_B)

    report = L.assemble_objectives(
        dict(rec=rec, feat=feat, cyc_A=cyc_a, cyc_B=cyc_b, adv_G_A=adv_g_a, adv_G_B=adv_g_b,
             adv_D_A=adv_d_a, adv_D_B=adv_d_b),
        cfg,
    )
    total_g = L.generator_total(adv_g_a, adv_g_b, rec, feat, cyc_a, cyc_b, cfg)
    state.opt_g.zero_grad(set_to_none=True)
    total_g.backward()
    state.opt_g.step()

    state.iteration += 1
    return report


# -- checkpoints -------------------------------------------------------------

def checkpoint_save(state: TrainState, path: str | os.PathLike) -> None:
    payload = {
        "config": state.cfg.to_dict(),
        "iteration": state.iteration,
        "model": state.bundle.state_dict(),
        "opt_g": state.opt_g.state_dict(),
        "opt_d_a": state.opt_d_a.state_dict(),
        "opt_d_b": state.opt_d_b.state_dict(),
        "torch_rng": torch.get_rng_state(),
        "loader": state.loader_state,
    }
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    torch.save(payload, buf)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(buf.getvalue())
    os.replace(tmp, path)


def _read_payload(path) -> dict:
    raw = Path(path).read_bytes()
    if raw[:len(MAGIC)] != MAGIC:
        raise CheckpointVersionError(f"{path}: not a checkpoint (bad magic header)")
    (version,) = struct.unpack("<I", raw[len(MAGIC):len(MAGIC) + 4])
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    try:
        return torch.load(io.BytesIO(raw[len(MAGIC) + 4:]), map_location="cpu", weights_only=True)
    except Exception as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint ({exc})") from exc


def checkpoint_load(path: str | os.PathLike, restore_rng: bool = True) -> TrainState:
    payload = _read_payload(path)
    cfg = config_from_mapping(payload["config"])
    bundle = init_model_bundle(cfg)
    bundle.load_state_dict(payload["model"])
    state = TrainState(
        bundle=bundle,
        opt_g=_adam(bundle.generator_parameters(), cfg),
        opt_d_a=_adam(bundle.disc_a.parameters(), cfg),
        opt_d_b=_adam(bundle.disc_b.parameters(), cfg),
        cfg=cfg,
        iteration=int(payload["iteration"]),
        loader_state=payload["loader"],
    )
    state.opt_g.load_state_dict(payload["opt_g"])
    state.opt_d_a.load_state_dict(payload["opt_d_a"])
    state.opt_d_b.load_state_dict(payload["opt_d_b"])
    if restore_rng:
        torch.set_rng_state(payload["torch_rng"])
    return state


def load_bundle(path: str | os.PathLike) -> tuple[ModelBundle, TrainConfig]:
    """Networks and config from a checkpoint, ready for inference."""
    state = checkpoint_load(path, restore_rng=False)
    state.bundle.eval()
    return state.bundle, state.cfg


# -- loss log ----------------------------------------------------------------

def format_log_line(iteration: int, report: L.LossReport) -> str:
    vals = report.as_dict()
    return ",".join([str(iteration)] + [repr(vals[k]) for k in LOG_FIELDS[1:]]) + "\n"


def read_loss_log(path: str | os.PathLike) -> list[dict[str, float]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) != len(LOG_FIELDS):
                continue
            row = {k: float(v) for k, v in zip(LOG_FIELDS, parts)}
            row["iter"] = int(row["iter"])
            rows.append(row)
    return rows


def _truncate_log(path: Path, keep: int) -> None:
    if not path.exists():
        return
    lines = path.read_text(encoding="utf-8").splitlines(keepends=True)
    path.write_text("".join(lines[:keep]), encoding="utf-8")


# -- loop ----------------------------------------------------------------------

def build_loader(cfg: TrainConfig):
    if not cfg.data_root_adverse or not cfg.data_root_normal:
        raise ConfigError("data_root_adverse and data_root_normal must be set", "data_root_adverse")
    ds_a = scan_dataset(cfg.data_root_adverse, Domain.ADVERSE, cfg.image_size)
    ds_b = scan_dataset(cfg.data_root_normal, Domain.NORMAL, cfg.image_size)
    return UnpairedLoader(ds_a, ds_b, cfg.batch_size, seed=cfg.seed,
                          random_crop=cfg.random_crop, workers=cfg.workers)


def checkpoint_path(out_dir: Path, iteration: int) -> Path:
    return out_dir / f"ckpt_{iteration:07d}.ckpt"


def _save_all(state: TrainState, loader, out_dir: Path) -> None:
    state.loader_state = loader.state_dict() if loader is not None else None
    checkpoint_save(state, checkpoint_path(out_dir, state.iteration))
    checkpoint_save(state, out_dir / "latest.ckpt")


def train(cfg: TrainConfig, loader=None, resume: bool = True, output_dir=None,
          callback=None) -> TrainState:
    """Run training up to ``cfg.iterations`` total steps.

    Writes ``losses.log`` and checkpoints into ``output_dir`` (default
    ``cfg.output_dir``); pass ``output_dir=False`` to keep everything in
    memory. With ``resume`` an existing ``latest.ckpt`` there is continued,
    restoring parameters, optimiser moments and the data order.
    ``callback(state, report)`` is called after every step.
    """
    out_dir = None if output_dir is False else Path(output_dir or cfg.output_dir)
    latest = out_dir / "latest.ckpt" if out_dir else None
    resumed = bool(resume and latest is not None and latest.exists())

    if resumed:
        state = checkpoint_load(latest)
        for key in ARCH_KEYS:
            if getattr(state.cfg, key) != getattr(cfg, key):
                raise ConfigError(f"{key} differs from the checkpoint being resumed", key)
        state.cfg = cfg
        logger.info("resuming from %s at iteration %d", latest, state.iteration)
    else:
        state = new_train_state(cfg)

    own_loader = loader is None
    if own_loader:
        loader = build_loader(cfg)
    if state.loader_state is not None:
        loader.load_state_dict(state.loader_state)

    log_fh = None
    try:
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            log_path = out_dir / "losses.log"
            if resumed:
                _truncate_log(log_path, state.iteration)
            else:
                log_path.write_text("", encoding="utf-8")
                _save_all(state, loader, out_dir)
            log_fh = open(log_path, "a", encoding="utf-8")

        while state.iteration < cfg.iterations:
            x_a, x_b = loader.next_batch()
            report = train_step(state, x_a, x_b)
            if log_fh is not None:
                log_fh.write(format_log_line(state.iteration, report))
                log_fh.flush()
            if callback is not None:
                callback(state, report)
            if state.iteration % 100 == 0:
                logger.info("iter %d total_G %.4f total_D %.4f", state.iteration,
                            report.total_G, report.total_D)
            if out_dir is not None and (
                state.iteration % cfg.checkpoint_every == 0 or state.iteration == cfg.iterations
            ):
                _save_all(state, loader, out_dir)
        state.loader_state = loader.state_dict()
    finally:
        if log_fh is not None:
            log_fh.close()
        if own_loader:
            loader.close()
    return state
