"""Wiring of the two asymmetric generators.

The adverse-to-normal direction runs ``dec_ab(tnet(enc_ab(x)))`` while the
opposite direction has no transfer network. Reconstructions cross-wire each
encoder with the *other* generator's decoder and skip the transfer network:

==============  =========================================
fake_b, sigma   dec_ab(tnet(enc_ab(x_a)))
fake_a          dec_ba(enc_ba(x_b))
rec_a           dec_ba(enc_ab(x_a))
rec_b           dec_ab(enc_ba(x_b))   (sigma discarded)
cyc_a           dec_ba(enc_ba(fake_b))
cyc_b           dec_ab([tnet](enc_ab(fake_a)))
==============  =========================================

Every function accepts either a channels-first tensor or an
:class:`~asymgan.config.ImageBatch`; the latter is domain-checked.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import torch

from .config import Domain, ImageBatch
from .networks import ModelBundle


class DomainError(ValueError):
    pass


def _as_tensor(x, domain: Domain | None) -> torch.Tensor:
    if isinstance(x, ImageBatch):
        if domain is not None and x.domain is not domain:
            raise DomainError(f"expected a {domain.name} batch, got {x.domain.name}")
        return x.to_tensor()
    return x


def translate_a_to_b(m: ModelBundle, x_a) -> tuple[torch.Tensor, torch.Tensor]:
    """Adverse -> normal translation; returns the image and its uncertainty map."""
    x_a = _as_tensor(x_a, Domain.ADVERSE)
    return m.dec_ab(m.tnet(m.enc_ab(x_a)))


def translate_b_to_a(m: ModelBundle, x_b) -> torch.Tensor:
    x_b = _as_tensor(x_b, Domain.NORMAL)
    return m.dec_ba(m.enc_ba(x_b))


def reconstruct_a(m: ModelBundle, x_a) -> torch.Tensor:
    x_a = _as_tensor(x_a, Domain.ADVERSE)
    return m.dec_ba(m.enc_ab(x_a))


def reconstruct_b(m: ModelBundle, x_b) -> torch.Tensor:
    x_b = _as_tensor(x_b, Domain.NORMAL)
    image, _ = m.dec_ab(m.enc_ba(x_b))
    return image


def cycle_a(m: ModelBundle, x_fake_b) -> torch.Tensor:
    x_fake_b = _as_tensor(x_fake_b, None)
    return m.dec_ba(m.enc_ba(x_fake_b))


def cycle_b(m: ModelBundle, x_fake_a, cfg) -> torch.Tensor:
    x_fake_a = _as_tensor(x_fake_a, None)
    feat = m.enc_ab(x_fake_a)
    if cfg.apply_tnet_in_cycle_B:
        feat = m.tnet(feat)
    image, _ = m.dec_ab(feat)
    return image


@dataclass
class PathOutputs:
    x_fake_B: torch.Tensor
    sigma: torch.Tensor
    x_fake_A: torch.Tensor
    x_rec_A: torch.Tensor
    x_rec_B: torch.Tensor
    x_cyc_A: torch.Tensor
    x_cyc_B: torch.Tensor
    feat_A_enhanced: torch.Tensor
    feat_B: torch.Tensor
    feat_of_fake_B: torch.Tensor
    feat_of_fake_A: torch.Tensor

    def as_dict(self) -> dict[str, torch.Tensor]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def forward_all_paths(m: ModelBundle, x_a, x_b, cfg) -> PathOutputs:
    """Run every path once, sharing the encoder passes on the real inputs."""
    x_a = _as_tensor(x_a, Domain.ADVERSE)
    x_b = _as_tensor(x_b, Domain.NORMAL)
    if x_a.shape[0] != x_b.shape[0]:
        raise ValueError(f"batch sizes differ: {x_a.shape[0]} vs {x_b.shape[0]}")

    feat_a = m.enc_ab(x_a)
    feat_a_t = m.tnet(feat_a)
    fake_b, sigma = m.dec_ab(feat_a_t)
    rec_a = m.dec_ba(feat_a)

    feat_b = m.enc_ba(x_b)
    fake_a = m.dec_ba(feat_b)
    rec_b, _ = m.dec_ab(feat_b)

    feat_of_fake_b = m.enc_ba(fake_b)
    cyc_a = m.dec_ba(feat_of_fake_b)

    feat_of_fake_a = m.enc_ab(fake_a)
    cyc_in = m.tnet(feat_of_fake_a) if cfg.apply_tnet_in_cycle_B else feat_of_fake_a
    cyc_b, _ = m.dec_ab(cyc_in)

    return PathOutputs(
        x_fake_B=fake_b,
        sigma=sigma,
        x_fake_A=fake_a,
        x_rec_A=rec_a,
        x_rec_B=rec_b,
        x_cyc_A=cyc_a,
        x_cyc_B=cyc_b,
        feat_A_enhanced=feat_a_t,
        feat_B=feat_b,
        feat_of_fake_B=feat_of_fake_b,
        feat_of_fake_A=feat_of_fake_a,
    )
