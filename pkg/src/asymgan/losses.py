"""Objective terms for the translator.

Expectations are minibatch means. Images are channels-first; uncertainty
maps are ``(N, H, W)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Sequence

import torch


class DivergenceError(FloatingPointError):
    """A loss term became NaN or infinite."""

    def __init__(self, term: str, value: float):
        super().__init__(f"non-finite loss term {term!r}: {value}")
        self.term = term


def _same_shape(a: torch.Tensor, b: torch.Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")


def l1(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    _same_shape(a, b, "l1")
    return (a - b).abs().mean()


def reconstruction_loss(x_a, x_rec_a, x_b, x_rec_b) -> torch.Tensor:
    return l1(x_a, x_rec_a) + l1(x_b, x_rec_b)


def feature_matching_loss(feat_a_enhanced, feat_of_fake_b, feat_b, feat_of_fake_a) -> torch.Tensor:
    """L1 between input and translated-image encodings, per direction.

    The adverse side must be given the feature *after* the transfer network.
    """
    return l1(feat_a_enhanced, feat_of_fake_b) + l1(feat_b, feat_of_fake_a)


def uncertainty_cyclic_loss(x_a, x_cyc_a, sigma) -> torch.Tensor:
    """Heteroscedastic L1 cycle loss.

    Per pixel, ``r = mean_c |x - x_cyc|`` and the loss is
    ``r / (2 sigma^2) + log(sigma^2) / 2``, averaged over pixels and batch.
    For fixed ``r`` the minimiser is ``sigma = sqrt(r)``.
    """
    _same_shape(x_a, x_cyc_a, "uncertainty_cyclic_loss")
    if sigma.shape != x_a.shape[:1] + x_a.shape[2:]:
        raise ValueError(
            f"uncertainty_cyclic_loss: sigma shape {tuple(sigma.shape)} does not match "
            f"images {tuple(x_a.shape)}"
        )
    if not bool((sigma > 0).all()):
        raise ValueError("uncertainty_cyclic_loss: sigma must be strictly positive")
    r = (x_a - x_cyc_a).abs().mean(dim=1)
    var = sigma**2
    return (0.5 * r / var + 0.5 * torch.log(var)).mean()


def plain_cyclic_loss(x, x_cyc) -> torch.Tensor:
    return l1(x, x_cyc)


def total_cyclic_loss(cyc_a, cyc_b):
    return cyc_a + cyc_b


def _nonempty(maps: Sequence[torch.Tensor], what: str) -> None:
    if len(maps) == 0:
        raise ValueError(f"{what}: need at least one activation map")


def lsgan_d_loss(d_real_maps: Sequence[torch.Tensor], d_fake_maps: Sequence[torch.Tensor]) -> torch.Tensor:
    """Least-squares discriminator loss, averaged over scales."""
    _nonempty(d_real_maps, "lsgan_d_loss")
    _nonempty(d_fake_maps, "lsgan_d_loss")
    real = sum(((d - 1) ** 2).mean() for d in d_real_maps) / len(d_real_maps)
    fake = sum((d**2).mean() for d in d_fake_maps) / len(d_fake_maps)
    return 0.5 * real + 0.5 * fake


def lsgan_g_loss(d_fake_maps: Sequence[torch.Tensor]) -> torch.Tensor:
    _nonempty(d_fake_maps, "lsgan_g_loss")
    return 0.5 * sum(((d - 1) ** 2).mean() for d in d_fake_maps) / len(d_fake_maps)


def generator_total(adv_g_a, adv_g_b, rec, feat, cyc_a, cyc_b, cfg):
    """Weighted generator objective; works on tensors and plain floats alike."""
    return (
        adv_g_a
        + adv_g_b
        + cfg.lambda_rec * rec
        + cfg.lambda_feat * feat
        + cfg.lambda_cyc * total_cyclic_loss(cyc_a, cyc_b)
    )


def discriminator_total(adv_d_a, adv_d_b):
    return adv_d_a + adv_d_b


@dataclass(frozen=True)
class LossReport:
    rec: float
    feat: float
    cyc_A: float
    cyc_B: float
    adv_G_A: float
    adv_G_B: float
    adv_D_A: float
    adv_D_B: float
    total_G: float
    total_D: float

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


PART_NAMES = ("rec", "feat", "cyc_A", "cyc_B", "adv_G_A", "adv_G_B", "adv_D_A", "adv_D_B")


def check_finite(**terms) -> None:
    for name, value in terms.items():
        v = float(value.detach()) if isinstance(value, torch.Tensor) else float(value)
        if not math.isfinite(v):
            raise DivergenceError(name, v)


def assemble_objectives(parts: dict, cfg) -> LossReport:
    """Combine scalar terms into a :class:`LossReport`.

    ``parts`` must hold every name in :data:`PART_NAMES`; tensors are
    detached to floats. Raises :class:`DivergenceError` on the first
    non-finite term.
    """
    missing = [k for k in PART_NAMES if k not in parts]
    if missing:
        raise KeyError(f"missing loss terms: {missing}")
    vals = {
        k: float(v.detach()) if isinstance(v, torch.Tensor) else float(v)
        for k, v in ((k, parts[k]) for k in PART_NAMES)
    }
    check_finite(**vals)
    total_g = generator_total(
        vals["adv_G_A"], vals["adv_G_B"], vals["rec"], vals["feat"], vals["cyc_A"], vals["cyc_B"], cfg
    )
    total_d = discriminator_total(vals["adv_D_A"], vals["adv_D_B"])
    return LossReport(**vals, total_G=total_g, total_D=total_d)
