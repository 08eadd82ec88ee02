"""Generator and discriminator building blocks.

All modules are channels-first (``N, C, H, W``). With ``base_channels=64`` the
encoder maps a 256x512 image to a 256-channel 64x128 feature, the decoder
mid-feature is 128x256x128 and the two discriminator scales emit 16x32 and
8x16 score maps.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F


# a smaller eps tightens output variance toward 1 but makes float32 gradients of
# the coarse discriminator scale (1x2 maps at the smallest legal input) unreliable
NORM_EPS = 1e-5


def _norm(channels: int) -> nn.InstanceNorm2d:
    return nn.InstanceNorm2d(channels, eps=NORM_EPS, affine=False, track_running_stats=False)


def _check_input(x: torch.Tensor, channels: int, multiple: int, what: str) -> None:
    if x.dim() != 4:
        raise ValueError(f"{what}: expected a 4-d (N, C, H, W) tensor, got shape {tuple(x.shape)}")
    if x.shape[1] != channels:
        raise ValueError(f"{what}: expected {channels} channels, got {x.shape[1]}")
    h, w = x.shape[-2:]
    if h % multiple or w % multiple:
        raise ValueError(f"{what}: spatial size {h}x{w} is not divisible by {multiple}")


class ResidualBlock(nn.Module):
    """conv3x3 -> IN -> ReLU -> conv3x3 -> IN, added to the input."""

    def __init__(self, channels: int, dilation: int = 1):
        super().__init__()
        self.branch = nn.Sequential(
            nn.Conv2d(channels, channels, 3, padding=dilation, dilation=dilation),
            _norm(channels),
            nn.ReLU(inplace=True),
            nn.Conv2d(channels, channels, 3, padding=dilation, dilation=dilation),
            _norm(channels),
        )

    def forward(self, x):
        return x + self.branch(x)


def _down(c_in, c_out):
    return [nn.Conv2d(c_in, c_out, 3, stride=2, padding=1), _norm(c_out), nn.ReLU(inplace=True)]


def _up(c_in, c_out):
    return [
        nn.ConvTranspose2d(c_in, c_out, 3, stride=2, padding=1, output_padding=1),
        _norm(c_out),
        nn.ReLU(inplace=True),
    ]


class Encoder(nn.Module):
    """Three convolutions (one 7x7, two strided) then four dilated residual blocks."""

    def __init__(self, base_channels: int = 64, n_blocks: int = 4, dilation: int = 2):
        super().__init__()
        c = base_channels
        self.feature_channels = 4 * c
        self.stem = nn.Sequential(
            nn.ReflectionPad2d(3),
            nn.Conv2d(3, c, 7),
            _norm(c),
            nn.ReLU(inplace=True),
            *_down(c, 2 * c),
            *_down(2 * c, 4 * c),
        )
        self.blocks = nn.Sequential(*[ResidualBlock(4 * c, dilation) for _ in range(n_blocks)])

    def forward(self, x):
        _check_input(x, 3, 4, "encoder")
        return self.blocks(self.stem(x))


class TNet(nn.Module):
    """Feature transfer network: residual blocks at feature resolution."""

    def __init__(self, channels: int = 256, n_blocks: int = 4):
        super().__init__()
        self.channels = channels
        self.blocks = nn.Sequential(*[ResidualBlock(channels) for _ in range(n_blocks)])

    def forward(self, f):
        _check_input(f, self.channels, 1, "tnet")
        return self.blocks(f)


class IdentityTNet(nn.Module):
    """Stand-in used when the transfer network is ablated."""

    def __init__(self, channels: int = 256):
        super().__init__()
        self.channels = channels

    def forward(self, f):
        _check_input(f, self.channels, 1, "tnet")
        return f


class Decoder(nn.Module):
    """Mirror of :class:`Encoder` ending in ``tanh``.

    With ``uncertainty_branch`` the forward pass returns ``(image, sigma)``
    where ``sigma`` (N, H, W) is predicted from the half-resolution
    mid-feature and is bounded below by ``sigma_floor``. Otherwise only the
    image is returned.
    """

    def __init__(
        self,
        base_channels: int = 64,
        n_blocks: int = 4,
        dilation: int = 2,
        uncertainty_branch: bool = False,
        sigma_floor: float = 1e-2,
    ):
        super().__init__()
        c = base_channels
        self.feature_channels = 4 * c
        self.has_uncertainty_branch = uncertainty_branch
        self.sigma_floor = sigma_floor
        self.blocks = nn.Sequential(*[ResidualBlock(4 * c, dilation) for _ in range(n_blocks)])
        self.up1 = nn.Sequential(*_up(4 * c, 2 * c))
        self.up2 = nn.Sequential(*_up(2 * c, c))
        self.to_rgb = nn.Sequential(nn.ReflectionPad2d(3), nn.Conv2d(c, 3, 7), nn.Tanh())
        if uncertainty_branch:
            self.sigma_head = nn.Sequential(
                *_up(2 * c, c // 2),
                nn.Conv2d(c // 2, 1, 3, padding=1),
            )

    def mid_feature(self, f):
        _check_input(f, self.feature_channels, 1, "decoder")
        return self.up1(self.blocks(f))

    def forward(self, f):
        mid = self.mid_feature(f)
        image = self.to_rgb(self.up2(mid))
        if not self.has_uncertainty_branch:
            return image
        sigma = F.softplus(self.sigma_head(mid)).squeeze(1) + self.sigma_floor
        return image, sigma


class PatchDiscriminator(nn.Module):
    """Four stride-2 convolutions and a score head; total downsampling 16."""

    def __init__(self, base_channels: int = 64, n_down: int = 4):
        super().__init__()
        layers = []
        c_in, c_out = 3, base_channels
        for _ in range(n_down):
            layers += [
                nn.Conv2d(c_in, c_out, 4, stride=2, padding=1),
                _norm(c_out),
                nn.LeakyReLU(0.2, inplace=True),
            ]
            c_in, c_out = c_out, min(2 * c_out, 8 * base_channels)
        layers.append(nn.Conv2d(c_in, 1, 3, padding=1))
        self.net = nn.Sequential(*layers)
        self.factor = 2**n_down

    def forward(self, x):
        return self.net(x).squeeze(1)


class MultiScaleDiscriminator(nn.Module):
    """Patch discriminators on the full image and a 2x average-pooled copy."""

    def __init__(self, base_channels: int = 64, n_scales: int = 2):
        super().__init__()
        self.scales = nn.ModuleList(PatchDiscriminator(base_channels) for _ in range(n_scales))
        self.multiple = self.scales[0].factor * 2 ** (n_scales - 1)

    def forward(self, x) -> list[torch.Tensor]:
        _check_input(x, 3, self.multiple, "discriminator")
        maps = []
        for i, disc in enumerate(self.scales):
            if i:
                x = F.avg_pool2d(x, 2)
            maps.append(disc(x))
        return maps


def init_weights(module: nn.Module, std: float = 0.02) -> None:
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.normal_(m.weight, 0.0, std)
            if m.bias is not None:
                nn.init.zeros_(m.bias)


class ModelBundle(nn.Module):
    """Both generators (encoders, transfer network, decoders) and both discriminators."""

    def __init__(
        self,
        base_channels: int = 64,
        use_tnet: bool = True,
        sigma_floor: float = 1e-2,
    ):
        super().__init__()
        c = base_channels
        self.enc_ab = Encoder(c)
        self.enc_ba = Encoder(c)
        self.tnet = TNet(4 * c) if use_tnet else IdentityTNet(4 * c)
        self.dec_ab = Decoder(c, uncertainty_branch=True, sigma_floor=sigma_floor)
        self.dec_ba = Decoder(c)
        self.disc_a = MultiScaleDiscriminator(c)
        self.disc_b = MultiScaleDiscriminator(c)

    def generator_modules(self) -> list[nn.Module]:
        return [self.enc_ab, self.enc_ba, self.tnet, self.dec_ab, self.dec_ba]

    def generator_parameters(self):
        for m in self.generator_modules():
            yield from m.parameters()


def init_model_bundle(cfg) -> ModelBundle:
    """Build a freshly initialised bundle from a :class:`TrainConfig`.

    Uses the global torch generator; call :func:`seed_all` first for
    reproducible weights.
    """
    bundle = ModelBundle(cfg.base_channels, use_tnet=cfg.use_tnet, sigma_floor=cfg.sigma_floor)
    init_weights(bundle)
    return bundle
