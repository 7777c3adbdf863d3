"""Discriminator stack: shared spectrally-normalized backbone, the real/fake
head, the position-regression head, and per-layer style-statistic heads.

The backbone downsamples with stride-2 5x5 convolutions until the spatial
side is 4, then flattens. The real/fake and position heads consume the same
flattened features. Style heads act on per-channel spatial mean/variance of
the pre-normalization activations of every layer except the first, and carry
no spectral normalization.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.nn.utils import spectral_norm

from .config import ModelConfig

LEAKY_SLOPE = 0.2


def layer_style_stats(phi: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Per-channel spatial mean and biased (1/WH) variance of (B, C, H, W)."""
    mu = phi.mean(dim=(2, 3))
    var = ((phi - mu.unsqueeze(-1).unsqueeze(-1)) ** 2).mean(dim=(2, 3))
    return mu, var


class Discriminator(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        in_ch = 3 * (cfg.clip_len if cfg.variant == "dynamic" else 1)
        self.in_channels = in_ch
        n_layers = (cfg.image_side // 4).bit_length() - 1
        if n_layers < 2:
            raise ValueError("image side too small for the backbone")
        chans = [min(cfg.disc_base * 2 ** i, 1024) for i in range(n_layers)]
        self.convs = nn.ModuleList()
        self.norms = nn.ModuleList()
        prev = in_ch
        for i, ch in enumerate(chans):
            self.convs.append(spectral_norm(nn.Conv2d(prev, ch, 5, stride=2, padding=2)))
            if i > 0:
                # Affine instance-norm weights are themselves spectrally
                # normalized, matching the training recipe of the backbone.
                self.norms.append(spectral_norm(
                    nn.InstanceNorm2d(ch, affine=True, track_running_stats=False)))
            prev = ch
        flat = chans[-1] * 16
        self.disc_head = spectral_norm(nn.Linear(flat, 1))
        self.pos_head = spectral_norm(nn.Linear(flat, 2))
        # One plain linear head per monitored layer (layers 2..n), on (mu, var).
        self.style_heads = nn.ModuleList([nn.Linear(2 * ch, 1) for ch in chans[1:]])

    def backbone(self, x: torch.Tensor) -> tuple[torch.Tensor, list[torch.Tensor]]:
        """Flattened features plus retained pre-normalization layer features."""
        if x.shape[1] != self.in_channels:
            raise ValueError(
                f"expected {self.in_channels} input channels, got {x.shape[1]}")
        phis: list[torch.Tensor] = []
        for i, conv in enumerate(self.convs):
            x = conv(x)
            if i > 0:
                phis.append(x)
                x = self.norms[i - 1](x)
            x = F.leaky_relu(x, LEAKY_SLOPE)
        return x.flatten(1), phis

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, list[torch.Tensor]]:
        """Real/fake probability in (0, 1) and the retained layer features."""
        flat, phis = self.backbone(x)
        return torch.sigmoid(self.disc_head(flat)).squeeze(-1), phis

    def style_probs(self, phis: list[torch.Tensor]) -> list[torch.Tensor]:
        probs = []
        for head, phi in zip(self.style_heads, phis):
            mu, var = layer_style_stats(phi)
            probs.append(torch.sigmoid(head(torch.cat([mu, var], dim=-1))).squeeze(-1))
        return probs

    def regress_position(self, x: torch.Tensor) -> torch.Tensor:
        flat, _ = self.backbone(x)
        return torch.tanh(self.pos_head(flat))


def discriminate(x: torch.Tensor, w: Discriminator) -> tuple[torch.Tensor, list[torch.Tensor]]:
    return w(x)


def style_discriminate(x: torch.Tensor, w: Discriminator) -> list[torch.Tensor]:
    _, phis = w(x)
    return w.style_probs(phis)


def regress_position(x: torch.Tensor, w: Discriminator) -> torch.Tensor:
    return w.regress_position(x)
