"""The three-term adversarial objective: real/fake GAN loss, per-layer style
loss on discriminator feature statistics, and the position regularizer with a
gradient-stopped pose target. All probabilities are clamped away from {0, 1}.
"""

from __future__ import annotations

import torch

PROB_EPS = 1e-7


def _log(p: torch.Tensor) -> torch.Tensor:
    return torch.log(p.clamp(PROB_EPS, 1.0 - PROB_EPS))


def loss_gan(d_real: torch.Tensor, d_fake: torch.Tensor,
             saturating: bool = True) -> tuple[torch.Tensor, torch.Tensor]:
    """(discriminator loss, generator loss), both to be minimized.

    The discriminator minimizes -[log D(real) + log(1 - D(fake))]. The
    generator minimizes log(1 - D(fake)) as written, or -log D(fake) in the
    non-saturating form.
    """
    d_loss = -(_log(d_real).mean() + _log(1.0 - d_fake).mean())
    if saturating:
        g_loss = _log(1.0 - d_fake).mean()
    else:
        g_loss = -_log(d_fake).mean()
    return d_loss, g_loss


def loss_style(real_probs: list[torch.Tensor], fake_probs: list[torch.Tensor],
               saturating: bool = True) -> tuple[torch.Tensor, torch.Tensor]:
    """Summed per-layer adversarial loss on style-head outputs."""
    if len(real_probs) != len(fake_probs):
        raise ValueError("layer count mismatch between real and fake")
    d_loss = sum(-(_log(r).mean() + _log(1.0 - f).mean())
                 for r, f in zip(real_probs, fake_probs))
    if saturating:
        g_loss = sum(_log(1.0 - f).mean() for f in fake_probs)
    else:
        g_loss = sum(-_log(f).mean() for f in fake_probs)
    return d_loss, g_loss


def loss_position(predicted: torch.Tensor, theta_target: torch.Tensor) -> torch.Tensor:
    """Squared distance between the regressed pose and the (detached) target.

    Gradients flow into the prediction branch only; the pose target is
    detached by the caller contract, which this function enforces.
    """
    return ((predicted - theta_target.detach()) ** 2).sum(dim=-1).mean()
