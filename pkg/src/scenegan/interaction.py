"""Relational pose machinery: the residual pose corrector in its general,
ordered and dynamic forms, plus the per-object window-size predictor.

All forward passes are batched over (B, K, ...) tensors and accept any K >= 1
with the same weights: pairwise terms are sum-pooled over the other objects,
which keeps every operation permutation-equivariant and K-extensible.

Input concatenation orders are fixed (pose, appearance, context) and are part
of the checkpoint contract.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from .config import ModelConfig
from .latents import LatentScene

LEAKY_SLOPE = 0.2


def _mlp(sizes: list[int], final_act: nn.Module | None) -> nn.Sequential:
    layers: list[nn.Module] = []
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        layers.append(nn.Linear(a, b))
        if i < len(sizes) - 2:
            layers.append(nn.LeakyReLU(LEAKY_SLOPE))
    if final_act is not None:
        layers.append(final_act)
    return nn.Sequential(*layers)


def _pairwise_sum(pair_net: nn.Module, self_state: torch.Tensor,
                  other_state: torch.Tensor) -> torch.Tensor:
    """Sum of pair_net([s_k, s_q]) over q != k.

    self_state/other_state: (B, K, D). Returns (B, K, out_dim). The empty sum
    at K=1 is the zero vector.
    """
    B, K, D = self_state.shape
    a = self_state.unsqueeze(2).expand(B, K, K, D)
    b = other_state.unsqueeze(1).expand(B, K, K, D)
    out = pair_net(torch.cat([a, b], dim=-1))
    mask = 1.0 - torch.eye(K, dtype=out.dtype, device=out.device)
    return (out * mask.view(1, K, K, 1)).sum(dim=2)


class PoseCorrector(nn.Module):
    """General-variant residual correction of raw poses (symmetric in objects).

    theta_k = theta_hat_k + corr(theta_hat_k, z_k, z0, h_k), with h_k the
    sum-pooled pairwise embedding of the other objects.
    """

    PAIR_HIDDEN = 32
    EMBED = 32

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        d = 2 + cfg.N_f
        self.pair_net = _mlp([2 * d, self.PAIR_HIDDEN, self.PAIR_HIDDEN, self.EMBED], None)
        self.corr_net = _mlp([d + cfg.N_b + self.EMBED, 32, 32, 2], nn.Tanh())

    def forward(self, theta_hat: torch.Tensor, z: torch.Tensor, z0: torch.Tensor,
                residual: bool = True) -> torch.Tensor:
        B, K, _ = theta_hat.shape
        state = torch.cat([theta_hat, z], dim=-1)
        h = _pairwise_sum(self.pair_net, state, state)
        z0e = z0.unsqueeze(1).expand(B, K, -1)
        corr = self.corr_net(torch.cat([theta_hat, z, z0e, h], dim=-1))
        return theta_hat + corr if residual else corr


class OrderedPoseCorrector(nn.Module):
    """Markov-chain pose sampler for naturally ordered scenes (stacks).

    The first pose is corrected against the background; every later pose is
    the predecessor's pose plus a learned increment. The increment is squashed
    per axis: sigmoid on x, tanh on y.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        d = 2 + cfg.N_f + cfg.N_b
        self.f0 = _mlp([d, 128, 64, 2], nn.Tanh())
        self.f1 = _mlp([d, 128, 64, 2], None)

    def step_increment(self, prev_theta: torch.Tensor, prev_z: torch.Tensor,
                       z0: torch.Tensor) -> torch.Tensor:
        raw = self.f1(torch.cat([prev_theta, prev_z, z0], dim=-1))
        return torch.stack([torch.sigmoid(raw[..., 0]), torch.tanh(raw[..., 1])], dim=-1)

    def forward(self, theta_hat: torch.Tensor, z: torch.Tensor, z0: torch.Tensor,
                residual: bool = True) -> torch.Tensor:
        B, K, _ = theta_hat.shape
        th1 = theta_hat[:, 0]
        corr = self.f0(torch.cat([th1, z[:, 0], z0], dim=-1))
        thetas = [th1 + corr if residual else corr]
        for k in range(1, K):
            thetas.append(thetas[-1] + self.step_increment(thetas[-1], z[:, k - 1], z0))
        return torch.stack(thetas, dim=1)


class DynamicsModel(nn.Module):
    """NPE-style incremental velocity updates over a 3-deep velocity buffer.

    Tracks are (B, K, 3, 2) tensors ordered oldest to newest; a push evicts
    the oldest entry.
    """

    PAIR_HIDDEN = 32
    EMBED = 32
    VEL_DEPTH = 3

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        vdim = 2 * self.VEL_DEPTH
        d = 2 + cfg.N_f + vdim
        self.velocity_scale = cfg.velocity_scale
        self.e_v = _mlp([cfg.N_f + cfg.N_b + 2, 128, 128, vdim], nn.Tanh())
        self.pair_net = _mlp([2 * d, self.PAIR_HIDDEN, self.PAIR_HIDDEN, self.EMBED], None)
        self.update_net = _mlp([d + cfg.N_b + self.EMBED, 32, 32, 2], nn.Tanh())

    def init_tracks(self, theta: torch.Tensor, z: torch.Tensor, z0: torch.Tensor) -> torch.Tensor:
        B, K, _ = theta.shape
        z0e = z0.unsqueeze(1).expand(B, K, -1)
        v = self.velocity_scale * self.e_v(torch.cat([z, z0e, theta], dim=-1))
        return v.view(B, K, self.VEL_DEPTH, 2)

    def step(self, theta: torch.Tensor, tracks: torch.Tensor, z: torch.Tensor,
             z0: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """One frame advance; returns (new poses, new tracks, emitted velocity)."""
        B, K, _ = theta.shape
        state = torch.cat([theta, z, tracks.flatten(2)], dim=-1)
        h = _pairwise_sum(self.pair_net, state, state)
        z0e = z0.unsqueeze(1).expand(B, K, -1)
        v = self.velocity_scale * self.update_net(torch.cat([state, z0e, h], dim=-1))
        new_theta = theta + v
        new_tracks = torch.cat([tracks[:, :, 1:], v.unsqueeze(2)], dim=2)
        return new_theta, new_tracks, v


class ScalePredictor(nn.Module):
    """Per-object foreground window side: H'_k = H' * (1 + sc(z0, theta_k, z_k))."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.sc = _mlp([cfg.N_b + 2 + cfg.N_f, 32, 32, 1], nn.Tanh())

    def forward(self, theta: torch.Tensor, z: torch.Tensor, z0: torch.Tensor,
                H_prime: float, H: int) -> torch.Tensor:
        B, K, _ = theta.shape
        z0e = z0.unsqueeze(1).expand(B, K, -1)
        s = self.sc(torch.cat([z0e, theta, z], dim=-1)).squeeze(-1)
        return (H_prime * (1.0 + s)).clamp(min=1.0, max=float(H))


# Scene-level wrappers (single scene, unbatched).

def correct_poses(scene: LatentScene, w: PoseCorrector) -> torch.Tensor:
    """Corrected poses (K, 2) for a scene with raw poses set."""
    if scene.K < 1:
        raise ValueError("scene has no objects")
    return w(scene.theta_hat_stack().unsqueeze(0), scene.z_stack().unsqueeze(0),
             scene.z0.unsqueeze(0))[0]


def correct_poses_ordered(scene: LatentScene, w: OrderedPoseCorrector) -> torch.Tensor:
    if scene.K < 1:
        raise ValueError("scene has no objects")
    return w(scene.theta_hat_stack().unsqueeze(0), scene.z_stack().unsqueeze(0),
             scene.z0.unsqueeze(0))[0]


def init_velocities(scene: LatentScene, w: DynamicsModel) -> torch.Tensor:
    """Initial velocity tracks (K, 3, 2) from appearances and corrected poses."""
    return w.init_tracks(scene.theta_stack().unsqueeze(0), scene.z_stack().unsqueeze(0),
                         scene.z0.unsqueeze(0))[0]


def step_dynamics(poses: torch.Tensor, tracks: torch.Tensor, scene: LatentScene,
                  w: DynamicsModel) -> tuple[torch.Tensor, torch.Tensor]:
    """Advance one frame; poses (K, 2), tracks (K, 3, 2)."""
    if tracks is None:
        raise ValueError("velocity tracks not initialized")
    th, tr, _ = w.step(poses.unsqueeze(0), tracks.unsqueeze(0),
                       scene.z_stack().unsqueeze(0), scene.z0.unsqueeze(0))
    return th[0], tr[0]


def rollout(scene: LatentScene, w: DynamicsModel, T: int) -> torch.Tensor:
    """Pose trajectory (T, K, 2); frame 0 is the scene's corrected poses."""
    if T < 1:
        raise ValueError("T must be >= 1")
    poses = scene.theta_stack()
    frames = [poses]
    tracks = init_velocities(scene, w)
    for _ in range(T - 1):
        poses, tracks = step_dynamics(poses, tracks, scene, w)
        frames.append(poses)
    return torch.stack(frames)


def predict_scales(scene: LatentScene, w: ScalePredictor, H_prime: float, H: int) -> torch.Tensor:
    """Per-object window sides (K,), clamped to [1 cell, H]."""
    return w(scene.theta_stack().unsqueeze(0), scene.z_stack().unsqueeze(0),
             scene.z0.unsqueeze(0), H_prime, H)[0]
