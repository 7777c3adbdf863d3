"""Generator-side bundle: latent samplers, pose correction, decoders and the
renderer wired together per variant, with batched paths for training and
scene-level paths for editing and evaluation."""

from __future__ import annotations

import torch
import torch.nn as nn

from .config import ModelConfig
from .interaction import (DynamicsModel, OrderedPoseCorrector, PoseCorrector,
                          ScalePredictor)
from .latents import LatentScene, sample_pose_batch
from .renderer import SceneRenderer, compose, translate_canvas


class SceneModel(nn.Module):
    """All learnable generator-side pieces for one configuration."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.renderer = SceneRenderer(cfg)
        if cfg.variant == "ordered":
            self.interaction = OrderedPoseCorrector(cfg)
        else:
            self.interaction = PoseCorrector(cfg)
        self.dynamics = DynamicsModel(cfg) if cfg.variant == "dynamic" else None
        self.scale = ScalePredictor(cfg) if cfg.scale_enabled else None

    # Batched latent sampling for training.

    def sample_latents(self, rng: torch.Generator, B: int, K: int | None = None
                       ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        cfg = self.cfg
        if K is None:
            K = int(torch.randint(cfg.K_min, cfg.K_max + 1, (1,), generator=rng).item())
        z0 = torch.rand(B, cfg.N_b, generator=rng) * 2 - 1
        z = torch.rand(B, K, cfg.N_f, generator=rng) * 2 - 1
        theta_hat = sample_pose_batch(rng, cfg, B, K)
        if cfg.variant == "ordered":
            theta_hat[:, 1:] = 0.0
        return z0, z, theta_hat

    def correct(self, theta_hat: torch.Tensor, z: torch.Tensor, z0: torch.Tensor,
                use_interaction: bool = True, use_residual: bool = True) -> torch.Tensor:
        if not use_interaction:
            return theta_hat
        return self.interaction(theta_hat, z, z0, residual=use_residual)

    def object_scales(self, theta: torch.Tensor, z: torch.Tensor,
                      z0: torch.Tensor) -> torch.Tensor | None:
        if self.scale is None:
            return None
        return self.scale(theta, z, z0, self.cfg.H_prime, self.cfg.H)

    def compose_canvases(self, z0: torch.Tensor, z: torch.Tensor, theta: torch.Tensor,
                         scales: torch.Tensor | None = None) -> torch.Tensor:
        """Scene tensor (B, C, H, H) for batched latents with corrected poses."""
        r = self.renderer
        canvases = [r.decode_background(z0)]
        for k in range(z.shape[1]):
            sk = None if scales is None else scales[:, k]
            psi = r.decode_foreground(z[:, k], sk, object_index=k)
            canvases.append(translate_canvas(psi, theta[:, k]))
        return compose(canvases, self.cfg.pooling)

    def generate(self, z0: torch.Tensor, z: torch.Tensor, theta: torch.Tensor,
                 scales: torch.Tensor | None = None) -> torch.Tensor:
        return self.renderer.render(self.compose_canvases(z0, z, theta, scales))

    def generate_clip(self, z0: torch.Tensor, z: torch.Tensor, theta0: torch.Tensor,
                      T: int) -> tuple[torch.Tensor, torch.Tensor]:
        """T-frame video (B, T, 3, s, s) plus the pose trajectory (T, B, K, 2)."""
        if self.dynamics is None:
            raise ValueError("not a dynamic model")
        poses = theta0
        tracks = self.dynamics.init_tracks(poses, z, z0)
        frames, trajectory = [], [poses]
        frames.append(self.generate(z0, z, poses,
                                    self.object_scales(poses, z, z0)))
        for _ in range(T - 1):
            poses, tracks, _ = self.dynamics.step(poses, tracks, z, z0)
            trajectory.append(poses)
            frames.append(self.generate(z0, z, poses,
                                        self.object_scales(poses, z, z0)))
        return torch.stack(frames, dim=1), torch.stack(trajectory)

    # Scene-level helpers.

    def prepare_scene(self, scene: LatentScene, use_interaction: bool = True,
                      use_residual: bool = True) -> LatentScene:
        """Fill in corrected poses; objects edited to a fixed pose keep it."""
        th = self.correct(scene.theta_hat_stack().unsqueeze(0),
                          scene.z_stack().unsqueeze(0),
                          scene.z0.unsqueeze(0),
                          use_interaction, use_residual)[0]
        scene.set_thetas(th)
        return scene

    def render_scene(self, scene: LatentScene, only_object: int | None = None,
                     with_background: bool = True) -> torch.Tensor:
        scales = None
        if self.scale is not None and scene.K > 0:
            scales = self.scale(scene.theta_stack().unsqueeze(0),
                                scene.z_stack().unsqueeze(0),
                                scene.z0.unsqueeze(0),
                                self.cfg.H_prime, self.cfg.H)[0]
        return self.renderer.render_scene(scene, only_object, with_background, scales)

    def render_background_only(self, z0: torch.Tensor) -> torch.Tensor:
        return self.renderer.render(self.renderer.decode_background(z0.unsqueeze(0)))

    def rollout_scene(self, scene: LatentScene, T: int
                      ) -> tuple[torch.Tensor, torch.Tensor]:
        """Frames (T, 3, s, s) and poses (T, K, 2) for a prepared scene."""
        if self.dynamics is None:
            raise ValueError("not a dynamic model")
        frames, traj = self.generate_clip(scene.z0.unsqueeze(0),
                                          scene.z_stack().unsqueeze(0),
                                          scene.theta_stack().unsqueeze(0), T)
        return frames[0], traj[:, 0]
