"""Interpretable latent representation of a scene and its samplers.

A scene is a background appearance code plus K (appearance, pose) pairs.
Raw poses theta_hat are sampled independently; corrected poses theta are
filled in by the interaction module.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch

from .config import ModelConfig


@dataclass
class SceneObject:
    z: torch.Tensor  # (N_f,)
    theta_hat: torch.Tensor  # (2,)
    theta: torch.Tensor | None = None  # (2,), set after correction
    visible: bool = True
    scale_override: float | None = None  # window side override from editing


@dataclass
class LatentScene:
    z0: torch.Tensor  # (N_b,)
    objects: list[SceneObject] = field(default_factory=list)

    @property
    def K(self) -> int:
        return len(self.objects)

    def z_stack(self) -> torch.Tensor:
        return torch.stack([o.z for o in self.objects])

    def theta_hat_stack(self) -> torch.Tensor:
        return torch.stack([o.theta_hat for o in self.objects])

    def theta_stack(self) -> torch.Tensor:
        if any(o.theta is None for o in self.objects):
            raise ValueError("scene has uncorrected poses; run pose correction first")
        return torch.stack([o.theta for o in self.objects])

    def set_thetas(self, thetas: torch.Tensor) -> None:
        for obj, th in zip(self.objects, thetas):
            obj.theta = th

    def clone(self) -> "LatentScene":
        objs = [
            SceneObject(
                z=o.z.clone(),
                theta_hat=o.theta_hat.clone(),
                theta=None if o.theta is None else o.theta.clone(),
                visible=o.visible,
                scale_override=o.scale_override,
            )
            for o in self.objects
        ]
        return LatentScene(z0=self.z0.clone(), objects=objs)


def _uniform(rng: torch.Generator, lo: float, hi: float, *shape: int) -> torch.Tensor:
    return torch.rand(*shape, generator=rng) * (hi - lo) + lo


def sample_pose_batch(rng: torch.Generator, cfg: ModelConfig, *shape: int) -> torch.Tensor:
    """Raw poses of shape (*shape, 2), per-axis uniform over cfg.pose_range."""
    (lx, hx), (ly, hy) = cfg.pose_range
    x = _uniform(rng, lx, hx, *shape, 1)
    y = _uniform(rng, ly, hy, *shape, 1)
    return torch.cat([x, y], dim=-1)


def sample_scene(rng: torch.Generator, cfg: ModelConfig, K: int | None = None) -> LatentScene:
    """Draw a fresh scene: z0, K appearance codes and K raw poses.

    K defaults to a uniform draw from [K_min, K_max]. Corrected poses are
    left unset. For the ordered variant only the first raw pose is sampled;
    the chain conditions later objects on their predecessor, so theta_hat is
    pinned to zero for k >= 2.
    """
    if K is not None and K < 1:
        raise ValueError("K must be >= 1")
    if K is None:
        K = int(torch.randint(cfg.K_min, cfg.K_max + 1, (1,), generator=rng).item())
    z0 = _uniform(rng, -1.0, 1.0, cfg.N_b)
    zs = _uniform(rng, -1.0, 1.0, K, cfg.N_f)
    theta_hat = sample_pose_batch(rng, cfg, K)
    if cfg.variant == "ordered":
        theta_hat[1:] = 0.0
    objects = [SceneObject(z=zs[k], theta_hat=theta_hat[k]) for k in range(K)]
    return LatentScene(z0=z0, objects=objects)


def sample_background_eval(rng: torch.Generator, cfg: ModelConfig, half_range: float) -> torch.Tensor:
    """Evaluation-time background code, uniform over [-half_range, half_range].

    Backgrounds render best for codes drawn from a narrower range than the
    training distribution; half_range=1.0 reduces to the training sampler.
    """
    if not (0.0 < half_range <= 1.0):
        raise ValueError("half_range must be in (0, 1]")
    return _uniform(rng, -half_range, half_range, cfg.N_b)


def seeded_rng(seed: int) -> torch.Generator:
    g = torch.Generator()
    g.manual_seed(int(seed))
    return g
