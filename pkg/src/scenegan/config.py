"""Model and training configuration.

All spatial quantities follow a single convention: poses live in normalized
canvas coordinates [-1, 1]^2 where +-1 corresponds to +-H/2 grid cells (and,
after rendering, to the image edges).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

VARIANTS = ("general", "ordered", "dynamic")
POOLINGS = ("max", "sum")


@dataclass
class ModelConfig:
    """Static description of the generative model.

    pose_range is per-axis: ((lo_x, hi_x), (lo_y, hi_y)), as fractions of the
    canvas in [-1, 1]. Asymmetric ranges are allowed (stacks sample the base
    object only in the upper half of the scene, for instance).
    """

    N_b: int = 3
    N_f: int = 1
    H: int = 16
    H_prime: int = 8
    C: int = 256
    K_min: int = 2
    K_max: int = 2
    pose_range: tuple[tuple[float, float], tuple[float, float]] = (
        (-0.8, 0.8),
        (-0.8, 0.8),
    )
    image_side: int = 128
    pooling: str = "max"
    variant: str = "general"
    scale_enabled: bool = False
    # Width of the first discriminator layer; later layers double it.
    disc_base: int = 64
    # One learned foreground template per object slot, driven by a constant
    # style vector (the balls preset uses this); otherwise a single shared
    # template modulated by z_k.
    per_object_templates: bool = False
    # Clip length the dynamic discriminator is trained on (ignored otherwise).
    clip_len: int = 1
    # Per-frame velocity bound for the dynamic variant, in normalized pose
    # units. The transition head's tanh output is multiplied by this, so no
    # single step can move an object more than velocity_scale along an axis.
    # Without the bound the adversarial signal can push motion past the canvas
    # edge early in training, after which translated content vanishes and the
    # pose gradient with it, freezing the pathology in place.
    velocity_scale: float = 0.25

    def __post_init__(self):
        self.pose_range = tuple(tuple(float(v) for v in axis) for axis in self.pose_range)
        self.validate()

    def validate(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.pooling not in POOLINGS:
            raise ValueError(f"unknown pooling {self.pooling!r}")
        if not self.H_prime < self.H:
            raise ValueError("H_prime must be smaller than H")
        if self.K_min < 1 or self.K_min > self.K_max:
            raise ValueError("need 1 <= K_min <= K_max")
        if self.C <= 0:
            raise ValueError("C must be positive")
        if self.velocity_scale <= 0:
            raise ValueError("velocity_scale must be positive")
        for lo, hi in self.pose_range:
            if not (-1.0 <= lo <= hi <= 1.0):
                raise ValueError("pose_range must satisfy -1 <= lo <= hi <= 1 per axis")
        factor = self.image_side / self.H
        if factor < 1 or factor != int(factor) or int(factor) & (int(factor) - 1):
            raise ValueError("image_side must be H times a power of two")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        return cls(**_detuple(json.loads(text)))

    def replace(self, **kw) -> "ModelConfig":
        return replace(self, **kw)


@dataclass
class TrainConfig:
    """Optimization settings for adversarial training."""

    learning_rate: float = 1e-3
    adam_beta1: float = 0.0
    adam_beta2: float = 0.999
    M: int = 1  # generator updates per discriminator update
    epochs: int = 1
    # For the balls preset an "epoch" is a fixed iteration count rather than a
    # full pass over the data.
    iters_per_epoch: int = 0  # 0 means one full pass
    batch_size: int = 32
    seed: int = 0
    saturating_g_loss: bool = True
    # Ablation switches.
    use_interaction: bool = True  # identity pose correction when False
    use_residual: bool = True
    use_position_reg: bool = True
    checkpoint_every: int = 0  # steps; 0 disables periodic checkpoints

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        return cls(**json.loads(text))

    def replace(self, **kw) -> "TrainConfig":
        return replace(self, **kw)


def _detuple(d: dict) -> dict:
    if "pose_range" in d:
        d["pose_range"] = tuple(tuple(ax) for ax in d["pose_range"])
    return d


# Presets mirroring the published hyper-parameter table, scaled to desk size
# where noted. The "balls" rows use sum pooling, beta1=0.5 and a per-object
# foreground template with a constant style vector.

def balls_config(image_side: int = 64, desk: bool = True) -> tuple[ModelConfig, TrainConfig]:
    mc = ModelConfig(
        N_b=3, N_f=1, K_min=2, K_max=2,
        pose_range=((-0.8, 0.8), (-0.8, 0.8)),
        H=16, H_prime=8, C=256 if not desk else 64,
        image_side=image_side, pooling="sum", variant="general",
        disc_base=64 if not desk else 32,
        per_object_templates=True,
    )
    tc = TrainConfig(learning_rate=1e-3, adam_beta1=0.5, M=1, epochs=60,
                     iters_per_epoch=10_000)
    return mc, tc


def stacks_config(image_side: int = 64, desk: bool = True) -> tuple[ModelConfig, TrainConfig]:
    mc = ModelConfig(
        N_b=12, N_f=64, K_min=2, K_max=5,
        pose_range=((-0.6, 0.6), (0.0, 0.6)),
        H=16, H_prime=8 if desk else 4, C=256 if not desk else 64,
        image_side=image_side, pooling="max", variant="ordered",
        disc_base=64 if not desk else 32,
    )
    tc = TrainConfig(learning_rate=1e-3, adam_beta1=0.0, M=2, epochs=30)
    return mc, tc


def traffic_config(image_side: int = 64, desk: bool = True) -> tuple[ModelConfig, TrainConfig]:
    mc = ModelConfig(
        N_b=1, N_f=20, K_min=1, K_max=5,
        pose_range=((-0.6, 0.6), (-0.6, 0.6)),
        H=16, H_prime=8 if desk else 6, C=256 if not desk else 64,
        image_side=image_side, pooling="max", variant="general",
        disc_base=64 if not desk else 32,
    )
    tc = TrainConfig(learning_rate=1e-4, adam_beta1=0.0, M=2, epochs=20)
    return mc, tc


PRESETS = {
    "balls": balls_config,
    "stacks": stacks_config,
    "traffic": traffic_config,
}
