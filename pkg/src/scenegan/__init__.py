"""Object-centric generative scene modeling.

Scenes are built from an interpretable latent state (a background code plus
per-object appearance and pose), corrected by a relational interaction
module, decoded into feature canvases and composed into images. Training is
adversarial; a dynamics head extends static scenes to short videos.
"""

from .config import ModelConfig, TrainConfig, balls_config, stacks_config, traffic_config
from .latents import LatentScene, SceneObject, sample_scene
from .model import SceneModel

__all__ = [
    "ModelConfig", "TrainConfig", "balls_config", "stacks_config",
    "traffic_config", "LatentScene", "SceneObject", "sample_scene",
    "SceneModel",
]

__version__ = "0.1.0"
