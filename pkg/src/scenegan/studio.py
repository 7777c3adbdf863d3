"""Scene editing over the interpretable latent space.

A SceneEditState is a latent scene plus per-object visibility and overrides;
every edit command returns a fresh render. Rendering is pure: the same edit
state against the same weights always produces the same pixels.

Pose edits are final: a user-set pose bypasses the relational correction and
stays pinned while other latents are re-corrected around it. Object counts
may leave the training range; out-of-distribution generation is a feature,
not an error.
"""

from __future__ import annotations

import base64
import io
import threading
from dataclasses import dataclass, field

import numpy as np
import torch
from PIL import Image

from .latents import LatentScene, SceneObject, sample_pose_batch, sample_scene, seeded_rng
from .model import SceneModel

EDIT_COMMANDS = (
    "set_pose", "set_appearance", "resample_appearance", "set_background",
    "resample_background", "add_object", "remove_object", "toggle_visible",
    "set_scale",
)


@dataclass
class SceneEditState:
    scene: LatentScene
    with_background: bool = True
    session_id: str = ""
    seed: int = 0
    _draws: int = 0  # resample counter; with the seed it pins the RNG state
    pinned: list[bool] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        if len(self.pinned) != self.scene.K:
            self.pinned = [False] * self.scene.K

    def next_rng(self) -> torch.Generator:
        self._draws += 1
        g = torch.Generator()
        g.manual_seed((self.seed * 1_000_003 + self._draws) % (2 ** 63))
        return g


def new_edit_state(model: SceneModel, seed: int, K: int | None = None,
                   session_id: str = "") -> SceneEditState:
    scene = sample_scene(seeded_rng(seed), model.cfg, K)
    model.prepare_scene(scene)
    return SceneEditState(scene=scene, session_id=session_id, seed=seed)


def _recorrect(model: SceneModel, state: SceneEditState) -> None:
    """Re-run the pose correction, preserving user-pinned poses."""
    scene = state.scene
    if scene.K == 0:
        return
    old = [o.theta for o in scene.objects]
    model.prepare_scene(scene)
    for k, keep in enumerate(state.pinned):
        if keep and old[k] is not None:
            scene.objects[k].theta = old[k]


def edit_scene(model: SceneModel, state: SceneEditState, command: dict
               ) -> torch.Tensor:
    """Apply one edit command in place and return the re-rendered image."""
    op = command.get("op")
    if op not in EDIT_COMMANDS:
        raise ValueError(f"unknown edit command {op!r}")
    scene = state.scene
    k = command.get("k")
    if op in ("set_pose", "set_appearance", "resample_appearance",
              "remove_object", "toggle_visible", "set_scale"):
        if k is None or not (0 <= int(k) < scene.K):
            raise ValueError(f"object index {k} out of range for K={scene.K}")
        k = int(k)

    cfg = model.cfg
    if op == "set_pose":
        theta = torch.tensor(command["theta"], dtype=torch.float32)
        if theta.shape != (2,) or not torch.isfinite(theta).all():
            raise ValueError("theta must be two finite numbers")
        scene.objects[k].theta = theta
        scene.objects[k].theta_hat = theta.clone()
        state.pinned[k] = True
    elif op == "set_appearance":
        z = torch.tensor(command["z"], dtype=torch.float32)
        if z.shape != (cfg.N_f,):
            raise ValueError(f"z must have length {cfg.N_f}")
        scene.objects[k].z = z
        _recorrect(model, state)
    elif op == "resample_appearance":
        g = state.next_rng()
        scene.objects[k].z = torch.rand(cfg.N_f, generator=g) * 2 - 1
        _recorrect(model, state)
    elif op == "set_background":
        z0 = torch.tensor(command["z0"], dtype=torch.float32)
        if z0.shape != (cfg.N_b,):
            raise ValueError(f"z0 must have length {cfg.N_b}")
        scene.z0 = z0
        _recorrect(model, state)
    elif op == "resample_background":
        g = state.next_rng()
        scene.z0 = torch.rand(cfg.N_b, generator=g) * 2 - 1
        _recorrect(model, state)
    elif op == "add_object":
        g = state.next_rng()
        z = torch.rand(cfg.N_f, generator=g) * 2 - 1
        theta_hat = sample_pose_batch(g, cfg, 1)[0]
        if cfg.variant == "ordered" and scene.K >= 1:
            theta_hat = torch.zeros(2)
        scene.objects.append(SceneObject(z=z, theta_hat=theta_hat))
        state.pinned.append(False)
        _recorrect(model, state)
    elif op == "remove_object":
        scene.objects.pop(k)
        state.pinned.pop(k)
        if scene.K > 0:
            _recorrect(model, state)
    elif op == "toggle_visible":
        scene.objects[k].visible = not scene.objects[k].visible
    elif op == "set_scale":
        side = float(command["window_side"])
        if not (1.0 <= side <= cfg.H):
            raise ValueError(f"window side must lie in [1, {cfg.H}]")
        scene.objects[k].scale_override = side
    return render_edit_state(model, state)


@torch.no_grad()
def render_edit_state(model: SceneModel, state: SceneEditState) -> torch.Tensor:
    scene = state.scene
    if scene.K == 0 or not any(o.visible for o in scene.objects):
        if not state.with_background:
            raise ValueError("nothing to render: background off and no objects")
        return model.render_background_only(scene.z0)
    return model.render_scene(scene, with_background=state.with_background)


@torch.no_grad()
def render_components(model: SceneModel, state: SceneEditState,
                      compose_with_background: bool = True) -> dict:
    """Background render, one render per object, and the composite."""
    scene = state.scene
    out = {"background": model.render_background_only(scene.z0),
           "components": [], "composite": render_edit_state(model, state)}
    for k in range(scene.K):
        out["components"].append(
            model.render_scene(scene, only_object=k,
                               with_background=compose_with_background))
    return out


# Wire helpers.

def image_to_png_b64(img: torch.Tensor) -> str:
    """(3, s, s) or (1, 3, s, s) tensor in [-1, 1] -> base64 PNG."""
    if img.dim() == 4:
        img = img[0]
    arr = ((img.clamp(-1, 1) + 1) / 2 * 255).round().byte()
    pil = Image.fromarray(arr.permute(1, 2, 0).cpu().numpy())
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def image_to_array(img: torch.Tensor) -> np.ndarray:
    if img.dim() == 4:
        img = img[0]
    return ((img.clamp(-1, 1) + 1) / 2 * 255).round().byte().permute(1, 2, 0).cpu().numpy()


def state_to_json(state: SceneEditState) -> dict:
    scene = state.scene
    return {
        "session_id": state.session_id,
        "seed": state.seed,
        "with_background": state.with_background,
        "z0": scene.z0.tolist(),
        "objects": [{
            "z": o.z.tolist(),
            "theta_hat": o.theta_hat.tolist(),
            "theta": None if o.theta is None else o.theta.tolist(),
            "visible": o.visible,
            "scale_override": o.scale_override,
            "pinned": state.pinned[i],
        } for i, o in enumerate(scene.objects)],
    }


def state_from_json(data: dict) -> SceneEditState:
    objects = []
    pinned = []
    for o in data["objects"]:
        objects.append(SceneObject(
            z=torch.tensor(o["z"], dtype=torch.float32),
            theta_hat=torch.tensor(o["theta_hat"], dtype=torch.float32),
            theta=None if o["theta"] is None else torch.tensor(o["theta"], dtype=torch.float32),
            visible=o.get("visible", True),
            scale_override=o.get("scale_override"),
        ))
        pinned.append(bool(o.get("pinned", False)))
    scene = LatentScene(z0=torch.tensor(data["z0"], dtype=torch.float32),
                        objects=objects)
    return SceneEditState(scene=scene, with_background=data.get("with_background", True),
                          session_id=data.get("session_id", ""),
                          seed=data.get("seed", 0), pinned=pinned)
