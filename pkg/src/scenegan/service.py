"""HTTP editing service.

Wraps a trained model in a small JSON API: create editing sessions, apply
edit commands, inspect per-object components, and roll out dynamics. Images
travel as base64 PNG. Sessions live in memory; edits to one session are
serialized by a per-session lock, and weights are never mutated.
"""

from __future__ import annotations

import json
import threading
import uuid
from pathlib import Path

import torch
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .checkpoint import ModelCheckpoint
from .config import ModelConfig
from .model import SceneModel
from .renderer import pose_to_pixel
from .studio import (SceneEditState, edit_scene, image_to_png_b64, new_edit_state,
                     render_components, render_edit_state, state_to_json)


class SessionRequest(BaseModel):
    seed: int = 0
    K: int | None = None
    with_background: bool = True


class EditRequest(BaseModel):
    command: dict


class SampleRequest(BaseModel):
    n: int = 1
    seed: int = 0
    K: int | None = None


class RolloutRequest(BaseModel):
    frames: int = 8


def create_app(model: SceneModel, cfg: ModelConfig, step: int = 0) -> FastAPI:
    app = FastAPI(title="scene editor")
    model.eval()
    sessions: dict[str, SceneEditState] = {}
    registry_lock = threading.Lock()

    def get_session(sid: str) -> SceneEditState:
        with registry_lock:
            state = sessions.get(sid)
        if state is None:
            raise HTTPException(status_code=404, detail=f"unknown session {sid}")
        return state

    def payload(state: SceneEditState) -> dict:
        return {"session": state_to_json(state),
                "image": image_to_png_b64(render_edit_state(model, state))}

    @app.get("/config")
    def get_config() -> dict:
        return {"model": json.loads(cfg.to_json()), "step": step,
                "image_side": cfg.image_side, "variant": cfg.variant}

    @app.post("/sessions")
    def create_session(req: SessionRequest) -> dict:
        sid = uuid.uuid4().hex
        with torch.no_grad():
            state = new_edit_state(model, req.seed, req.K, session_id=sid)
        state.with_background = req.with_background
        with registry_lock:
            sessions[sid] = state
        return payload(state)

    @app.get("/sessions/{sid}")
    def read_session(sid: str) -> dict:
        state = get_session(sid)
        with state.lock:
            return payload(state)

    @app.delete("/sessions/{sid}")
    def delete_session(sid: str) -> dict:
        with registry_lock:
            if sid not in sessions:
                raise HTTPException(status_code=404, detail=f"unknown session {sid}")
            del sessions[sid]
        return {"deleted": sid}

    @app.post("/sessions/{sid}/edit")
    def apply_edit(sid: str, req: EditRequest) -> dict:
        state = get_session(sid)
        with state.lock:
            try:
                with torch.no_grad():
                    img = edit_scene(model, state, req.command)
            except (ValueError, KeyError) as e:
                raise HTTPException(status_code=422, detail=str(e))
            return {"session": state_to_json(state), "image": image_to_png_b64(img)}

    @app.get("/sessions/{sid}/components")
    def components(sid: str) -> dict:
        state = get_session(sid)
        with state.lock:
            parts = render_components(model, state)
            poses = [pose_to_pixel(o.theta, cfg.image_side).tolist()
                     for o in state.scene.objects]
        return {
            "background": image_to_png_b64(parts["background"]),
            "components": [image_to_png_b64(c) for c in parts["components"]],
            "composite": image_to_png_b64(parts["composite"]),
            "pixel_centers": poses,
            "session": state_to_json(state),
        }

    @app.post("/sessions/{sid}/rollout")
    def rollout(sid: str, req: RolloutRequest) -> dict:
        if model.dynamics is None:
            raise HTTPException(status_code=422,
                                detail="model has no dynamics module")
        if req.frames < 1:
            raise HTTPException(status_code=422, detail="frames must be >= 1")
        state = get_session(sid)
        with state.lock:
            with torch.no_grad():
                frames, poses = model.rollout_scene(state.scene, req.frames)
        return {
            "frames": [image_to_png_b64(f) for f in frames],
            "poses": poses.tolist(),
            "pixel_centers": [
                [pose_to_pixel(poses[t, k], cfg.image_side).tolist()
                 for k in range(poses.shape[1])]
                for t in range(poses.shape[0])
            ],
        }

    @app.post("/sample")
    def sample(req: SampleRequest) -> list[dict]:
        if not (1 <= req.n <= 64):
            raise HTTPException(status_code=422, detail="n must be in [1, 64]")
        out = []
        for i in range(req.n):
            with torch.no_grad():
                state = new_edit_state(model, req.seed + i, req.K)
            out.append(payload(state))
        return out

    return app


def app_from_checkpoint(path: str | Path) -> FastAPI:
    ckpt = ModelCheckpoint.load(path)
    return create_app(ckpt.build_model(), ckpt.model_cfg, ckpt.step)
