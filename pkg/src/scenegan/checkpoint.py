"""Checkpoint persistence: a zip container holding the config as JSON, one
raw little-endian float32 blob for all named parameters, and a sidecar index
of names/shapes/offsets. Saving is canonical (sorted names, fixed entry
timestamps), so save -> load -> save round-trips byte-identically."""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import torch

from .adversary import Discriminator
from .config import ModelConfig, TrainConfig
from .model import SceneModel

FORMAT_VERSION = 1
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


class UnsupportedVersionError(ValueError):
    pass


class CorruptCheckpointError(ValueError):
    pass


@dataclass
class ModelCheckpoint:
    model_cfg: ModelConfig
    train_cfg: TrainConfig
    params: dict[str, np.ndarray]  # name -> array; "model." / "disc." prefixes
    step: int = 0
    created: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    version: int = FORMAT_VERSION

    def save(self, path: str | Path) -> None:
        names = sorted(self.params)
        blob = io.BytesIO()
        index = []
        offset = 0
        for name in names:
            arr = np.ascontiguousarray(self.params[name])
            if arr.dtype != np.float32:
                raise ValueError(f"parameter {name} is not float32")
            raw = arr.astype("<f4", copy=False).tobytes()
            index.append({"name": name, "shape": list(arr.shape),
                          "offset": offset, "size": len(raw)})
            blob.write(raw)
            offset += len(raw)
        meta = {
            "format_version": self.version,
            "model_config": json.loads(self.model_cfg.to_json()),
            "train_config": json.loads(self.train_cfg.to_json()),
            "step": self.step,
            "created": self.created,
        }
        with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
            for entry, data in (
                ("config.json", json.dumps(meta, indent=1, sort_keys=True)),
                ("index.json", json.dumps(index, indent=1)),
                ("params.bin", blob.getvalue()),
            ):
                info = zipfile.ZipInfo(entry, date_time=_ZIP_EPOCH)
                zf.writestr(info, data)

    @classmethod
    def load(cls, path: str | Path) -> "ModelCheckpoint":
        try:
            with zipfile.ZipFile(path) as zf:
                meta = json.loads(zf.read("config.json"))
                if meta.get("format_version") != FORMAT_VERSION:
                    raise UnsupportedVersionError(
                        f"checkpoint format {meta.get('format_version')!r}, "
                        f"expected {FORMAT_VERSION}")
                index = json.loads(zf.read("index.json"))
                raw = zf.read("params.bin")
        except UnsupportedVersionError:
            raise
        except (zipfile.BadZipFile, KeyError, json.JSONDecodeError, OSError) as e:
            raise CorruptCheckpointError(f"unreadable checkpoint {path}: {e}") from e
        params = {}
        for rec in index:
            end = rec["offset"] + rec["size"]
            if end > len(raw):
                raise CorruptCheckpointError(f"truncated blob at {rec['name']}")
            arr = np.frombuffer(raw[rec["offset"]: end], dtype="<f4")
            params[rec["name"]] = arr.reshape(rec["shape"]).copy()
        return cls(
            model_cfg=ModelConfig.from_json(json.dumps(meta["model_config"])),
            train_cfg=TrainConfig.from_json(json.dumps(meta["train_config"])),
            params=params, step=meta["step"], created=meta["created"],
        )

    def build_model(self) -> SceneModel:
        model = SceneModel(self.model_cfg)
        self._load_into(model, "model.")
        model.eval()
        return model

    def build_discriminator(self) -> Discriminator:
        disc = Discriminator(self.model_cfg)
        self._load_into(disc, "disc.")
        disc.eval()
        return disc

    def _load_into(self, module: torch.nn.Module, prefix: str) -> None:
        sd = {name[len(prefix):]: torch.from_numpy(arr)
              for name, arr in self.params.items() if name.startswith(prefix)}
        module.load_state_dict(sd)


def checkpoint_from_modules(model: SceneModel, disc: Discriminator,
                            mcfg: ModelConfig, tcfg: TrainConfig,
                            step: int = 0) -> ModelCheckpoint:
    params = {}
    for prefix, module in (("model.", model), ("disc.", disc)):
        for name, t in module.state_dict().items():
            params[prefix + name] = t.detach().cpu().numpy().astype(np.float32)
    return ModelCheckpoint(model_cfg=mcfg, train_cfg=tcfg, params=params, step=step)


def save_checkpoint(state, mcfg: ModelConfig, tcfg: TrainConfig,
                    path: str | Path) -> None:
    ckpt = checkpoint_from_modules(state.model, state.disc, mcfg, tcfg, state.step)
    ckpt.save(path)


def load_checkpoint(path: str | Path) -> ModelCheckpoint:
    return ModelCheckpoint.load(path)
