import hashlib
import zipfile

import numpy as np
import pytest
import torch

from scenegan.adversary import Discriminator
from scenegan.checkpoint import (CorruptCheckpointError, ModelCheckpoint,
                                 UnsupportedVersionError, checkpoint_from_modules)
from scenegan.config import TrainConfig
from scenegan.training import init_weights

from conftest import make_model, small_config


@pytest.fixture
def ckpt():
    cfg = small_config()
    model = make_model(cfg, seed=0)
    disc = Discriminator(cfg)
    init_weights(disc, 1)
    return checkpoint_from_modules(model, disc, cfg, TrainConfig(), step=42)


def test_roundtrip_byte_identical(ckpt, tmp_path):
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    ckpt.save(p1)
    ModelCheckpoint.load(p1).save(p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_save_deterministic(ckpt, tmp_path):
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    ckpt.save(p1)
    ckpt.save(p2)
    h1 = hashlib.sha256(p1.read_bytes()).hexdigest()
    assert h1 == hashlib.sha256(p2.read_bytes()).hexdigest()


def test_loaded_model_reproduces_outputs(ckpt, tmp_path):
    path = tmp_path / "m.ckpt"
    ckpt.save(path)
    loaded = ModelCheckpoint.load(path)
    assert loaded.step == 42
    model_a = make_model(small_config(), seed=0)
    model_b = loaded.build_model()
    g = torch.Generator()
    g.manual_seed(0)
    z0, z, th = model_a.sample_latents(g, 2, K=2)
    with torch.no_grad():
        ia = model_a.generate(z0, z, model_a.correct(th, z, z0))
        ib = model_b.generate(z0, z, model_b.correct(th, z, z0))
    assert torch.equal(ia, ib)


def test_discriminator_roundtrip(ckpt, tmp_path):
    path = tmp_path / "m.ckpt"
    ckpt.save(path)
    disc = ModelCheckpoint.load(path).build_discriminator()
    x = torch.rand(2, 3, 32, 32)
    with torch.no_grad():
        p, _ = disc(x)
    assert p.shape == (2,)


def test_unsupported_version(ckpt, tmp_path):
    path = tmp_path / "m.ckpt"
    ckpt.version = 999
    ckpt.save(path)
    with pytest.raises(UnsupportedVersionError):
        ModelCheckpoint.load(path)


def test_corrupt_file(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"not a zip at all")
    with pytest.raises(CorruptCheckpointError):
        ModelCheckpoint.load(path)


def test_truncated_blob(ckpt, tmp_path):
    path = tmp_path / "m.ckpt"
    ckpt.save(path)
    # Rewrite the archive with a shortened parameter blob.
    out = tmp_path / "cut.ckpt"
    with zipfile.ZipFile(path) as zin, zipfile.ZipFile(out, "w") as zout:
        for entry in zin.namelist():
            data = zin.read(entry)
            if entry == "params.bin":
                data = data[: len(data) // 2]
            zout.writestr(entry, data)
    with pytest.raises(CorruptCheckpointError):
        ModelCheckpoint.load(out)


def test_non_float32_rejected(ckpt, tmp_path):
    ckpt.params["model.bad"] = np.zeros(3, dtype=np.float64)
    with pytest.raises(ValueError):
        ckpt.save(tmp_path / "m.ckpt")


def test_created_timestamp_preserved(ckpt, tmp_path):
    path = tmp_path / "m.ckpt"
    ckpt.save(path)
    assert ModelCheckpoint.load(path).created == ckpt.created
