import csv

import pytest
import torch

from scenegan.config import TrainConfig
from scenegan.datasets import gen_balls_in_bowl, gen_stacks
from scenegan.training import (TrainingDiverged, init_train_state, init_weights,
                               load_train_state, save_train_state, train,
                               train_step)

from conftest import small_config


@pytest.fixture(scope="module")
def balls32(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    return gen_balls_in_bowl(0, 8, 4, out, image_side=32)


def _params_checksum(module) -> float:
    return float(sum(p.detach().double().abs().sum() for p in module.parameters()))


def test_init_weights_deterministic():
    cfg = small_config()
    a = init_train_state(cfg, TrainConfig(seed=3))
    b = init_train_state(cfg, TrainConfig(seed=3))
    c = init_train_state(cfg, TrainConfig(seed=4))
    assert _params_checksum(a.model) == _params_checksum(b.model)
    assert _params_checksum(a.model) != _params_checksum(c.model)
    for name, p in a.model.named_parameters():
        if name.endswith("bias"):
            assert p.abs().sum() == 0


def test_train_step_updates_both_nets(balls32):
    cfg = small_config()
    tcfg = TrainConfig(batch_size=4, seed=0, M=2)
    state = init_train_state(cfg, tcfg)
    before_g = _params_checksum(state.model)
    before_d = _params_checksum(state.disc)
    batch = torch.rand(4, 1, 3, 32, 32) * 2 - 1
    m = train_step(state, batch, cfg, tcfg)
    assert _params_checksum(state.model) != before_g
    assert _params_checksum(state.disc) != before_d
    assert state.d_updates == 1 and state.g_updates == 2
    assert set(m) >= {"step", "d_loss", "g_loss", "style_loss", "pos_loss"}


def test_train_step_rejects_clips_for_static():
    cfg = small_config()
    tcfg = TrainConfig(batch_size=2)
    state = init_train_state(cfg, tcfg)
    with pytest.raises(ValueError):
        train_step(state, torch.rand(2, 3, 3, 32, 32), cfg, tcfg)


def test_ten_step_checksum_reproducible():
    cfg = small_config(C=8, disc_base=4)
    tcfg = TrainConfig(batch_size=2, seed=1)
    sums = []
    for _ in range(2):
        state = init_train_state(cfg, tcfg)
        for step in range(10):
            batch = torch.rand(2, 1, 3, 32, 32,
                               generator=torch.Generator().manual_seed(step)) * 2 - 1
            train_step(state, batch, cfg, tcfg)
        sums.append(_params_checksum(state.model) + _params_checksum(state.disc))
    assert sums[0] == sums[1]


def test_resume_equals_continuous(tmp_path):
    cfg = small_config(C=8, disc_base=4)
    tcfg = TrainConfig(batch_size=2, seed=2)

    def batch(i):
        return torch.rand(2, 1, 3, 32, 32,
                          generator=torch.Generator().manual_seed(100 + i)) * 2 - 1

    straight = init_train_state(cfg, tcfg)
    for i in range(6):
        train_step(straight, batch(i), cfg, tcfg)

    state = init_train_state(cfg, tcfg)
    for i in range(3):
        train_step(state, batch(i), cfg, tcfg)
    save_train_state(state, tmp_path / "resume.pt")
    resumed = load_train_state(tmp_path / "resume.pt", cfg, tcfg)
    assert resumed.step == 3
    for i in range(3, 6):
        train_step(resumed, batch(i), cfg, tcfg)

    for pa, pb in zip(straight.model.parameters(), resumed.model.parameters()):
        assert torch.equal(pa, pb)
    for pa, pb in zip(straight.disc.parameters(), resumed.disc.parameters()):
        assert torch.equal(pa, pb)


def test_divergence_detection():
    cfg = small_config(C=8, disc_base=4)
    tcfg = TrainConfig(batch_size=2)
    state = init_train_state(cfg, tcfg)
    with torch.no_grad():
        for p in state.disc.parameters():
            p.fill_(float("nan"))
    with pytest.raises(TrainingDiverged):
        train_step(state, torch.rand(2, 1, 3, 32, 32), cfg, tcfg)


def test_train_driver_outputs(balls32, tmp_path):
    cfg = small_config(C=8, disc_base=4)
    tcfg = TrainConfig(batch_size=4, epochs=1, seed=0, checkpoint_every=1)
    final = train(balls32, cfg, tcfg, tmp_path, max_steps=2)
    assert final.exists()
    assert (tmp_path / "resume.pt").exists()
    assert (tmp_path / "checkpoint_0000001.ckpt").exists()
    with (tmp_path / "metrics.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2
    assert all(float(r["d_loss"]) == float(r["d_loss"]) for r in rows)


def test_train_driver_validates_sides(balls32, tmp_path):
    cfg = small_config(image_side=64)
    with pytest.raises(ValueError):
        train(balls32, cfg, TrainConfig(batch_size=2), tmp_path)


def test_train_dynamic_smoke(balls32, tmp_path):
    cfg = small_config(C=8, disc_base=4, variant="dynamic", clip_len=3)
    tcfg = TrainConfig(batch_size=2, epochs=1, seed=0)
    final = train(balls32, cfg, tcfg, tmp_path, max_steps=1)
    assert final.exists()


def test_ablation_flags_change_behavior():
    cfg = small_config(C=8, disc_base=4)
    state = init_train_state(cfg, TrainConfig(seed=0, batch_size=2))
    g = torch.Generator()
    g.manual_seed(0)
    z0, z, th = state.model.sample_latents(g, 2, K=2)
    full = state.model.correct(th, z, z0)
    off = state.model.correct(th, z, z0, use_interaction=False)
    assert torch.equal(off, th)
    assert not torch.equal(full, th)
    absolute = state.model.correct(th, z, z0, use_residual=False)
    assert torch.allclose(full - absolute, th, atol=1e-6)
