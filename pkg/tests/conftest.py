import pytest
import torch

from scenegan.config import ModelConfig, TrainConfig
from scenegan.model import SceneModel
from scenegan.training import init_weights


def small_config(**kw) -> ModelConfig:
    base = dict(N_b=4, N_f=6, H=8, H_prime=4, C=16, K_min=1, K_max=3,
                pose_range=((-0.8, 0.8), (-0.8, 0.8)), image_side=32,
                pooling="max", disc_base=8)
    base.update(kw)
    return ModelConfig(**base)


def make_model(cfg: ModelConfig, seed: int = 0) -> SceneModel:
    model = SceneModel(cfg)
    init_weights(model, seed)
    model.eval()
    return model


@pytest.fixture
def cfg() -> ModelConfig:
    return small_config()


@pytest.fixture
def model(cfg) -> SceneModel:
    return make_model(cfg)


@pytest.fixture
def train_cfg() -> TrainConfig:
    return TrainConfig(batch_size=4, epochs=1, seed=0)


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(max(1, torch.get_num_threads()))
    yield


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    try:
        from test_acceptance import RESULTS
    except Exception:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
