import numpy as np
import pytest

from lfcodec import LightField, ModelConfig, build_model, synthetic_light_field

TOY_KWARGS = dict(grid=(3, 3), spatial=32, channel_schedule=(8, 16, 32, 64, 128),
                  decoder_out_channels=24)


@pytest.fixture
def toy_config():
    return ModelConfig(**TOY_KWARGS, init_seed=7)


@pytest.fixture
def toy_model(toy_config):
    return build_model(toy_config)


@pytest.fixture
def toy_field():
    return synthetic_light_field(3, 32, seed=1)


@pytest.fixture
def random_field():
    def make(grid=3, size=32, seed=0):
        rng = np.random.default_rng(seed)
        return LightField(rng.random((grid, grid, size, size, 3), dtype=np.float32))
    return make
