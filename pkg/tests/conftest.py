import numpy as np
import pytest

from pama_tts.config import build_config
from pama_tts.services import synthetic_corpus


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full training/acceptance runs (minutes)")


def pytest_addoption(parser):
    parser.addoption("--run-slow", action="store_true", default=False, help="run tests marked slow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


TINY = {
    "dtype": "float64",
    "token_embedding_dim": 4,
    "encoder_conv_channels": 4,
    "encoder_conv_kernel": 3,
    "encoder_conv_layers": 2,
    "encoder_hidden": 3,
    "duration_hidden": 4,
    "duration_kernel": 3,
    "attention_dim": 4,
    "prenet_dims": [4],
    "decoder_hidden": 5,
    "mel_dim": 8,
    "position_ceiling": 6,
    "position_embedding_dim": 2,
    "batch_size": 2,
    "checkpoint_every": 2,
    "log_every": 1,
    "max_decode_frames": 300,
}


@pytest.fixture
def tiny_cfg():
    return build_config(TINY)


@pytest.fixture
def tiny_corpus():
    return synthetic_corpus.generate(3, 4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
