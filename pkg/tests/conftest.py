from pathlib import Path

import pytest

from app.models.config_models import (
    ClassifierHyper,
    EncoderDims,
    GeneratorHyper,
    RegressorHyper,
    Track1Hyper,
    TrainHyper,
)
from app.utils.corpus import synthesize_corpus

ROOT = Path(__file__).resolve().parents[1]
DATA_DIR = ROOT / "data"
CONFIG_DIR = ROOT / "configs"


@pytest.fixture
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture
def config_dir() -> Path:
    return CONFIG_DIR


@pytest.fixture
def tiny_dims() -> EncoderDims:
    return EncoderDims(layers=1, model_dim=8, heads=2, ff_dim=16, max_len=32)


@pytest.fixture
def small_dims() -> EncoderDims:
    return EncoderDims(layers=1, model_dim=16, heads=2, ff_dim=32, max_len=64)


def train_hyper(dims: EncoderDims, epochs: int = 3, lr: float = 3e-3, batch_size: int = 8, seed: int = 3) -> TrainHyper:
    return TrainHyper(dims=dims, lr=lr, epochs=epochs, batch_size=batch_size, seed=seed)


@pytest.fixture
def make_train_hyper():
    return train_hyper


@pytest.fixture
def tiny_train(tiny_dims) -> TrainHyper:
    return train_hyper(tiny_dims)


@pytest.fixture
def tiny_track1(tiny_train) -> Track1Hyper:
    regressor = RegressorHyper()
    regressor.mlp.epochs = 20
    regressor.svr.steps = 200
    regressor.adaboost.rounds = 5
    regressor.gbt.trees = 5
    return Track1Hyper(encoder=tiny_train, regressor=regressor)


@pytest.fixture
def tiny_generator(tiny_train) -> GeneratorHyper:
    return GeneratorHyper(train=tiny_train, patience=2, aux_max_epochs=3)


@pytest.fixture
def tiny_classifier(tiny_train) -> ClassifierHyper:
    return ClassifierHyper(train=tiny_train)


@pytest.fixture
def emotion_corpus():
    return synthesize_corpus(14, seed=5, task="track2")


@pytest.fixture
def score_corpus():
    return synthesize_corpus(20, seed=5, task="track1")
