import pytest
import torch

from navdistill.config import ModelConfig, PretrainConfig, SimConfig, TrainRunConfig
from navdistill.simworld import DatasetConfig, make_dataset

TINY_SIM = SimConfig(image_height=16, image_width=16, steps=20)
TINY_MODEL = ModelConfig(d_model=16, layers=2, heads=2, conv_channels=(4, 8, 8, 8), decoder_hidden=32,
                         projector_hidden=32, projector_dim=8)


def tiny_run(**kw) -> TrainRunConfig:
    return TrainRunConfig(**{"learning_rate": 3e-3, "epochs": 2, "batch_size": 32, "seed": 0, **kw})


def tiny_pretrain(**kw) -> PretrainConfig:
    return PretrainConfig(**{"learning_rate": 3e-3, "epochs": 2, "batch_size": 32, "seed": 0, **kw})


@pytest.fixture(scope="session")
def tiny_data(tmp_path_factory):
    torch.set_num_threads(1)
    root = tmp_path_factory.mktemp("tiny")
    return make_dataset(DatasetConfig(out=str(root / "ds"), episode_count=16, seed=42, sim=TINY_SIM))


@pytest.fixture(scope="session")
def tiny_teacher(tiny_data):
    from navdistill.teacher import train_teacher

    return train_teacher(tiny_data, tiny_run(epochs=3), TINY_MODEL)


@pytest.fixture(scope="session")
def tiny_pretrained(tiny_data, tiny_teacher):
    from navdistill.student import pretrain_student

    return pretrain_student(tiny_data, tiny_teacher, tiny_pretrain())


@pytest.fixture(scope="session")
def tiny_policy(tiny_data, tiny_pretrained):
    from navdistill.student import finetune_student

    return finetune_student(tiny_data, tiny_pretrained, tiny_run())
