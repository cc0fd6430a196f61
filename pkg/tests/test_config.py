import json

import pytest

from navdistill.cli import resolve_config
from navdistill.config import Config, ModelConfig, desk_preset, load_config, model_config_hash
from navdistill.errors import ConfigError


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigError):
        Config.from_dict({"teacher": {"epoch": 3}})
    with pytest.raises(ConfigError):
        Config.from_dict({"extra": 1})


def test_invalid_values_are_rejected():
    with pytest.raises(ConfigError):
        Config.from_dict({"model": {"d_model": 30, "heads": 4}})
    with pytest.raises(ConfigError):
        Config.from_dict({"pretrain": {"mask_prob": 1.5}})


def test_json_round_trip(tmp_path):
    cfg = desk_preset().with_seed(7)
    p = tmp_path / "c.json"
    p.write_text(cfg.to_json())
    assert load_config(p) == cfg
    assert load_config(p).to_json() == cfg.to_json()


def test_seed_propagates_to_runs():
    cfg = Config().with_seed(11)
    assert cfg.seed == cfg.teacher.seed == cfg.pretrain.seed == cfg.finetune.seed == 11


def test_seed_precedence(tmp_path, monkeypatch):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"seed": 3}))
    monkeypatch.delenv("N2N_SEED", raising=False)
    assert resolve_config("default", str(p)).seed == 3
    assert resolve_config("default", str(p), seed=4).seed == 4
    monkeypatch.setenv("N2N_SEED", "5")
    assert resolve_config("default", str(p), seed=4).finetune.seed == 5
    monkeypatch.setenv("N2N_SEED", "five")
    with pytest.raises(ConfigError):
        resolve_config()


def test_partial_file_overlays_the_preset(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"teacher": {"epochs": 1}}))
    cfg = resolve_config("desk", str(p))
    assert cfg.teacher.epochs == 1
    assert cfg.teacher.learning_rate == desk_preset().teacher.learning_rate
    with pytest.raises(ConfigError):
        resolve_config("nope")


def test_model_hash_tracks_architecture_only():
    cfg = Config()
    h = model_config_hash(cfg.sim, cfg.model)
    assert h == model_config_hash(cfg.sim, ModelConfig(**cfg.model.model_dump()))
    assert h != model_config_hash(cfg.sim, cfg.model.model_copy(update={"layers": 1}))
