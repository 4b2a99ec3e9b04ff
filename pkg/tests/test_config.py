from pathlib import Path

import pytest

from pama_tts.config import Config, build_config, dump_config, load_config, parse_config_text
from pama_tts.errors import ConfigError
from pama_tts.services.model_assembly import PamaModel

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture(autouse=True)
def no_seed_env(monkeypatch):
    monkeypatch.delenv("PAMA_SEED", raising=False)


def test_defaults():
    cfg = build_config()
    assert cfg.loss_weights == (0.005, 0.025, 0.25)
    assert cfg.position_ceiling == 50
    assert cfg.encoder_dim == 64
    assert cfg.vocab_size == 26


def test_unknown_key_is_named():
    with pytest.raises(ConfigError, match="unknown config key: bogus_key"):
        build_config({"bogus_key": 1})


def test_invalid_value_is_named():
    with pytest.raises(ConfigError, match="mel_dim"):
        build_config({"mel_dim": 12})
    with pytest.raises(ConfigError, match="prenet_dims"):
        build_config({"prenet_dims": "32, 0"})


def test_parse_config_text():
    values = parse_config_text("# comment\nseed = 3  # trailing\n\nprenet_dims = 16, 8\n")
    assert values == {"seed": "3", "prenet_dims": "16, 8"}
    assert build_config(values).prenet_dims == [16, 8]
    with pytest.raises(ConfigError, match="line 1"):
        parse_config_text("seed 3")


def test_precedence(tmp_path, monkeypatch):
    path = tmp_path / "run.conf"
    path.write_text("seed = 3\nlearning_rate = 0.01\n", encoding="utf-8")
    cfg = load_config(path)
    assert (cfg.seed, cfg.learning_rate) == (3, 0.01)
    assert load_config(path, {"seed": 5, "learning_rate": None}).seed == 5
    monkeypatch.setenv("PAMA_SEED", "9")
    assert load_config(path, {"seed": 5}).seed == 9


def test_missing_file_fails(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "absent.conf")


def test_dump_round_trip(tmp_path, tiny_cfg):
    path = tmp_path / "dumped.conf"
    path.write_text(dump_config(tiny_cfg), encoding="utf-8")
    assert load_config(path) == tiny_cfg


def test_assignment_is_validated():
    cfg = Config()
    with pytest.raises(ValueError):
        cfg.alpha_align = -1.0


def test_shipped_configs_load():
    reference = load_config(CONFIGS / "reference.conf")
    ablation = load_config(CONFIGS / "ablation.conf")
    assert ablation.alpha_align == 0.0
    assert not ablation.use_position_embedding
    assert reference.alpha_align > 0.0


def test_reference_noise_is_gone_before_the_convergence_window():
    reference = load_config(CONFIGS / "reference.conf")
    model = PamaModel(reference)
    assert model.noise_std(0) == reference.sigmoid_noise
    assert model.noise_std(2000 - 50) == 0.0
    assert load_config(CONFIGS / "ablation.conf").noise_anneal_steps == reference.noise_anneal_steps


def test_env_example_leaves_the_seed_override_off():
    lines = (CONFIGS.parent / "env.example").read_text(encoding="utf-8").splitlines()
    active = [line.split("=", 1)[0].strip() for line in lines if "=" in line and not line.lstrip().startswith("#")]
    assert "PAMA_SEED" not in active
    assert any(line.lstrip("# ").startswith("PAMA_SEED=") for line in lines)
