import json

import pytest

from fastgrpo.config import (COMMAND_CONFIGS, ConfigError, GrpoRun, GrpoSection, from_mapping, load_run_config,
                             to_mapping)
from conftest import CONFIGS


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.json")), ids=lambda p: p.name)
def test_shipped_configs_load(path):
    command = {"grpo_efficiency": "grpo", "grpo_kl": "grpo"}.get(path.stem, path.stem)
    cfg = load_run_config(command, path)
    assert cfg.format_version == 1


def test_unknown_field_rejected(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"steps": 1, "stepz": 2}))
    with pytest.raises(ConfigError, match="stepz"):
        load_run_config("pretrain", p)


def test_nested_unknown_field_rejected():
    with pytest.raises(ConfigError, match=r"grpo\.heads"):
        from_mapping(GrpoRun, {"pretrained_checkpoint": "x", "grpo": {"heads": {"radius": 1}}})


def test_type_errors_reported():
    with pytest.raises(ConfigError, match="integer"):
        from_mapping(COMMAND_CONFIGS["pretrain"], {"steps": "ten"})
    with pytest.raises(ConfigError, match="true/false"):
        from_mapping(COMMAND_CONFIGS["pretrain"], {"record_wallclock": 1})


def test_version_and_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_run_config("plot", tmp_path / "nope.json")
    p = tmp_path / "v.json"
    p.write_text(json.dumps({"format_version": 2}))
    with pytest.raises(ConfigError, match="format_version"):
        load_run_config("equivalence", p)


def test_invalid_values_surface_as_config_errors():
    with pytest.raises(ConfigError, match="mode"):
        GrpoSection(mode="slow").grpo_config(0)
    with pytest.raises(ConfigError, match="group_size"):
        GrpoSection().override({"group_size": 1}, "runs[x]").grpo_config(0)
    with pytest.raises(ConfigError, match="cond_dropout"):
        from_mapping(COMMAND_CONFIGS["pretrain"], {"cond_dropout": 1.5}).pretrain_config()


def test_grpo_section_mirrors_trainer_config():
    section = GrpoSection().override({"weights": [1, 0, 0, 0], "heads": {"aesthetic_radius": 2.0}}, "t")
    cfg = section.grpo_config(seed=4)
    assert cfg.weights.values == (1.0, 0.0, 0.0, 0.0)
    assert cfg.heads.aesthetic_radius == 2.0 and cfg.heads.temporal_offsets == (2.0, 1.5)
    assert cfg.seed == 4 and cfg.schedule.T == 24
    assert to_mapping(section)["heads"]["aesthetic_radius"] == 2.0
