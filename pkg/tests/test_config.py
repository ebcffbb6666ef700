import json
import logging

import pytest
import yaml

from app.core.config import (
    ExperimentConfig,
    LoggingConfig,
    Settings,
    apply_overrides,
    dump_config,
    load_config,
    parse_config,
)
from app.core.logging import setup_logging
from fusion.exceptions import ConfigError
from fusion.simulation import Scenario


@pytest.fixture
def config_text(config_path):
    return config_path.read_text(encoding="utf-8")


@pytest.fixture
def config_data(config_text):
    return json.loads(config_text)


def _line_of(text, needle):
    return next(i for i, line in enumerate(text.splitlines(), start=1) if needle in line)


class TestShippedConfig:
    def test_loads(self, shipped_config):
        assert [c.class_id for c in shipped_config.classes] == [1, 2, 3]
        assert shipped_config.experiment.features == ["v", "a", "L", "v+a", "v+L", "v+L+a"]
        assert shipped_config.attributes.definition("length").modelled

    def test_scenario_matches_experiment_defaults(self, shipped_config):
        assert shipped_config.scenario_for("v+L+a") == Scenario()

    def test_model_sets(self, shipped_config):
        sets = shipped_config.model_sets()
        assert [s.class_id for s in sets] == [1, 2, 3]
        assert all(s.size == 2 for s in sets)
        assert [m.label for m in sets[0].models] == ["CV", "CA"]

    def test_yaml_equivalent(self, config_text, config_data, shipped_config):
        cfg = parse_config(yaml.safe_dump(config_data), "config.yaml", fmt="yaml")
        assert cfg.model_dump() == shipped_config.model_dump()

    def test_dump_parses_back(self, shipped_config):
        assert parse_config(dump_config(shipped_config)) == shipped_config

    def test_relative_path_resolves_from_project_root(self, tmp_path, monkeypatch, shipped_config):
        monkeypatch.chdir(tmp_path)
        assert load_config("config/config.json") == shipped_config


class TestConfigErrors:
    def test_json_syntax_error_has_line(self):
        with pytest.raises(ConfigError) as excinfo:
            parse_config('{\n  "scenario": ,\n}', source="broken.json")
        assert excinfo.value.line == 2
        assert str(excinfo.value).startswith("broken.json:2:")

    def test_yaml_syntax_error_has_line(self):
        with pytest.raises(ConfigError) as excinfo:
            parse_config("scenario:\n  steps: [1, 2\nradar: {}\n", source="broken.yaml", fmt="yaml")
        assert excinfo.value.line is not None

    def test_invalid_value_points_at_its_line(self, config_text):
        text = config_text.replace('"sigma_r": 10.0', '"sigma_r": -1.0')
        with pytest.raises(ConfigError) as excinfo:
            parse_config(text, source="config.json")
        assert excinfo.value.line == _line_of(text, '"sigma_r"')
        assert "radar.sigma_r" in str(excinfo.value)

    def test_unknown_key_rejected(self, config_data):
        config_data["radar"]["elevation"] = 1.0
        with pytest.raises(ConfigError, match="elevation"):
            parse_config(json.dumps(config_data, indent=2))

    def test_top_level_must_be_mapping(self):
        with pytest.raises(ConfigError):
            parse_config("[1, 2]")

    def test_duplicate_class_ids(self, config_data):
        config_data["classes"][1]["class_id"] = 1
        with pytest.raises(ConfigError, match="unique"):
            parse_config(json.dumps(config_data))

    def test_true_class_must_be_declared(self, config_data):
        config_data["scenario"]["true_class"] = 4
        with pytest.raises(ConfigError, match="true_class"):
            parse_config(json.dumps(config_data))

    def test_imm_needs_model_sets(self, config_data):
        config_data["tracking"]["kinematic_feature"] = "imm"
        config_data["tracking"]["model_sets"] = config_data["tracking"]["model_sets"][:2]
        with pytest.raises(ConfigError, match=r"\[3\]"):
            parse_config(json.dumps(config_data))

    def test_bad_transition_matrix(self, config_data):
        config_data["tracking"]["model_sets"][0]["transition"] = [[0.9, 0.2], [0.05, 0.95]]
        with pytest.raises(ConfigError, match="probability"):
            parse_config(json.dumps(config_data))

    def test_attribute_links_known_classes(self, config_data):
        config_data["attributes"]["attributes"]["length"]["outcomes"][0]["class_id"] = 9
        with pytest.raises(ConfigError, match="unknown class 9"):
            parse_config(json.dumps(config_data))

    def test_radar_on_initial_position(self, config_data):
        config_data["radar"]["position"] = [0.0, 0.0]
        with pytest.raises(ConfigError):
            parse_config(json.dumps(config_data))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.json")

    def test_duplicate_feature_subsets(self):
        with pytest.raises(ValueError):
            ExperimentConfig(features=["v+a", "a+v"], runs=1)


class TestOverrides:
    def test_values_replace_document(self, shipped_config):
        cfg = apply_overrides(shipped_config, runs=5, steps=20, seed=9, features=["a+v"], output_dir="out")
        assert (cfg.experiment.runs, cfg.scenario.steps, cfg.experiment.seed) == (5, 20, 9)
        assert cfg.experiment.features == ["v+a"]
        assert cfg.experiment.output_dir == "out"
        assert shipped_config.experiment.runs == 100

    def test_invalid_override(self, shipped_config):
        with pytest.raises(ConfigError) as excinfo:
            apply_overrides(shipped_config, runs=0)
        assert excinfo.value.source == "<command line>"


class TestSettings:
    def test_environment(self, monkeypatch, config_path):
        monkeypatch.setenv("FUSIONKIT_THREADS", "3")
        monkeypatch.setenv("FUSIONKIT_CONFIG", str(config_path))
        s = Settings()
        assert s.threads == 3
        assert s.config_file == str(config_path)
        assert len(s.get_class_definitions()) == 3

    def test_log_level_override(self, shipped_config):
        s = Settings(log_level="debug")
        s.use(shipped_config)
        assert s.get_logging_config().level == "DEBUG"
        assert shipped_config.logging.level == "INFO"

    def test_config_dict(self, shipped_config):
        s = Settings()
        s.use(shipped_config)
        assert s.config["scenario"]["steps"] == 100
        assert s.get_catalog() is shipped_config.attributes


def test_setup_logging_replaces_its_handlers(tmp_path):
    log_file = tmp_path / "logs" / "fusionkit.log"
    root = logging.getLogger()
    try:
        setup_logging(LoggingConfig(level="debug", file=str(log_file)))
        tagged = [h for h in root.handlers if getattr(h, "_fusionkit_handler", False)]
        assert len(tagged) == 2
        assert root.level == logging.DEBUG

        logging.getLogger("fusion.test").debug("hello")
        setup_logging(LoggingConfig())
        assert "hello" in log_file.read_text(encoding="utf-8")
        assert len([h for h in root.handlers if getattr(h, "_fusionkit_handler", False)]) == 1
    finally:
        for handler in [h for h in root.handlers if getattr(h, "_fusionkit_handler", False)]:
            root.removeHandler(handler)
            handler.close()
        root.setLevel(logging.WARNING)
