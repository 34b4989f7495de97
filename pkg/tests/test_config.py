import json

import pytest

from src.common.errors import InputValidationError
from src.config.config_manager import DEFAULT_LAMBDA, build_config, load_config_file
from src.learning.theta import ThetaParams
from src.telemetry.telemetry_window import ModelConfig


def write_json(path, data) -> object:
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


class TestBuildConfig:
    def test_defaults(self):
        effective = build_config()
        assert effective.model == ModelConfig()
        assert effective.lam == DEFAULT_LAMBDA
        assert effective.sources == {}

    def test_layer_precedence(self, tmp_path):
        config_file = write_json(tmp_path / "run.json", {"q": 10, "alpha": 0.01, "lambda": 0.01})
        effective = build_config(
            hints={"p": 3, "q": 24},
            config_file=config_file,
            overrides={"q": 6, "seed": None},
        )
        assert effective.model.p == 3
        assert effective.model.q == 6
        assert effective.model.alpha == 0.01
        assert effective.model.seed == 0
        assert effective.lam == 0.01
        assert effective.sources == {"p": "hints", "q": "cli", "alpha": "file", "lam": "file"}

    def test_file_overrides_hints(self, tmp_path):
        config_file = write_json(tmp_path / "run.json", {"q": 10})
        assert build_config(hints={"q": 24}, config_file=config_file).model.q == 10

    def test_theta_from_file(self, tmp_path):
        theta = {"weights": [0.5, 0.5], "thresholds": [0.4, 0.6], "omega1": 0.8}
        effective = build_config(config_file=write_json(tmp_path / "run.json", {"theta": theta}))
        assert effective.model.theta == ThetaParams((0.5, 0.5), (0.4, 0.6), 0.8)

    def test_unknown_hint_ignored(self):
        assert build_config(hints={"q": 7, "victim": 4}).model.q == 7

    def test_invalid_hint(self):
        with pytest.raises(InputValidationError, match="analysis_hints"):
            build_config(hints={"q": 0})

    def test_unknown_override(self):
        with pytest.raises(InputValidationError, match="未知"):
            build_config(overrides={"colour": "red"})

    def test_to_dict_records_sources(self):
        data = build_config(overrides={"seed": 7}).to_dict()
        assert data["seed"] == 7
        assert data["lambda"] == DEFAULT_LAMBDA
        assert data["sources"] == {"seed": "cli"}


class TestLoadConfigFile:
    def test_unknown_field(self, tmp_path):
        with pytest.raises(InputValidationError, match="colour"):
            load_config_file(write_json(tmp_path / "run.json", {"colour": "red"}))

    def test_out_of_range_value(self, tmp_path):
        with pytest.raises(InputValidationError, match="tau_causal"):
            load_config_file(write_json(tmp_path / "run.json", {"tau_causal": 1.5}))

    def test_syntax_error_is_line_anchored(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text('{\n  "p": 3,\n  "q": \n}', encoding="utf-8")
        with pytest.raises(InputValidationError, match="line 4"):
            load_config_file(path)

    def test_lambda_alias(self, tmp_path):
        model = load_config_file(write_json(tmp_path / "run.json", {"lambda": 0.5}))
        assert model.lam == 0.5

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_config_file(tmp_path / "absent.json")
