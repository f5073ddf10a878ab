import json
from pathlib import Path

import pytest

from common.errors import ConfigError
from config.run_config import RunConfig, load_config, validate_config
from features.feature_map import make_feature_map


def write_config(tmp_path, data, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


def test_defaults():
    config = load_config()
    assert config.lambda_grid == [1e-3, 1e-2, 1e-1]
    assert config.top_k_directions == 10
    assert config.grid_resolution == 10001
    assert config.feature_map.m == 64
    assert config.output_path is None
    assert config.validation.instances == 50
    assert config.validation.tolerance_override is None
    assert config.lower_bound_a is None and config.upper_bound_b is None


def test_load_json(tmp_path):
    path = write_config(
        tmp_path,
        {
            "feature_map": {"d": 2, "m": 32, "bandwidth": 0.5, "window_scale": 4.0, "seed": 9},
            "lambda_grid": [0.01, 1.0],
            "top_k_directions": 3,
            "output_path": "out/result.json",
            "validation": {"instances": 5},
        },
    )
    config = load_config(path)
    assert config.feature_map.d == 2
    assert config.lambda_grid == [0.01, 1.0]
    assert config.output_path == Path("out/result.json")
    assert config.validation.instances == 5
    assert config.build_feature_map() == make_feature_map(d=2, m=32, bandwidth=0.5, window_scale=4.0, seed=9)


def test_load_yaml(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text("lambda_grid: [0.5]\nfeature_map:\n  d: 1\n  m: 8\n  bandwidth: 1.0\n  window_scale: 2.0\n  seed: 3\n")
    config = load_config(path)
    assert config.lambda_grid == [0.5]
    assert config.feature_map.m == 8


def test_empty_file_gives_defaults(tmp_path):
    path = tmp_path / "empty.json"
    path.write_text("")
    assert load_config(path) == RunConfig()


@pytest.mark.parametrize(
    "data",
    [
        {"lambda_grid": []},
        {"lambda_grid": [0.1, 0.01]},
        {"lambda_grid": [-1.0]},
        {"lambda_grid": [0.0, 0.1]},
        {"feature_map": {"d": 1, "m": 5000, "bandwidth": 1.0, "window_scale": 1.0, "seed": 0}},
        {"feature_map": {"d": 1, "m": 4, "bandwidth": 0.0, "window_scale": 1.0, "seed": 0}},
        {"top_k_directions": 0},
        {"grid_resolution": 2},
        {"n_jobs": 0},
        {"chunk_size": 0},
        {"lower_bound_a": 0.0},
        {"lower_bound_a": 1.5, "upper_bound_b": 0.5},
        {"validation": {"convergence_seeds": 2}},
        {"validation": {"tolerance_override": -1.0}},
        {"unknown_key": 1},
    ],
)
def test_invalid_configs(data):
    with pytest.raises(ConfigError):
        validate_config(data)


def test_zero_lambda_needs_opt_in():
    config = validate_config({"lambda_grid": [0.0, 0.1], "allow_zero_lambda": True})
    assert config.lambda_grid[0] == 0.0


@pytest.mark.parametrize("content", ["[1, 2, 3]", "lambda_grid: [0.1\n", "{not json"])
def test_malformed_files(tmp_path, content):
    path = tmp_path / "bad.json"
    path.write_text(content)
    with pytest.raises(ConfigError):
        load_config(path)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.json")


def test_overrides():
    config = RunConfig().with_overrides(seed=42, output_path="x.json", lam=0.25)
    assert config.feature_map.seed == 42
    assert config.output_path == Path("x.json")
    assert config.lambda_grid == [0.25]
    # The original is untouched
    assert RunConfig().feature_map.seed == 0


def test_zero_lambda_override():
    with pytest.raises(ConfigError):
        RunConfig().with_overrides(lam=0.0)
    assert RunConfig().with_overrides(lam=0.0, allow_zero_lambda=True).lambda_grid == [0.0]
