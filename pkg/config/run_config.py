import logging
from pathlib import Path
from typing import List, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from common.errors import ConfigError
from embeddings.kernel_embedding import MAX_FEATURE_DIM
from features.feature_map import FeatureMapParams, make_feature_map

logger = logging.getLogger(__name__)


class ValidationSettings(BaseModel):
    """Sizes of the synthetic acceptance suite"""

    model_config = ConfigDict(extra="forbid")

    instances: int = Field(default=50, ge=1)
    candidates_per_instance: int = Field(default=20, ge=1)
    convergence_seeds: int = Field(default=20, ge=3)
    tolerance_override: Optional[float] = Field(default=None, ge=0)


class RunConfig(BaseModel):
    """Everything a CLI run needs besides its input files"""

    model_config = ConfigDict(extra="forbid")

    feature_map: FeatureMapParams = Field(
        default_factory=lambda: FeatureMapParams(d=1, m=64, bandwidth=1.0, window_scale=10.0, seed=0)
    )
    lambda_grid: List[float] = Field(default_factory=lambda: [1e-3, 1e-2, 1e-1])
    allow_zero_lambda: bool = False
    top_k_directions: int = Field(default=10, ge=1)
    output_path: Optional[Path] = None
    grid_resolution: int = Field(default=10001, ge=3)
    n_jobs: int = 1
    chunk_size: int = Field(default=4096, ge=1)
    lower_bound_a: Optional[float] = Field(default=None, gt=0, allow_inf_nan=False)
    upper_bound_b: Optional[float] = Field(default=None, gt=0, allow_inf_nan=False)
    validation: ValidationSettings = Field(default_factory=ValidationSettings)

    @field_validator("feature_map")
    @classmethod
    def _cap_feature_dim(cls, value):
        if value.m > MAX_FEATURE_DIM:
            raise ValueError(f"m = {value.m} exceeds the dense limit {MAX_FEATURE_DIM}")
        return value

    @field_validator("lambda_grid")
    @classmethod
    def _check_grid(cls, value):
        if not value:
            raise ValueError("lambda_grid must not be empty")
        if any(lam < 0 for lam in value):
            raise ValueError("lambda values must be nonnegative")
        if any(b < a for a, b in zip(value, value[1:])):
            raise ValueError("lambda_grid must be sorted ascending")
        return value

    @field_validator("n_jobs")
    @classmethod
    def _check_jobs(cls, value):
        if value == 0:
            raise ValueError("n_jobs must be nonzero")
        return value

    @model_validator(mode="after")
    def _check_zero_lambda(self):
        if 0.0 in self.lambda_grid and not self.allow_zero_lambda:
            raise ValueError("lambda = 0 requires allow_zero_lambda (the Gramian may be singular)")
        return self

    @model_validator(mode="after")
    def _check_density_bounds(self):
        a, b = self.lower_bound_a, self.upper_bound_b
        if a is not None and b is not None and b < a:
            raise ValueError(f"upper_bound_b = {b} is below lower_bound_a = {a}")
        return self

    def build_feature_map(self):
        params = self.feature_map
        return make_feature_map(
            params.d, params.m, params.bandwidth, params.window_scale, params.seed, params.amplitude
        )

    def with_overrides(self, seed=None, output_path=None, lam=None, allow_zero_lambda=None):
        """Apply command-line overrides, re-validating the result"""
        data = self.model_dump()
        if seed is not None:
            data["feature_map"]["seed"] = seed
        if output_path is not None:
            data["output_path"] = output_path
        if lam is not None:
            data["lambda_grid"] = [lam]
        if allow_zero_lambda:
            data["allow_zero_lambda"] = True
        return validate_config(data)


def validate_config(data):
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e}") from e


def load_config(path=None):
    """Read a JSON (or YAML) config file; no path gives the defaults"""
    if path is None:
        return RunConfig()
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"config file {path} is not valid JSON/YAML: {e}") from e
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold an object")
    config = validate_config(data)
    logger.info("Loaded configuration from %s", path)
    return config
