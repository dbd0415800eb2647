"""Configuration management for topovln."""

import hashlib
import json
import math
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, Field, ValidationError, model_validator
from pydantic_settings import BaseSettings

from .errors import ConfigError


class Settings(BaseSettings):
    """Process-level settings read from the environment."""

    log_level: str = Field(default="INFO", description="Root logging level")

    config_path: Optional[str] = Field(
        default=None, description="Run-config file used when --config is not given"
    )

    server_host: str = Field(default="127.0.0.1", description="Host to bind the stub endpoint to")

    server_port: int = Field(default=8000, description="Port to bind the stub endpoint to")

    mcp_server_name: str = Field(default="topovln", description="Name announced by the MCP server")

    class Config:
        env_file = ".env"
        env_prefix = "TOPOVLN_"


settings = Settings()


class GridConfig(BaseModel):
    """Agent-centred polar discretization."""

    num_angles: int = Field(default=120, gt=0)
    num_radii: int = Field(default=12, gt=0)
    angle_step: float = Field(default=3.0, gt=0)
    radial_step: float = Field(default=0.25, gt=0)
    max_range: float = Field(default=3.0, gt=0)

    @model_validator(mode="after")
    def _check_products(self) -> "GridConfig":
        if not math.isclose(self.num_angles * self.angle_step, 360.0, abs_tol=1e-6):
            raise ValueError("num_angles * angle_step must equal 360")
        if not math.isclose(self.num_radii * self.radial_step, self.max_range, abs_tol=1e-6):
            raise ValueError("num_radii * radial_step must equal max_range")
        return self


class ObstacleConfig(BaseModel):
    slope_threshold: float = Field(default=1.0, gt=0)
    z_min: float = -2.0
    z_max: float = 2.0

    @model_validator(mode="after")
    def _check_band(self) -> "ObstacleConfig":
        if self.z_min >= self.z_max:
            raise ValueError("z_min must be below z_max")
        return self


class PredictorConfig(BaseModel):
    kind: Literal["geometric", "model"] = "geometric"
    k: int = Field(default=5, ge=1)
    nms_radius: float = Field(default=1.0, gt=0)
    min_score: float = 0.25
    mask: bool = True
    sigma: float = Field(default=1.0, gt=0)
    d_model: int = Field(default=64, gt=0)
    n_heads: int = Field(default=4, gt=0)
    d_ff: int = Field(default=128, gt=0)
    n_layers: int = Field(default=2, gt=0)
    checkpoint: Optional[str] = None
    lr: float = Field(default=1e-4, ge=0)
    batch_size: int = Field(default=32, gt=0)
    epochs: int = Field(default=30, ge=0)
    weight_decay: float = Field(default=0.01, ge=0)
    seed: int = 0

    @model_validator(mode="after")
    def _check_heads(self) -> "PredictorConfig":
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        return self


class GraphConfig(BaseModel):
    merge_threshold: float = Field(default=0.5, gt=0)


class LlmClientConfig(BaseModel):
    """Chat-completions endpoint settings; the key itself lives in the environment."""

    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-5-mini"
    api_key_env: str = "OPENAI_API_KEY"
    timeout: float = Field(default=30.0, gt=0)
    max_retries: int = Field(default=3, ge=0)
    backoff_base: float = Field(default=0.5, ge=0)
    temperature: float = 0.0
    max_concurrency: int = Field(default=4, gt=0)
    cache_path: Optional[str] = None


class PlannerConfig(BaseModel):
    kind: Literal["llm", "oracle", "greedy", "heuristic"] = "oracle"
    llm: LlmClientConfig = Field(default_factory=LlmClientConfig)
    include_visit_info: bool = True
    include_graph: bool = True


class SimConfig(BaseModel):
    mode: Literal["sliding", "no_sliding"] = "sliding"
    noise_std: float = Field(default=0.0, ge=0)
    success_radius: float = Field(default=3.0, gt=0)


class BudgetConfig(BaseModel):
    planner_steps: int = Field(default=20, ge=1)
    low_level_actions: int = Field(default=500, ge=1)


class WorldConfig(BaseModel):
    rooms_x: int = Field(default=3, ge=1)
    rooms_y: int = Field(default=2, ge=1)
    room_size: float = Field(default=4.0, gt=0)
    corridor_width: float = 1.0
    wall_thickness: float = Field(default=0.2, gt=0)
    wall_height: float = Field(default=1.5, gt=0)
    extra_doors: int = Field(default=1, ge=0)
    stairs: bool = False
    stair_steps: int = Field(default=5, ge=1)
    riser: float = Field(default=0.17, gt=0)
    tread: float = Field(default=0.25, gt=0)
    resolution: float = Field(default=0.05, gt=0)


class DataConfig(BaseModel):
    seed: int = 7
    num_worlds: int = Field(default=50, ge=1)
    nodes_per_world: int = Field(default=20, ge=1)
    node_spacing: float = Field(default=1.0, gt=0)
    val_fraction: float = Field(default=0.2, ge=0, lt=1)
    num_episodes: int = Field(default=100, ge=0)
    min_separation: float = Field(default=4.0, ge=0)
    max_separation: float = Field(default=12.0, gt=0)

    @model_validator(mode="after")
    def _check_separation(self) -> "DataConfig":
        if self.min_separation >= self.max_separation:
            raise ValueError("min_separation must be below max_separation")
        return self


class RunConfig(BaseModel):
    """Every knob of a run; defaults reproduce the reference pipeline."""

    grid: GridConfig = Field(default_factory=GridConfig)
    obstacle: ObstacleConfig = Field(default_factory=ObstacleConfig)
    predictor: PredictorConfig = Field(default_factory=PredictorConfig)
    graph: GraphConfig = Field(default_factory=GraphConfig)
    planner: PlannerConfig = Field(default_factory=PlannerConfig)
    sim: SimConfig = Field(default_factory=SimConfig)
    budgets: BudgetConfig = Field(default_factory=BudgetConfig)
    world: WorldConfig = Field(default_factory=WorldConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    output_dir: str = "runs/default"
    workers: int = Field(default=4, ge=1)

    def config_hash(self) -> str:
        """Stable SHA-256 over the canonical JSON form."""
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()


def load_run_config(path: Optional[Union[str, Path]] = None) -> RunConfig:
    """Load a run config from JSON; no path means all defaults."""
    if path is None:
        path = settings.config_path
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"Cannot read config file {path}: {exc}") from exc
    try:
        return RunConfig.model_validate_json(text)
    except ValidationError as exc:
        raise ConfigError(f"Invalid config {path}:\n{exc}") from exc
