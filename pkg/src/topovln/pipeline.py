"""Observation-to-waypoint pipeline used by GraphUpdate."""

from dataclasses import dataclass
from typing import Optional, Tuple

from .config import ObstacleConfig, PredictorConfig, RunConfig
from .errors import ConfigError
from .obstacle_map import ElevationGrid, ObstacleMap, PointCloud, bin_points, gradient_filter
from .predictor_model import WaypointTransformer, load_or_build, model_predict
from .radial import RadialGrid
from .waypoints import WaypointSet, geometric_predict, nms_select, reachability_mask


@dataclass
class WaypointPipeline:
    grid: RadialGrid
    obstacle: ObstacleConfig
    predictor: PredictorConfig
    model: Optional[WaypointTransformer] = None

    @classmethod
    def from_config(
        cls, config: RunConfig, model: Optional[WaypointTransformer] = None
    ) -> "WaypointPipeline":
        grid = RadialGrid.from_config(config.grid)
        if config.predictor.kind == "model" and model is None:
            model = load_or_build(grid, config.predictor)
        return cls(grid, config.obstacle, config.predictor, model)

    def with_mask(self, mask: bool) -> "WaypointPipeline":
        return WaypointPipeline(
            self.grid, self.obstacle, self.predictor.model_copy(update={"mask": mask}), self.model
        )

    def obstacle_map(self, cloud: PointCloud) -> Tuple[ObstacleMap, ElevationGrid]:
        elevation = bin_points(self.grid, cloud, (self.obstacle.z_min, self.obstacle.z_max))
        return gradient_filter(elevation, self.obstacle.slope_threshold), elevation

    def predict(self, obstacle_map: ObstacleMap) -> WaypointSet:
        p = self.predictor
        if p.kind == "geometric":
            return geometric_predict(obstacle_map, p.k, p.nms_radius, p.min_score, mask=p.mask)
        if self.model is None:
            raise ConfigError("predictor kind 'model' needs a model or checkpoint")
        logits = model_predict(self.model, obstacle_map)
        if p.mask:
            logits = reachability_mask(obstacle_map, logits)
        return nms_select(logits, p.k, p.nms_radius, p.min_score)
