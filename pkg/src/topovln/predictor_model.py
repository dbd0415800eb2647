"""Two-layer self-attention waypoint predictor.

One token per angle bin (the 12 binary radial values of that bearing), a learned
positional encoding over the 120 bearings, two transformer encoder layers and a per-token
head that emits one logit per radial bin.
"""

import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from torch import nn
from torch.utils.data import DataLoader, TensorDataset

from .config import PredictorConfig
from .errors import CorruptModelError, EmptyDatasetError, TrainingDivergedError
from .obstacle_map import ObstacleMap
from .radial import RadialGrid
from .waypoints import Heatmap

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    num_angles: int = 120
    num_radii: int = 12
    d_model: int = 64
    n_heads: int = 4
    d_ff: int = 128
    n_layers: int = 2

    @classmethod
    def from_predictor(cls, grid: RadialGrid, config: PredictorConfig) -> "ModelConfig":
        return cls(
            num_angles=grid.num_angles,
            num_radii=grid.num_radii,
            d_model=config.d_model,
            n_heads=config.n_heads,
            d_ff=config.d_ff,
            n_layers=config.n_layers,
        )


class WaypointTransformer(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.embed = nn.Linear(config.num_radii, config.d_model)
        self.position = nn.Parameter(torch.zeros(1, config.num_angles, config.d_model))
        nn.init.normal_(self.position, std=0.02)
        layer = nn.TransformerEncoderLayer(
            d_model=config.d_model,
            nhead=config.n_heads,
            dim_feedforward=config.d_ff,
            dropout=0.0,
            activation="gelu",
            batch_first=True,
        )
        self.encoder = nn.TransformerEncoder(
            layer, num_layers=config.n_layers, enable_nested_tensor=False
        )
        self.head = nn.Linear(config.d_model, config.num_radii)

    def forward(self, occupancy: torch.Tensor) -> torch.Tensor:
        """(batch, num_angles, num_radii) occupancy -> logits of the same shape."""
        tokens = self.embed(occupancy) + self.position
        return self.head(self.encoder(tokens))


@dataclass(frozen=True)
class TrainingExample:
    input: ObstacleMap
    target: Heatmap

    def __post_init__(self) -> None:
        if self.input.grid != self.target.grid:
            raise ValueError("training example grids differ")


@dataclass
class TrainingResult:
    model: WaypointTransformer
    losses: List[float]


def build_model(config: ModelConfig, seed: int = 0) -> WaypointTransformer:
    torch.manual_seed(seed)
    return WaypointTransformer(config)


def model_predict(model: WaypointTransformer, obstacle_map: ObstacleMap) -> Heatmap:
    model.eval()
    dtype = next(model.parameters()).dtype
    x = torch.as_tensor(obstacle_map.occupied, dtype=dtype).unsqueeze(0)
    with torch.no_grad():
        logits = model(x)[0].double().numpy()
    if not np.all(np.isfinite(logits)):
        raise CorruptModelError("model produced non-finite logits; weights are likely corrupt")
    return Heatmap(obstacle_map.grid, logits)


def _stack(dataset: Sequence[TrainingExample]) -> Tuple[torch.Tensor, torch.Tensor]:
    inputs = np.stack([ex.input.as_float() for ex in dataset])
    targets = np.stack([ex.target.value.astype(np.float32) for ex in dataset])
    return torch.from_numpy(inputs), torch.from_numpy(targets)


def train(
    model: WaypointTransformer,
    dataset: Sequence[TrainingExample],
    lr: float = 1e-4,
    batch_size: int = 32,
    epochs: int = 30,
    weight_decay: float = 0.01,
    seed: int = 0,
) -> TrainingResult:
    """Minimize MSE between logits and target heatmaps with AdamW; returns per-epoch losses."""
    if not dataset:
        raise EmptyDatasetError("cannot train on an empty dataset")
    inputs, targets = _stack(dataset)
    generator = torch.Generator().manual_seed(seed)
    loader = DataLoader(
        TensorDataset(inputs, targets), batch_size=batch_size, shuffle=True, generator=generator
    )
    optimizer = torch.optim.AdamW(model.parameters(), lr=lr, weight_decay=weight_decay)
    loss_fn = nn.MSELoss()

    losses: List[float] = []
    model.train()
    for epoch in range(epochs):
        total = 0.0
        for batch, (x, y) in enumerate(loader):
            optimizer.zero_grad()
            loss = loss_fn(model(x), y)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch + 1}, batch {batch + 1} (lr={lr})"
                )
            loss.backward()
            optimizer.step()
            total += float(loss.item()) * x.shape[0]
        losses.append(total / len(dataset))
        logger.info("epoch %d/%d loss %.6f", epoch + 1, epochs, losses[-1])
    model.eval()
    return TrainingResult(model, losses)


def evaluate_loss(model: WaypointTransformer, dataset: Sequence[TrainingExample]) -> float:
    if not dataset:
        raise EmptyDatasetError("cannot evaluate on an empty dataset")
    inputs, targets = _stack(dataset)
    model.eval()
    with torch.no_grad():
        return float(nn.functional.mse_loss(model(inputs), targets).item())


def gradient_check(
    model: WaypointTransformer,
    occupancy: np.ndarray,
    target: np.ndarray,
    samples: int = 40,
    eps: float = 1e-6,
    seed: int = 0,
) -> float:
    """Largest relative error between autograd and central finite differences.

    Runs on a float64 copy of the model over a random subset of scalar parameters.
    """
    checked = WaypointTransformer(model.config).double()
    checked.load_state_dict({k: v.double() for k, v in model.state_dict().items()})
    checked.train()
    x = torch.as_tensor(occupancy, dtype=torch.float64).unsqueeze(0)
    y = torch.as_tensor(target, dtype=torch.float64).unsqueeze(0)

    def loss_value() -> torch.Tensor:
        return nn.functional.mse_loss(checked(x), y)

    checked.zero_grad()
    loss_value().backward()
    params = [p for p in checked.parameters() if p.requires_grad]
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        p = params[int(rng.integers(len(params)))]
        flat = p.data.view(-1)
        i = int(rng.integers(flat.numel()))
        analytic = float(p.grad.view(-1)[i])
        original = float(flat[i])
        with torch.no_grad():
            flat[i] = original + eps
            plus = float(loss_value())
            flat[i] = original - eps
            minus = float(loss_value())
            flat[i] = original
        numeric = (plus - minus) / (2 * eps)
        denom = max(abs(analytic), abs(numeric), 1e-5)
        worst = max(worst, abs(analytic - numeric) / denom)
    return worst


def save_checkpoint(model: WaypointTransformer, path: Union[str, Path]) -> None:
    state = model.state_dict()
    payload: Dict[str, Any] = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "model_config": asdict(model.config),
        "shapes": {k: list(v.shape) for k, v in state.items()},
        "state_dict": state,
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, str(path))


def load_checkpoint(path: Union[str, Path]) -> WaypointTransformer:
    payload = torch.load(str(path), map_location="cpu", weights_only=True)
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CorruptModelError(f"unsupported checkpoint version {version!r}")
    model = WaypointTransformer(ModelConfig(**payload["model_config"]))
    for name, tensor in payload["state_dict"].items():
        if list(tensor.shape) != payload["shapes"].get(name):
            raise CorruptModelError(f"shape mismatch for {name}")
        if not torch.all(torch.isfinite(tensor)):
            raise CorruptModelError(f"non-finite weights in {name}")
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model


def parameter_count(model: nn.Module) -> int:
    return sum(math.prod(p.shape) for p in model.parameters())


def load_or_build(
    grid: RadialGrid, config: PredictorConfig, checkpoint: Optional[str] = None
) -> WaypointTransformer:
    path = checkpoint or config.checkpoint
    if path:
        return load_checkpoint(path)
    return build_model(ModelConfig.from_predictor(grid, config), seed=config.seed)
