"""Command implementations shared by the CLI and the MCP tools."""

import asyncio
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple

import httpx
import numpy as np
import pydantic
import scipy
import torch

from . import __version__
from .agent import AgentState, panoramic_scan
from .config import RunConfig
from .episodes import (
    Episode,
    GtGraph,
    LabeledExample,
    episode_from_json,
    episode_to_json,
    example_from_json,
    generate_episode,
    make_training_examples,
    sample_gt_graph,
)
from .errors import EmptyDatasetError, InfeasibleEpisodeError, MissingDatasetError
from .metrics import (
    EpisodeReport,
    Summary,
    WaypointReport,
    aggregate,
    waypoint_metrics,
    write_summary_csv,
)
from .llm_client import ChatCompletionsClient
from .navigator import EpisodeRecord, run_episodes
from .pipeline import WaypointPipeline
from .predictor_model import (
    ModelConfig,
    build_model,
    evaluate_loss,
    load_checkpoint,
    parameter_count,
    save_checkpoint,
    train,
)
from .radial import RadialGrid
from .world import World, generate_world, world_from_json, world_to_json

logger = logging.getLogger(__name__)

ABLATION_VARIANTS = (
    "baseline",
    "no_visit_info",
    "no_graph",
    "history_only",
    "no_mask",
    "geometric_predictor",
    "trained_predictor",
)
ABLATION_METRICS = ("sr", "spl", "collision_rate", "revisits")


def _dump(path: Path, data: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, sort_keys=True, indent=2) + "\n")


def _write_jsonl(path: Path, rows: Iterable[Dict[str, Any]]) -> int:
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
            count += 1
    return count


def _read_jsonl(path: Path) -> List[Dict[str, Any]]:
    if not path.exists():
        raise MissingDatasetError(f"{path} not found; run gen-data first")
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def data_dir(config: RunConfig) -> Path:
    return Path(config.output_dir) / "data"


def manifest(config: RunConfig, command: str) -> Dict[str, Any]:
    return {
        "command": command,
        "config_hash": config.config_hash(),
        "config": config.model_dump(mode="json"),
        "seeds": {"data": config.data.seed, "predictor": config.predictor.seed},
        "versions": {
            "topovln": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "torch": torch.__version__,
            "pydantic": pydantic.VERSION,
        },
    }


def world_seeds(config: RunConfig) -> List[int]:
    state = np.random.SeedSequence(config.data.seed).generate_state(config.data.num_worlds)
    return [int(s) for s in state]


def build_worlds(config: RunConfig) -> List[World]:
    return [
        generate_world(seed, config.world, config.obstacle.slope_threshold, config.grid.radial_step)
        for seed in world_seeds(config)
    ]


def cmd_gen_data(config: RunConfig) -> Dict[str, Any]:
    """Worlds, ground-truth graphs, waypoint training examples and episodes."""
    out = data_dir(config)
    grid = RadialGrid.from_config(config.grid)
    data = config.data
    seeds = world_seeds(config)
    worlds = build_worlds(config)
    n_train = max(1, int(round(len(worlds) * (1 - data.val_fraction))))

    graphs: List[GtGraph] = []
    train_rows: List[Dict[str, Any]] = []
    val_rows: List[Dict[str, Any]] = []
    for index, (seed, world) in enumerate(zip(seeds, worlds)):
        gt = sample_gt_graph(world, seed, data.node_spacing, data.nodes_per_world)
        graphs.append(gt)
        examples = make_training_examples(
            world,
            gt,
            grid,
            config.obstacle,
            seed,
            world_index=index,
            noise_std=config.sim.noise_std,
            sigma=config.predictor.sigma,
        )
        rows = train_rows if index < n_train else val_rows
        rows.extend(ex.to_json() for ex in examples)
        logger.info(
            "world %d/%d: %d nodes, %d edges",
            index + 1,
            len(worlds),
            len(gt.positions),
            len(gt.edges),
        )

    episode_seeds = np.random.SeedSequence([data.seed, 1]).generate_state(max(1, data.num_episodes))
    episodes: List[Episode] = []
    for i in range(data.num_episodes):
        try:
            episodes.append(
                generate_episode(
                    worlds[i % len(worlds)],
                    int(episode_seeds[i]),
                    episode_id=i,
                    world_index=i % len(worlds),
                    min_separation=data.min_separation,
                    max_separation=data.max_separation,
                    mode=config.sim.mode,
                )
            )
        except InfeasibleEpisodeError as exc:
            logger.warning("skipping episode %d: %s", i, exc)

    graph_rows = (g.model_dump(mode="json") for g in graphs)
    counts = {
        "worlds": _write_jsonl(out / "worlds.jsonl", (world_to_json(w) for w in worlds)),
        "gt_graphs": _write_jsonl(out / "gt_graphs.jsonl", graph_rows),
        "train": _write_jsonl(out / "train.jsonl", train_rows),
        "val": _write_jsonl(out / "val.jsonl", val_rows),
        "episodes": _write_jsonl(out / "episodes.jsonl", (episode_to_json(e) for e in episodes)),
    }
    _dump(out / "manifest.json", {**manifest(config, "gen-data"), "counts": counts})
    return counts


def load_worlds(config: RunConfig) -> List[World]:
    return [world_from_json(row) for row in _read_jsonl(data_dir(config) / "worlds.jsonl")]


def load_episodes(config: RunConfig) -> List[Episode]:
    return [episode_from_json(row) for row in _read_jsonl(data_dir(config) / "episodes.jsonl")]


def load_examples(config: RunConfig, split: str) -> List[LabeledExample]:
    grid = RadialGrid.from_config(config.grid)
    rows = _read_jsonl(data_dir(config) / f"{split}.jsonl")
    return [example_from_json(grid, row, config.predictor.sigma) for row in rows]


def checkpoint_path(config: RunConfig) -> Path:
    return Path(config.predictor.checkpoint or Path(config.output_dir) / "model.pt")


def cmd_train(config: RunConfig) -> Dict[str, Any]:
    p = config.predictor
    grid = RadialGrid.from_config(config.grid)
    train_set = [ex.training_example() for ex in load_examples(config, "train")]
    model = build_model(ModelConfig.from_predictor(grid, p), seed=p.seed)
    result = train(model, train_set, p.lr, p.batch_size, p.epochs, p.weight_decay, p.seed)
    path = checkpoint_path(config)
    save_checkpoint(result.model, path)

    val = [ex.training_example() for ex in load_examples(config, "val")]
    summary = {
        "checkpoint": str(path),
        "examples": len(train_set),
        "parameters": parameter_count(result.model),
        "losses": [round(v, 8) for v in result.losses],
        "val_loss": round(evaluate_loss(result.model, val), 8) if val else None,
    }
    out = Path(config.output_dir)
    _dump(out / "train.json", {**summary, "manifest": manifest(config, "train")})
    return summary


def _predictor_pipelines(config: RunConfig) -> List[Tuple[str, WaypointPipeline]]:
    grid = RadialGrid.from_config(config.grid)
    geometric = config.predictor.model_copy(update={"kind": "geometric"})
    as_model = config.predictor.model_copy(update={"kind": "model"})
    untrained = build_model(ModelConfig.from_predictor(grid, as_model), seed=as_model.seed)
    pipelines = [
        ("geometric", WaypointPipeline(grid, config.obstacle, geometric)),
        ("untrained", WaypointPipeline(grid, config.obstacle, as_model, untrained)),
    ]
    path = checkpoint_path(config)
    if path.exists():
        trained = load_checkpoint(path)
        pipelines.append(("trained", WaypointPipeline(grid, config.obstacle, as_model, trained)))
    return pipelines


def cmd_eval_waypoints(config: RunConfig) -> Dict[str, Any]:
    """Score every available predictor on the held-out split."""
    examples = load_examples(config, "val")
    if not examples:
        raise EmptyDatasetError("validation split is empty")
    results: Dict[str, Any] = {}
    for name, pipeline in _predictor_pipelines(config):
        reports = [
            WaypointReport(
                seed=config.data.seed,
                world=ex.world_index,
                node=ex.node,
                predictor=name,
                metrics=waypoint_metrics(
                    pipeline.predict(ex.observed), ex.neighbors, ex.target, ex.truth
                ),
            )
            for ex in examples
        ]
        summary = aggregate(reports)
        results[name] = summary.to_json()
        logger.info("%s predictor:\n%s", name, summary.to_table())
    _dump(
        Path(config.output_dir) / "waypoints.json",
        {"results": results, "manifest": manifest(config, "eval-waypoints")},
    )
    return results


def with_response_cache(config: RunConfig) -> RunConfig:
    """LLM runs cache replies under the output directory unless a cache path is set."""
    llm = config.planner.llm
    if config.planner.kind != "llm" or llm.cache_path is not None:
        return config
    cache = str(Path(config.output_dir) / "llm_cache.jsonl")
    llm = llm.model_copy(update={"cache_path": cache})
    planner = config.planner.model_copy(update={"llm": llm})
    return config.model_copy(update={"planner": planner})


async def _run_async(
    config: RunConfig,
    worlds: List[World],
    episodes: List[Episode],
    out: Path,
    transport: Optional[httpx.AsyncBaseTransport],
) -> List[Tuple[EpisodeRecord, EpisodeReport]]:
    client: Optional[ChatCompletionsClient] = None
    if config.planner.kind == "llm":
        client = ChatCompletionsClient(config.planner.llm, transport=transport)
    try:
        pipeline = WaypointPipeline.from_config(config)
        return await run_episodes(worlds, episodes, config, pipeline, out, client)
    finally:
        if client is not None:
            await client.close()


def _run(
    config: RunConfig,
    out: Path,
    command: str,
    transport: Optional[httpx.AsyncBaseTransport] = None,
) -> Tuple[Summary, List[EpisodeReport]]:
    config = with_response_cache(config)
    worlds = load_worlds(config)
    episodes = load_episodes(config)
    results = asyncio.run(_run_async(config, worlds, episodes, out, transport))
    reports = [report for _, report in results]
    _write_jsonl(out / "records.jsonl", (record.model_dump(mode="json") for record, _ in results))
    _dump(out / "reports.json", [r.model_dump(mode="json") for r in reports])
    summary = aggregate(reports)
    _dump(out / "summary.json", summary.to_json())
    write_summary_csv(summary, out / "summary.csv")
    (out / "summary.txt").write_text(summary.to_table() + "\n")
    _dump(out / "manifest.json", manifest(config, command))
    return summary, reports


def cmd_run_episodes(
    config: RunConfig, transport: Optional[httpx.AsyncBaseTransport] = None
) -> Summary:
    summary, _ = _run(config, Path(config.output_dir), "run", transport)
    return summary


def ablation_config(config: RunConfig, variant: str) -> RunConfig:
    if variant == "baseline":
        return config
    if variant in ("no_visit_info", "no_graph", "history_only"):
        keep_visit_info = variant == "no_graph"
        keep_graph = variant == "no_visit_info"
        planner = config.planner.model_copy(
            update={
                "include_visit_info": config.planner.include_visit_info and keep_visit_info,
                "include_graph": config.planner.include_graph and keep_graph,
            }
        )
        return config.model_copy(update={"planner": planner})
    if variant == "no_mask":
        predictor = config.predictor.model_copy(update={"mask": False})
        return config.model_copy(update={"predictor": predictor})
    if variant == "geometric_predictor":
        predictor = config.predictor.model_copy(update={"kind": "geometric"})
        return config.model_copy(update={"predictor": predictor})
    if variant == "trained_predictor":
        path = checkpoint_path(config)
        if not path.exists():
            raise MissingDatasetError(f"{path} not found; run train first")
        predictor = config.predictor.model_copy(update={"kind": "model", "checkpoint": str(path)})
        return config.model_copy(update={"predictor": predictor})
    raise ValueError(f"unknown ablation variant {variant!r}")


def default_variants(config: RunConfig) -> List[str]:
    """Every variant, minus the trained predictor swap when no checkpoint exists."""
    if checkpoint_path(config).exists():
        return list(ABLATION_VARIANTS)
    logger.warning("no checkpoint at %s; skipping trained_predictor", checkpoint_path(config))
    return [v for v in ABLATION_VARIANTS if v != "trained_predictor"]


def ablation_table(results: Dict[str, Dict[str, Optional[float]]]) -> str:
    header = ["variant"] + list(ABLATION_METRICS) + [f"d_{m}" for m in ABLATION_METRICS]
    base = results["baseline"]
    rows = [header]
    for variant, means in results.items():
        row = [variant]
        row += ["-" if means.get(m) is None else f"{means[m]:.3f}" for m in ABLATION_METRICS]
        for m in ABLATION_METRICS:
            d = _delta(means.get(m), base.get(m))
            row.append("-" if d is None else f"{d:+.3f}")
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    return "\n".join(
        "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
        for r in rows
    )


def _delta(value: Optional[float], base: Optional[float]) -> Optional[float]:
    return None if value is None or base is None else value - base


def cmd_ablate(config: RunConfig, variants: Optional[Iterable[str]] = None) -> Dict[str, Any]:
    """Rerun the episode set per variant and report paired deltas against the baseline."""
    root = Path(config.output_dir) / "ablation"
    means: Dict[str, Dict[str, Optional[float]]] = {}
    if variants is None:
        variants = default_variants(config)
    for variant in ["baseline"] + [v for v in variants if v != "baseline"]:
        summary, _ = _run(ablation_config(config, variant), root / variant, f"ablate:{variant}")
        means[variant] = {m: summary.means.get(m) for m in ABLATION_METRICS}
    base = means["baseline"]
    deltas = {
        variant: {m: _delta(vals[m], base[m]) for m in ABLATION_METRICS}
        for variant, vals in means.items()
    }
    table = ablation_table(means)
    _dump(root / "ablation.json", {"means": means, "deltas": deltas})
    (root / "ablation.txt").write_text(table + "\n")
    return {"means": means, "deltas": deltas, "table": table}


def cmd_report(run_dir: Path) -> str:
    path = Path(run_dir) / "summary.json"
    if not path.exists():
        raise MissingDatasetError(f"{path} not found; run episodes first")
    return Summary.model_validate_json(path.read_text()).to_table()


def inspect_location(
    config: RunConfig,
    world: World,
    x: float,
    y: float,
    heading: float = 0.0,
    pipeline: Optional[WaypointPipeline] = None,
) -> Dict[str, Any]:
    """Obstacle map, elevations and predicted waypoints seen from one pose."""
    pipeline = pipeline or WaypointPipeline.from_config(config)
    agent = AgentState(x, y, heading)
    cloud = panoramic_scan(world, agent, pipeline.grid)
    obstacle_map, elevation = pipeline.obstacle_map(cloud)
    waypoints = pipeline.predict(obstacle_map)
    return {
        "pose": [x, y, agent.heading],
        "scene": world.scene_tag(x, y),
        "traversable": world.is_traversable(x, y),
        "obstacle_map": obstacle_map.to_raster(),
        "elevation": elevation.to_json(),
        "waypoints": waypoints.to_json(),
    }


def cmd_inspect(config: RunConfig, episode_id: int = 0) -> Dict[str, Any]:
    episodes = load_episodes(config)
    matches = [e for e in episodes if e.episode_id == episode_id]
    if not matches:
        raise MissingDatasetError(f"episode {episode_id} not in dataset")
    episode = matches[0]
    world = load_worlds(config)[episode.world_index]
    x, y = episode.start
    view = inspect_location(config, world, x, y, episode.start_heading)
    return {"episode": episode_to_json(episode), **view}
