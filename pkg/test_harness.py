#!/usr/bin/env python3
"""End-to-end tests for the data, training, episode and report commands."""

import json
import shutil

import httpx
import pytest

from src.topovln import harness
from src.topovln.chat_stub import StubResponder, create_app
from src.topovln.config import (
    BudgetConfig,
    DataConfig,
    LlmClientConfig,
    PlannerConfig,
    PredictorConfig,
    RunConfig,
    WorldConfig,
)
from src.topovln.errors import MissingDatasetError
from src.topovln.main import EXIT_CONFIG, EXIT_FAILURE, EXIT_OK, main


def small_config(out, **updates) -> RunConfig:
    config = RunConfig(
        world=WorldConfig(rooms_x=2, rooms_y=1),
        data=DataConfig(
            num_worlds=2,
            nodes_per_world=4,
            num_episodes=2,
            min_separation=2.0,
            max_separation=8.0,
            val_fraction=0.5,
        ),
        predictor=PredictorConfig(d_model=16, n_heads=2, d_ff=32, epochs=1, batch_size=4),
        planner=PlannerConfig(kind="oracle"),
        budgets=BudgetConfig(planner_steps=4, low_level_actions=200),
        output_dir=str(out),
        workers=2,
    )
    return config.model_copy(update=updates)


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    config = small_config(tmp_path_factory.mktemp("run"))
    counts = harness.cmd_gen_data(config)
    return config, counts


def test_gen_data_writes_every_file(dataset):
    config, counts = dataset
    data = harness.data_dir(config)
    for name in ("worlds", "gt_graphs", "train", "val", "episodes"):
        assert (data / f"{name}.jsonl").exists(), f"{name}.jsonl should be written"
    assert counts["worlds"] == 2 and counts["gt_graphs"] == 2
    assert counts["train"] == 4 and counts["val"] == 4, "One world per split, four nodes each"
    assert counts["episodes"] == 2
    manifest = json.loads((data / "manifest.json").read_text())
    assert manifest["config_hash"] == config.config_hash(), "The manifest records the config hash"
    assert "torch" in manifest["versions"], "Library versions are recorded"


def test_loaders_round_trip(dataset):
    config, _ = dataset
    worlds = harness.load_worlds(config)
    assert [w.seed for w in worlds] == harness.world_seeds(config), "Worlds regenerate from seeds"
    episodes = harness.load_episodes(config)
    assert [e.episode_id for e in episodes] == [0, 1]
    assert {e.world_index for e in episodes} <= {0, 1}


def test_run_is_deterministic(dataset, tmp_path):
    config, _ = dataset
    first = harness.cmd_run_episodes(config)
    reports_a = (harness.data_dir(config).parent / "reports.json").read_text()
    second = harness.cmd_run_episodes(config)
    reports_b = (harness.data_dir(config).parent / "reports.json").read_text()
    assert reports_a == reports_b, "Same config, same reports"
    assert first.to_json() == second.to_json(), "Same config, same summary"
    assert first.count == 2
    out = harness.data_dir(config).parent
    for name in ("records.jsonl", "summary.csv", "summary.txt", "manifest.json"):
        assert (out / name).exists(), f"{name} should be written"
    assert len(list((out / "episodes").glob("*.jsonl"))) == 2, "One log per episode"

    table = harness.cmd_report(out)
    assert "sr" in table and "spl" in table, "The report shows the headline metrics"


def test_train_and_eval_waypoints(dataset):
    config, _ = dataset
    summary = harness.cmd_train(config)
    assert len(summary["losses"]) == 1, "One epoch gives one loss"
    assert summary["val_loss"] is not None, "The held-out world is scored"
    assert harness.checkpoint_path(config).exists(), "The checkpoint is saved"

    results = harness.cmd_eval_waypoints(config)
    assert set(results) == {"geometric", "untrained", "trained"}, "All predictors are compared"
    assert results["geometric"]["count"] == 4, "Every validation node is scored"


def test_ablation_reports_paired_deltas(dataset):
    base, _ = dataset
    config = base.model_copy(update={"planner": PlannerConfig(kind="heuristic")})
    result = harness.cmd_ablate(config, ["no_visit_info"])
    assert set(result["means"]) == {"baseline", "no_visit_info"}
    assert all(
        d in (None, 0.0) for d in result["deltas"]["baseline"].values()
    ), "The baseline has no delta against itself"
    assert "d_sr" in result["table"], "The table lists deltas"
    root = harness.data_dir(config).parent / "ablation"
    assert (root / "ablation.json").exists() and (root / "no_visit_info" / "summary.json").exists()
    with pytest.raises(ValueError):
        harness.ablation_config(config, "no_such_variant")


def copy_dataset(config: RunConfig, out) -> RunConfig:
    shutil.copytree(harness.data_dir(config), out / "data")
    return config.model_copy(update={"output_dir": str(out)})


def test_predictor_and_history_only_ablations(dataset, tmp_path):
    base, _ = dataset
    config = copy_dataset(base, tmp_path).model_copy(
        update={"planner": PlannerConfig(kind="heuristic")}
    )
    assert "trained_predictor" not in harness.default_variants(config), "No checkpoint yet"
    with pytest.raises(MissingDatasetError):
        harness.ablation_config(config, "trained_predictor")

    history_only = harness.ablation_config(config, "history_only").planner
    assert not history_only.include_graph, "History-only drops the graph"
    assert not history_only.include_visit_info, "History-only drops visit information"
    swapped = harness.ablation_config(config, "geometric_predictor").predictor
    assert swapped.kind == "geometric", "The swap selects the geometric predictor"

    harness.cmd_train(config)
    trained = harness.ablation_config(config, "trained_predictor").predictor
    assert trained.kind == "model", "The swap selects the trained predictor"
    assert trained.checkpoint == str(harness.checkpoint_path(config))
    assert "trained_predictor" in harness.default_variants(config), "A checkpoint enables it"

    variants = ["history_only", "geometric_predictor", "trained_predictor"]
    result = harness.cmd_ablate(config, variants)
    assert set(result["means"]) == {"baseline", *variants}, "Every variant is run"
    assert all(
        d in (None, 0.0) for d in result["deltas"]["geometric_predictor"].values()
    ), "The baseline already uses the geometric predictor"
    for variant in variants:
        assert variant in result["table"], f"{variant} appears in the table"


def test_llm_runs_reuse_the_response_cache(dataset, tmp_path):
    base, _ = dataset
    llm = LlmClientConfig(base_url="http://stub/v1", model="stub", max_retries=0)
    config = copy_dataset(base, tmp_path).model_copy(
        update={"planner": PlannerConfig(kind="llm", llm=llm)}
    )
    cached = harness.with_response_cache(config).planner.llm.cache_path
    assert cached == str(tmp_path / "llm_cache.jsonl"), "The cache sits in the output directory"
    assert harness.with_response_cache(base) == base, "Other planners are left alone"

    responder = StubResponder()
    transport = httpx.ASGITransport(app=create_app(responder))
    first = harness.cmd_run_episodes(config, transport=transport)
    sent = responder.requests
    assert sent > 0, "The first run asks the endpoint"
    assert (tmp_path / "llm_cache.jsonl").exists(), "Replies are written to the cache"

    second = harness.cmd_run_episodes(config, transport=transport)
    assert responder.requests == sent, "The second run is served from the cache"
    assert second.to_json() == first.to_json(), "Cached replies reproduce the run"


def test_inspect_episode_start(dataset):
    config, _ = dataset
    view = harness.cmd_inspect(config, 0)
    assert view["traversable"], "Episodes start on free space"
    assert len(view["obstacle_map"]) == config.grid.num_angles, "One raster row per bearing"
    assert len(view["waypoints"]) <= config.predictor.k
    with pytest.raises(MissingDatasetError):
        harness.cmd_inspect(config, 99)


def test_missing_dataset(tmp_path):
    with pytest.raises(MissingDatasetError):
        harness.load_episodes(small_config(tmp_path))
    with pytest.raises(MissingDatasetError):
        harness.cmd_report(tmp_path)


def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"grid": {"num_angles": 7}}')
    assert main(["gen-data", "--config", str(bad)]) == EXIT_CONFIG, "Invalid configs exit 1"
    assert main(["run", "--config", str(tmp_path / "absent.json")]) == EXIT_CONFIG
    assert main(["report", str(tmp_path)]) == EXIT_FAILURE, "Missing runs exit 2"

    good = tmp_path / "good.json"
    good.write_text(small_config(tmp_path / "out").model_dump_json())
    assert main(["gen-data", "--config", str(good)]) == EXIT_OK
    counts = json.loads(capsys.readouterr().out)
    assert counts["episodes"] == 2, "gen-data prints its counts"
