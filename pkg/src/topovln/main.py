"""Command-line entry point for topovln."""

import argparse
import asyncio
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from .config import RunConfig, load_run_config, settings
from .errors import ConfigError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FAILURE = 2


def _print_json(data: object) -> None:
    print(json.dumps(data, indent=2, sort_keys=True))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="topovln", description=__doc__)
    parser.add_argument("--log-level", default=None, help="Override TOPOVLN_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="Run config JSON file")
        p.add_argument("--out", default=None, help="Output directory (overrides output_dir)")
        return p

    command("gen-data", "Generate worlds, ground-truth graphs, training examples and episodes")
    command("train", "Train the waypoint transformer on the training split")
    command("eval-waypoints", "Compare waypoint predictors on the validation split")

    run = command("run", "Run every episode and write reports")
    run.add_argument("--planner", choices=["llm", "oracle", "greedy", "heuristic"])
    run.add_argument("--mode", choices=["sliding", "no_sliding"])
    run.add_argument("--noise", type=float, default=None, help="Depth noise standard deviation")

    ablate = command("ablate", "Run the ablation variants and report paired deltas")
    ablate.add_argument("--variants", nargs="+", default=None)

    report = sub.add_parser("report", help="Print the summary table of a finished run")
    report.add_argument("run_dir")

    inspect = command("inspect", "Show what the agent perceives at an episode start")
    inspect.add_argument("--episode", type=int, default=0)

    stub = sub.add_parser("serve-stub", help="Serve the offline chat-completions endpoint")
    stub.add_argument("--host", default=settings.server_host)
    stub.add_argument("--port", type=int, default=settings.server_port)

    mcp = sub.add_parser("serve-mcp", help="Serve the navigation tools over MCP stdio")
    mcp.add_argument("--config", default=None)
    return parser


def _config(args: argparse.Namespace) -> RunConfig:
    config = load_run_config(args.config)
    updates: Dict[str, Any] = {}
    if getattr(args, "out", None):
        updates["output_dir"] = args.out
    if getattr(args, "planner", None):
        updates["planner"] = config.planner.model_copy(update={"kind": args.planner})
    sim: Dict[str, Any] = {}
    if getattr(args, "mode", None):
        sim["mode"] = args.mode
    if getattr(args, "noise", None) is not None:
        sim["noise_std"] = args.noise
    if sim:
        updates["sim"] = config.sim.model_copy(update=sim)
    if not updates:
        return config
    try:
        return RunConfig.model_validate(config.model_copy(update=updates).model_dump())
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def dispatch(args: argparse.Namespace) -> None:
    from . import harness

    if args.command == "report":
        print(harness.cmd_report(Path(args.run_dir)))
        return
    if args.command == "serve-stub":
        from .chat_stub import serve

        serve(args.host, args.port)
        return

    config = _config(args)
    if args.command == "serve-mcp":
        from .server import NavigatorMCPServer

        asyncio.run(NavigatorMCPServer(config).run())
    elif args.command == "gen-data":
        _print_json(harness.cmd_gen_data(config))
    elif args.command == "train":
        summary = harness.cmd_train(config)
        _print_json({k: v for k, v in summary.items() if k != "losses"})
    elif args.command == "eval-waypoints":
        _print_json(harness.cmd_eval_waypoints(config))
    elif args.command == "run":
        print(harness.cmd_run_episodes(config).to_table())
    elif args.command == "ablate":
        print(harness.cmd_ablate(config, args.variants)["table"])
    elif args.command == "inspect":
        _print_json(harness.cmd_inspect(config, args.episode))


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=(args.log_level or settings.log_level).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        dispatch(args)
    except ConfigError as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
    except Exception:
        logger.exception("%s failed", args.command)
        return EXIT_FAILURE
    return EXIT_OK


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
