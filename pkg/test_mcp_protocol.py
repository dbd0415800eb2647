#!/usr/bin/env python3
"""Test MCP protocol communication with the navigation server."""

import json
import os
import subprocess
import sys
from pathlib import Path

import pytest


def _send(process: subprocess.Popen, message: dict) -> None:
    process.stdin.write(json.dumps(message) + "\n")
    process.stdin.flush()


@pytest.mark.asyncio
async def test_mcp_communication():
    """Test MCP server communication via stdin/stdout."""
    if not os.getenv("RUN_MCP_PROTOCOL_TESTS"):
        pytest.skip("Skipping stdio protocol test. Set RUN_MCP_PROTOCOL_TESTS=1 to run.")

    root = Path(__file__).parent
    env = {**os.environ, "PYTHONPATH": str(root / "src")}
    process = subprocess.Popen(
        [sys.executable, "-m", "topovln.main", "--log-level", "WARNING", "serve-mcp"],
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
        env=env,
        cwd=root,
    )

    try:
        _send(
            process,
            {
                "jsonrpc": "2.0",
                "id": 1,
                "method": "initialize",
                "params": {
                    "protocolVersion": "2024-11-05",
                    "capabilities": {},
                    "clientInfo": {"name": "test-client", "version": "1.0.0"},
                },
            },
        )
        init = json.loads(process.stdout.readline())
        assert init["id"] == 1 and "result" in init, "Server should answer initialization"
        _send(process, {"jsonrpc": "2.0", "method": "notifications/initialized"})

        _send(process, {"jsonrpc": "2.0", "id": 2, "method": "tools/list"})
        tools = json.loads(process.stdout.readline())
        names = {tool["name"] for tool in tools["result"]["tools"]}
        assert {"list_available_tools", "predict_waypoints", "run_episode"} <= names, (
            "Server should advertise the navigation tools"
        )
        print(f"✅ Server returned {len(names)} tools")
    finally:
        process.terminate()
        try:
            process.wait(timeout=5)
        except subprocess.TimeoutExpired:
            process.kill()
