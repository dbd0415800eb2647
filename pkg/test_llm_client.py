#!/usr/bin/env python3
"""Tests for the chat-completions client and LLM planner against the local stub."""

from typing import List

import httpx
import pytest

from src.topovln.chat_stub import StubResponder, create_app
from src.topovln.config import LlmClientConfig
from src.topovln.errors import PlannerTransportError
from src.topovln.llm_client import ChatCompletionsClient
from src.topovln.planners import PromptPlanner
from src.topovln.prompting import GoTo, Stop, build_context
from src.topovln.radial import Pose
from src.topovln.topograph import TopoGraph


def context():
    graph = TopoGraph()
    here = graph.add_node((0.0, 0.0), visited=True)
    for x in (1.0, 2.0, 3.0):
        graph.add_edge(here, graph.add_node((x, 1.0)))
    graph.nodes[here].cached_options = [1, 2, 3]
    return build_context(graph, here, Pose(0.0, 0.0, 0.0), [here], "Walk ahead.")


class Sleeper:
    def __init__(self) -> None:
        self.delays: List[float] = []

    async def __call__(self, delay: float) -> None:
        self.delays.append(delay)


def make_client(script=None, **overrides):
    responder = StubResponder(script)
    sleeper = Sleeper()
    config = LlmClientConfig(base_url="http://stub/v1", model="stub", **overrides)
    client = ChatCompletionsClient(
        config,
        api_key="sk-secret",
        transport=httpx.ASGITransport(app=create_app(responder)),
        sleep=sleeper,
    )
    return client, responder, sleeper


@pytest.mark.asyncio
async def test_plain_action_reply():
    client, responder, _ = make_client(["Thought: three looks open\nAction: 3"])
    try:
        response = await PromptPlanner(client).decide(context())
    finally:
        await client.close()
    assert response.action == GoTo(node=3), "The stub's reply should become GoTo(3)"
    assert response.thought == "three looks open", "The thought is carried through"
    assert responder.requests == 1, "One request per well-formed reply"


@pytest.mark.asyncio
async def test_two_garbage_replies_stop_and_flag():
    client, responder, _ = make_client(["no idea", "still no idea"])
    try:
        response = await PromptPlanner(client).decide(context())
    finally:
        await client.close()
    assert response.action == Stop(), "A second unparseable reply stops the episode"
    assert response.flagged, "The response is flagged"
    assert response.flag_reason == "missing_action", "The flag names the parse failure"
    assert response.raw_replies == ["no idea", "still no idea"], "Both raw replies are kept"
    assert responder.requests == 2, "Exactly one re-query is made"


@pytest.mark.asyncio
async def test_retry_after_rate_limit():
    client, responder, sleeper = make_client([429, "Action: 2"], backoff_base=0.5)
    try:
        reply = await client.complete([{"role": "user", "content": "hi"}])
    finally:
        await client.close()
    assert reply == "Action: 2", "The reply after the retry is returned"
    assert sleeper.delays == [0.5], "One backoff delay before the retry"
    assert client.requests_sent == 2, "The failed request counts"


@pytest.mark.asyncio
async def test_retries_are_bounded():
    client, _, sleeper = make_client([503, 503, 503, 503], max_retries=3, backoff_base=0.5)
    try:
        with pytest.raises(PlannerTransportError):
            await client.complete([{"role": "user", "content": "hi"}])
    finally:
        await client.close()
    assert sleeper.delays == [0.5, 1.0, 2.0], "Backoff doubles between attempts"


@pytest.mark.asyncio
async def test_client_errors_are_not_retried():
    client, responder, sleeper = make_client([400])
    try:
        with pytest.raises(PlannerTransportError):
            await client.complete([{"role": "user", "content": "hi"}])
    finally:
        await client.close()
    assert responder.requests == 1 and sleeper.delays == [], "HTTP 400 fails immediately"


@pytest.mark.asyncio
async def test_cache_answers_repeated_requests(tmp_path):
    client, responder, _ = make_client(["Action: 1"], cache_path=str(tmp_path / "cache.jsonl"))
    messages = [{"role": "user", "content": "same prompt"}]
    try:
        first = await client.complete(messages)
        second = await client.complete(messages)
    finally:
        await client.close()
    assert first == second == "Action: 1", "Cached replies are identical"
    assert responder.requests == 1, "The second call is served from the cache"
    assert (tmp_path / "cache.jsonl").read_text().count("\n") == 1, "One cache line is written"


@pytest.mark.asyncio
async def test_stub_falls_back_to_heuristic():
    client, _, _ = make_client()
    try:
        response = await PromptPlanner(client, redact=client.redact).decide(context())
    finally:
        await client.close()
    assert response.action == GoTo(node=1), "The heuristic picks the first unvisited option"


def test_redaction():
    client = ChatCompletionsClient(LlmClientConfig(), api_key="sk-secret")
    assert client.redact("key=sk-secret") == "key=***", "The key never reaches logs"
    assert client._get_auth_headers() == {"Authorization": "Bearer sk-secret"}
