"""Chat-completions client used by the LLM planner."""

import asyncio
import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Any, Awaitable, Callable, Dict, List, Optional

import httpx

from .config import LlmClientConfig
from .errors import PlannerTransportError

logger = logging.getLogger(__name__)

Message = Dict[str, str]

RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class ResponseCache:
    """Append-only JSONL cache of replies keyed by the SHA-256 of the request payload."""

    def __init__(self, path: Optional[str] = None):
        self.path = Path(path) if path else None
        self._entries: Dict[str, str] = {}
        if self.path and self.path.exists():
            for line in self.path.read_text().splitlines():
                if not line.strip():
                    continue
                record = json.loads(line)
                self._entries[record["key"]] = record["reply"]

    @staticmethod
    def key(payload: Dict[str, Any]) -> str:
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()

    def get(self, key: str) -> Optional[str]:
        return self._entries.get(key)

    def put(self, key: str, reply: str) -> None:
        if key in self._entries:
            return
        self._entries[key] = reply
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a") as fh:
                fh.write(json.dumps({"key": key, "reply": reply}, sort_keys=True) + "\n")

    def __len__(self) -> int:
        return len(self._entries)


class ChatCompletionsClient:
    """Client for any OpenAI-compatible /chat/completions endpoint."""

    def __init__(
        self,
        config: Optional[LlmClientConfig] = None,
        api_key: Optional[str] = None,
        transport: Optional[httpx.AsyncBaseTransport] = None,
        sleep: Callable[[float], Awaitable[None]] = asyncio.sleep,
    ):
        self.config = config or LlmClientConfig()
        if api_key is None:
            api_key = os.environ.get(self.config.api_key_env, "")
        self.api_key = api_key
        self.cache = ResponseCache(self.config.cache_path)
        self.requests_sent = 0
        self._sleep = sleep
        self._limiter = asyncio.Semaphore(self.config.max_concurrency)
        self._client = httpx.AsyncClient(
            base_url=self.config.base_url.rstrip("/"),
            timeout=self.config.timeout,
            transport=transport,
        )

    def _get_auth_headers(self) -> Dict[str, str]:
        if self.api_key:
            return {"Authorization": f"Bearer {self.api_key}"}
        return {}

    def redact(self, text: str) -> str:
        if self.api_key:
            return text.replace(self.api_key, "***")
        return text

    async def __aenter__(self) -> "ChatCompletionsClient":
        await self._client.__aenter__()
        return self

    async def __aexit__(self, exc_type: Any, exc_val: Any, exc_tb: Any) -> None:
        await self._client.__aexit__(exc_type, exc_val, exc_tb)

    async def _request(self, method: str, endpoint: str, **kwargs: Any) -> Dict[str, Any]:
        headers = kwargs.pop("headers", {})
        headers.update(self._get_auth_headers())
        headers["Content-Type"] = "application/json"

        async with self._limiter:
            self.requests_sent += 1
            response = await self._client.request(
                method=method, url=endpoint, headers=headers, **kwargs
            )
        response.raise_for_status()
        result: Dict[str, Any] = response.json()
        return result

    async def complete(self, messages: List[Message]) -> str:
        """Send one chat turn and return the assistant's reply text."""
        payload = {
            "model": self.config.model,
            "messages": messages,
            "temperature": self.config.temperature,
        }
        key = ResponseCache.key(payload)
        cached = self.cache.get(key)
        if cached is not None:
            return cached

        attempts = self.config.max_retries + 1
        last_error: Optional[Exception] = None
        for attempt in range(attempts):
            try:
                data = await self._request("POST", "/chat/completions", json=payload)
                reply = str(data["choices"][0]["message"]["content"] or "")
                self.cache.put(key, reply)
                return reply
            except httpx.HTTPStatusError as exc:
                status = exc.response.status_code
                if status not in RETRYABLE_STATUS:
                    raise PlannerTransportError(
                        self.redact(f"chat endpoint returned HTTP {status}")
                    ) from exc
                last_error = exc
            except httpx.TransportError as exc:
                last_error = exc
            except (KeyError, IndexError, TypeError, ValueError) as exc:
                raise PlannerTransportError(f"malformed chat response: {exc}") from exc

            if attempt + 1 < attempts:
                delay = self.config.backoff_base * (2**attempt)
                logger.warning(
                    "chat request failed (%s), retry %d/%d in %.2fs",
                    self.redact(str(last_error)),
                    attempt + 1,
                    self.config.max_retries,
                    delay,
                )
                await self._sleep(delay)

        raise PlannerTransportError(
            self.redact(f"chat endpoint unreachable after {attempts} attempts: {last_error}")
        )

    async def close(self) -> None:
        await self._client.aclose()
