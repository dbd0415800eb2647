"""OpenAI-compatible chat endpoint answered by the offline prompt heuristic.

Serves ``POST /v1/chat/completions`` so the LLM planner can be exercised end to end
without a model. Tests can script replies, including HTTP error statuses.
"""

from typing import Iterable, List, Optional, Union

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import __version__
from .prompting import PromptHeuristicResponder

Scripted = Union[str, int]


class ChatMessage(BaseModel):
    role: str
    content: str


class ChatRequest(BaseModel):
    model: str = "stub"
    messages: List[ChatMessage] = Field(default_factory=list)
    temperature: float = 0.0


class HealthResponse(BaseModel):
    status: str
    version: str
    requests: int


class StubResponder:
    """Replies from a script first, then from the prompt heuristic.

    A scripted int is returned as an HTTP error with that status code.
    """

    def __init__(self, script: Optional[Iterable[Scripted]] = None):
        self.script: List[Scripted] = list(script or [])
        self.heuristic = PromptHeuristicResponder()
        self.requests = 0

    def reply(self, messages: List[ChatMessage]) -> Scripted:
        self.requests += 1
        if self.script:
            return self.script.pop(0)
        prompt = next((m.content for m in messages if m.role == "user"), "")
        return self.heuristic.respond(prompt)


def create_app(responder: Optional[StubResponder] = None) -> FastAPI:
    stub = responder or StubResponder()
    app = FastAPI(
        title="topovln chat stub",
        description="Chat-completions endpoint backed by the offline prompt heuristic",
        version=__version__,
    )

    @app.get("/", response_model=HealthResponse)
    async def health_check() -> HealthResponse:
        return HealthResponse(status="healthy", version=__version__, requests=stub.requests)

    @app.post("/v1/chat/completions")
    async def chat_completions(request: ChatRequest) -> JSONResponse:
        reply = stub.reply(request.messages)
        if isinstance(reply, int):
            return JSONResponse(
                status_code=reply, content={"error": {"message": f"scripted {reply}"}}
            )
        return JSONResponse(
            content={
                "id": f"chatcmpl-{stub.requests}",
                "object": "chat.completion",
                "model": request.model,
                "choices": [
                    {
                        "index": 0,
                        "message": {"role": "assistant", "content": reply},
                        "finish_reason": "stop",
                    }
                ],
            }
        )

    return app


def serve(host: str, port: int) -> None:
    import uvicorn

    uvicorn.run(create_app(), host=host, port=port, log_level="info")
