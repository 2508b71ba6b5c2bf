"""HTTP service exposing the memory engine to host applications.

JSON endpoints (see docs/schema.md for field-level details):

* ``POST /v1/context`` — classify the turn and assemble the memory context.
* ``POST /v1/turns`` — record a finished (user, assistant) turn.
* ``GET /v1/sessions/{session_id}/summary`` — current rolling summary.
* ``GET /v1/users/{user_name}/persona`` — the user's knowledge graph.
* ``GET /healthz`` — store/provider status.

Validation problems map to 400, unknown ids to 404, storage failures to
500, and provider failures to 502.
"""

from __future__ import annotations

from datetime import datetime

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .config import EngineConfig
from .engine import MemoryEngine, StoreCorruptionError, TurnRequest
from .index import VectorIndexError
from .providers import ProviderError
from .store import StorageError
from .timeutil import ensure_utc, utc_now


class ContextBody(BaseModel):
    user_name: str
    session_id: str
    user_text: str
    timestamp: datetime | None = None


class TurnBody(ContextBody):
    assistant_text: str


def _to_turn_request(body: ContextBody) -> TurnRequest:
    timestamp = ensure_utc(body.timestamp) if body.timestamp else utc_now()
    return TurnRequest(
        user_name=body.user_name,
        session_id=body.session_id,
        user_text=body.user_text,
        timestamp=timestamp,
    )


def create_app(engine: MemoryEngine) -> FastAPI:
    app = FastAPI(title="memkit", version="0.1.0")
    app.state.engine = engine

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": "validation", "detail": str(exc)})

    @app.exception_handler(ValueError)
    async def value_error_handler(request: Request, exc: ValueError):
        return JSONResponse(status_code=400, content={"error": "validation", "detail": str(exc)})

    @app.exception_handler(ProviderError)
    async def provider_handler(request: Request, exc: ProviderError):
        return JSONResponse(status_code=502, content={"error": "provider", "detail": str(exc)})

    @app.exception_handler(StorageError)
    async def storage_handler(request: Request, exc: StorageError):
        return JSONResponse(status_code=500, content={"error": "storage", "detail": str(exc)})

    @app.exception_handler(VectorIndexError)
    async def index_handler(request: Request, exc: VectorIndexError):
        return JSONResponse(status_code=500, content={"error": "storage", "detail": str(exc)})

    @app.exception_handler(StoreCorruptionError)
    async def corruption_handler(request: Request, exc: StoreCorruptionError):
        return JSONResponse(status_code=500, content={"error": "storage", "detail": str(exc)})

    @app.get("/healthz")
    def healthz():
        store_ok = True
        detail = ""
        try:
            engine.store.count_messages()
        except StorageError as exc:
            store_ok = False
            detail = str(exc)
        return {
            "status": "ok" if store_ok else "degraded",
            "store": {"path": engine.store.path, "ok": store_ok, "detail": detail},
            "index": {"path": str(engine.index.path), "entries": len(engine.index)},
            "provider": {"kind": engine.config.provider.kind},
        }

    @app.post("/v1/context")
    def retrieve_context(body: ContextBody):
        context = engine.retrieve_context(_to_turn_request(body))
        return context.to_dict()

    @app.post("/v1/turns")
    def record_turn(body: TurnBody):
        receipt = engine.record_turn(_to_turn_request(body), body.assistant_text)
        return receipt.to_dict()

    @app.get("/v1/sessions/{session_id}/summary")
    def get_summary(session_id: str):
        record = engine.store.get_summary(session_id)
        if record is None:
            return JSONResponse(
                status_code=404,
                content={"error": "not_found", "detail": f"no summary for session {session_id!r}"},
            )
        return {
            "session_id": record.session_id,
            "user_name": record.user_name,
            "summary_text": record.summary_text,
            "updated_at": record.updated_at.isoformat(),
            "turns_covered": record.turns_covered,
        }

    @app.get("/v1/users/{user_name}/persona")
    def get_persona(user_name: str):
        graph = engine.knowledge.get_persona(user_name)
        return {
            "user_name": graph.user_name,
            "nodes": sorted(graph.nodes),
            "edges": [
                {"subject": s, "predicate": p, "object": o, "triplet_id": tid}
                for s, p, o, tid in sorted(graph.edges, key=lambda e: e[3])
            ],
        }

    return app


def serve(config: EngineConfig, host: str = "127.0.0.1", port: int = 8800) -> None:
    """Build an engine from config and run the service (blocking)."""
    import uvicorn

    engine = MemoryEngine.from_config(config)
    try:
        uvicorn.run(create_app(engine), host=host, port=port, log_level="info")
    finally:
        engine.close()
