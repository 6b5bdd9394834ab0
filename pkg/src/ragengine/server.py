"""HTTP gateway exposing the engine to the web UI and other clients."""

from __future__ import annotations

import uuid
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request, UploadFile
from fastapi.responses import JSONResponse, PlainTextResponse

from .engine import Engine
from .errors import EmptyQuestion, EngineError, StageError
from .extraction import export_records_csv, export_records_json


def _error_response(code: str, message: str, status: int) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message, "code": code})


def create_app(engine: Engine) -> FastAPI:
    app = FastAPI(title="ragengine")

    @app.exception_handler(EngineError)
    async def engine_error_handler(_req: Request, exc: EngineError):
        status = 400
        if isinstance(exc, StageError):
            status = 422
        return _error_response(exc.code, str(exc), status)

    @app.get("/api/health")
    def health():
        return {"status": "ok", "index_size": len(engine.index)}

    @app.post("/api/chat")
    def chat(payload: dict):
        question = (payload.get("question") or "").strip()
        if not question:
            raise EmptyQuestion("question must be non-empty")
        session_id, ans = engine.ask(question, payload.get("session_id"))
        bundle = engine.sessions.get(session_id).turns[-1].bundle
        sources = [
            {
                "tag": rc.tag,
                "chunk_id": rc.result.metadata.get("chunk_id", rc.result.vector_id),
                "doc_id": rc.result.metadata.get("doc_id", ""),
                "score": round(rc.result.score, 4),
            }
            for rc in bundle.results
        ]
        return {
            "session_id": session_id,
            "answer": ans.text,
            "citations": list(ans.citations),
            "grounded": ans.grounded,
            "sources": sources,
        }

    @app.post("/api/documents")
    async def add_document(request: Request, file: Optional[UploadFile] = None):
        if file is not None:
            uploads = Path(engine.config.data_dir) / "uploads"
            uploads.mkdir(parents=True, exist_ok=True)
            suffix = Path(file.filename or "upload.txt").suffix or ".txt"
            dest = uploads / f"{uuid.uuid4().hex}{suffix}"
            dest.write_bytes(await file.read())
            report = engine.ingest_document(dest)
        else:
            payload = await request.json()
            path = payload.get("path")
            if not path:
                return _error_response("BadRequest", "provide a file upload or a path", 400)
            report = engine.ingest_document(path)
        return report.to_dict()

    @app.get("/api/documents")
    def list_documents():
        return {"documents": list(engine.documents.values())}

    @app.get("/api/records")
    def records(format: str = "json"):
        if format == "csv":
            return PlainTextResponse(
                export_records_csv(engine.records, engine.schema),
                media_type="text/csv",
            )
        if format == "json":
            return PlainTextResponse(
                export_records_json(engine.records, engine.schema),
                media_type="application/json",
            )
        return _error_response("BadRequest", f"unknown format '{format}'", 400)

    @app.get("/api/chunks/{chunk_id}")
    def chunk(chunk_id: str):
        text = engine.chunk_texts.get(chunk_id)
        if text is None:
            return _error_response("NotFound", f"unknown chunk '{chunk_id}'", 404)
        return {"chunk_id": chunk_id, "text": text}

    return app


def serve_http(engine: Engine, host: Optional[str] = None, port: Optional[int] = None):
    import uvicorn

    app = create_app(engine)
    uvicorn.run(app, host=host or engine.config.host, port=port or engine.config.port)
