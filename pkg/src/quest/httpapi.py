"""JSON HTTP surface over a ScoreboardService.

All error responses share one shape, ``{"code", "message", "field"?}``,
with 4xx for caller faults. Request bodies are validated by hand against
the documented contracts; there is deliberately no framework-side schema
magic between the wire and the service's own checks.

When the service is constructed with token hashes, mutating endpoints
require ``Authorization: Bearer <token>``; reads stay public (it is a
scoreboard). With no tokens configured the instance runs open, which is
the mode tests and local demos use.
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from starlette.exceptions import HTTPException as StarletteHTTPException

from .pareto import DEFAULT_SPACE, MetricSpace, ParetoError
from .service import ANONYMOUS_TOKEN_HASH, ScoreboardService, ServiceError, hash_token


def _auth_token_hash(service: ScoreboardService, request: Request) -> str:
    """Resolve the caller's token hash, enforcing auth when configured."""
    header = request.headers.get("authorization", "")
    if header.lower().startswith("bearer "):
        provided = hash_token(header[7:].strip())
    else:
        provided = None
    if service.token_hashes:
        if provided is None:
            raise ServiceError("unauthorized", "missing bearer token", http_status=401)
        if provided not in service.token_hashes:
            raise ServiceError("unauthorized", "unrecognized token", http_status=401)
    return provided if provided is not None else ANONYMOUS_TOKEN_HASH


async def _json_body(request: Request) -> dict:
    try:
        body = await request.json()
    except json.JSONDecodeError as exc:
        raise ServiceError("bad_json", f"request body is not valid JSON: {exc}") from None
    if not isinstance(body, dict):
        raise ServiceError("bad_json", "request body must be a JSON object")
    return body


def _parse_bool(raw: str | None, field: str, default: bool = False) -> bool:
    if raw is None:
        return default
    lowered = raw.lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ServiceError("bad_parameter", f"{field} must be a boolean, got {raw!r}", field=field)


def _parse_labels(raw_labels: list[str]) -> dict[str, str]:
    filters: dict[str, str] = {}
    for raw in raw_labels:
        key, sep, value = raw.partition(":")
        if not sep or not key or not value:
            raise ServiceError(
                "bad_parameter", f"label must look like key:value, got {raw!r}", field="label"
            )
        filters[key] = value
    return filters


def create_app(service: ScoreboardService) -> FastAPI:
    app = FastAPI(title="quest scoreboard", docs_url=None, redoc_url=None, openapi_url=None)
    app.state.service = service

    @app.exception_handler(ServiceError)
    async def _service_error(_request: Request, exc: ServiceError) -> JSONResponse:
        return JSONResponse(status_code=exc.http_status, content=exc.to_json())

    @app.exception_handler(StarletteHTTPException)
    async def _http_error(_request: Request, exc: StarletteHTTPException) -> JSONResponse:
        return JSONResponse(
            status_code=exc.status_code,
            content={"code": f"http_{exc.status_code}", "message": str(exc.detail)},
        )

    @app.get("/v1/healthz")
    async def healthz() -> dict:
        return {"status": "ok"}

    @app.post("/v1/tournaments", status_code=201)
    async def create_tournament(request: Request) -> dict:
        _auth_token_hash(service, request)
        body = await _json_body(request)
        if "space" in body and body["space"] is not None:
            try:
                space = MetricSpace.from_json(body["space"])
            except ParetoError as exc:
                raise ServiceError("malformed_record", str(exc), field="space") from None
        else:
            space = DEFAULT_SPACE
        tournament = service.create_tournament(
            title=body.get("title", ""),
            space=space,
            opens_at=body.get("opens_at", ""),
            closes_at=body.get("closes_at", ""),
        )
        return tournament.to_json()

    @app.get("/v1/tournaments/{uid}")
    async def get_tournament(uid: str) -> dict:
        return service.get_tournament(uid).to_json()

    @app.post("/v1/tournaments/{uid}/open")
    async def open_tournament(uid: str, request: Request) -> dict:
        _auth_token_hash(service, request)
        return service.open_tournament(uid).to_json()

    @app.post("/v1/tournaments/{uid}/close")
    async def close_tournament(uid: str, request: Request) -> dict:
        _auth_token_hash(service, request)
        return service.close_tournament(uid).to_json()

    @app.post("/v1/tournaments/{uid}/submissions")
    async def submit(uid: str, request: Request) -> JSONResponse:
        token_hash = _auth_token_hash(service, request)
        body = await _json_body(request)
        nonce = body.get("nonce")
        replayed = (
            isinstance(nonce, str) and service.find_by_nonce(uid, nonce) is not None
        )
        submission_uid = service.submit(uid, body, submitter_token_hash=token_hash)
        record = service.get_submission(submission_uid)
        return JSONResponse(
            status_code=200 if replayed else 201,
            content={"uid": submission_uid, "status": record.validation_status.value},
        )

    @app.patch("/v1/submissions/{uid}/status")
    async def set_status(uid: str, request: Request) -> dict:
        _auth_token_hash(service, request)
        body = await _json_body(request)
        if "status" not in body:
            raise ServiceError("malformed_record", "body lacks 'status'", field="status")
        record = service.set_validation_status(uid, body["status"], note=body.get("note", ""))
        return record.to_json()

    @app.get("/v1/tournaments/{uid}/board")
    async def board(uid: str, request: Request) -> dict:
        params = request.query_params
        dim_x = params.get("x")
        dim_y = params.get("y")
        for name, value in (("x", dim_x), ("y", dim_y)):
            if not value:
                raise ServiceError(
                    "bad_parameter", f"query parameter {name!r} is required", field=name
                )
        view = service.query_scoreboard(
            uid,
            dim_x,
            dim_y,
            filters=_parse_labels(params.getlist("label")),
            include_pending=_parse_bool(params.get("pending"), "pending"),
        )
        return view.to_json()

    @app.get("/v1/tournaments/{uid}/export")
    async def export(uid: str, request: Request) -> Response:
        fmt = request.query_params.get("format", "csv")
        payload = service.export(uid, fmt)
        media = "text/csv" if fmt == "csv" else "application/x-ndjson"
        return Response(content=payload, media_type=media)

    return app


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="quest-scoreboard", description="Serve a tournament scoreboard over HTTP."
    )
    parser.add_argument("--log", default="scoreboard-events.jsonl",
                        help="event log file (created if absent)")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8080)
    parser.add_argument("--token", action="append", default=[],
                        help="accepted bearer token; repeatable; none = open instance")
    parser.add_argument("--ui", metavar="DIR", default=None,
                        help="serve a static UI build from this directory under /ui")
    args = parser.parse_args(argv)

    import uvicorn

    service = ScoreboardService(
        Path(args.log), token_hashes=[hash_token(t) for t in args.token]
    )
    app = create_app(service)
    if args.ui:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=args.ui, html=True), name="ui")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
