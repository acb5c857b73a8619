"""REST surface for the ledger.

    POST /v1/token  {"ha_credential": str}          -> {"token": hex}
    POST /v1/cbf    header X-DIMY-Token, body = base64 of a DIMB filter
                                                    -> {"tx_id": int}
    POST /v1/query  {"qbf": base64 DIMB, "t_old": "YYYY-MM-DD"}
                                                    -> {"exposed": bool}

The query endpoint is unauthenticated and answers with nothing but the
boolean. Bodies over 4 MB are rejected with 413.
"""

from __future__ import annotations

import base64
import binascii
import json
from datetime import date, datetime, timezone
from typing import Callable

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from ..bloom import BloomError, BloomFilter
from .ledger import InvalidWindow, Ledger, TokenError, Unauthorized

MAX_BODY = 4 * 1024 * 1024
TOKEN_HEADER = "X-DIMY-Token"


def _utcnow() -> datetime:
    return datetime.now(timezone.utc)


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse({"error": message}, status_code=status)


async def _read_body(request: Request) -> bytes | None:
    declared = request.headers.get("content-length")
    if declared is not None and declared.isdigit() and int(declared) > MAX_BODY:
        return None
    body = bytearray()
    async for chunk in request.stream():
        body.extend(chunk)
        if len(body) > MAX_BODY:
            return None
    return bytes(body)


def _decode_filter(text) -> BloomFilter:
    if not isinstance(text, (str, bytes)):
        raise ValueError("filter must be a base64 string")
    try:
        raw = base64.b64decode(text, validate=True)
    except (binascii.Error, ValueError):
        raise ValueError("filter is not valid base64") from None
    try:
        return BloomFilter.deserialize(raw)
    except BloomError as e:
        raise ValueError(f"malformed filter: {e}") from None


def create_app(ledger: Ledger, clock: Callable[[], datetime] = _utcnow) -> FastAPI:
    app = FastAPI(title="DIMY ledger", docs_url=None, redoc_url=None, openapi_url=None)

    @app.post("/v1/token")
    async def token(request: Request):
        body = await _read_body(request)
        if body is None:
            return _error(413, "body too large")
        try:
            cred = json.loads(body)["ha_credential"]
        except (ValueError, KeyError, TypeError):
            return _error(400, "expected {\"ha_credential\": ...}")
        if not isinstance(cred, str):
            return _error(400, "ha_credential must be a string")
        try:
            issued = ledger.issue_token(cred, clock())
        except Unauthorized:
            return _error(401, "unauthorized")
        return {"token": issued.hex}

    @app.post("/v1/cbf")
    async def upload(request: Request):
        body = await _read_body(request)
        if body is None:
            return _error(413, "body too large")
        token = request.headers.get(TOKEN_HEADER)
        if not token:
            return _error(401, "missing token")
        try:
            cbf = _decode_filter(body.strip())
        except ValueError as e:
            return _error(400, str(e))
        try:
            tx_id = ledger.upload_cbf(token, cbf, clock())
        except TokenError as e:
            return _error(401, type(e).__name__)
        except BloomError as e:
            return _error(400, str(e))
        return {"tx_id": tx_id}

    @app.post("/v1/query")
    async def query(request: Request):
        body = await _read_body(request)
        if body is None:
            return _error(413, "body too large")
        try:
            payload = json.loads(body)
            qbf = _decode_filter(payload["qbf"])
            t_old = date.fromisoformat(payload["t_old"])
        except (ValueError, KeyError, TypeError) as e:
            return _error(400, f"bad query: {e}")
        try:
            exposed = ledger.check_exposure(qbf, t_old, clock())
        except (InvalidWindow, BloomError) as e:
            return _error(400, str(e))
        return {"exposed": bool(exposed)}

    return app


def serve(ledger: Ledger, host: str = "127.0.0.1", port: int = 8000):
    import uvicorn

    uvicorn.run(create_app(ledger), host=host, port=port)
