"""HTTP JSON service over sealed serving indexes.

All endpoints are read-only and serialize deterministically, so responses
for the same dataset are byte-stable. The compromise check endpoint only
ever sees a 4-character digest prefix; clients compare full digests
locally.
"""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Optional, Union

from fastapi import FastAPI, Request, Response
from fastapi.staticfiles import StaticFiles

from ..errors import NotFoundError
from ..ledger import is_address
from .indexes import ServingIndexes

_PREFIX_RE = re.compile(r"[0-9a-f]{4}")


def _json_response(payload: dict, status_code: int = 200) -> Response:
    return Response(
        content=json.dumps(payload, separators=(",", ":")),
        status_code=status_code,
        media_type="application/json",
    )


def _error(code: str, status_code: int) -> Response:
    return _json_response({"error": code}, status_code)


def create_app(indexes: ServingIndexes,
               static_dir: Optional[Union[str, Path]] = None,
               capture_requests: bool = False) -> FastAPI:
    """Build the service. capture_requests mirrors request lines into
    indexes.request_log for the privacy-audit tests."""
    app = FastAPI(openapi_url=None, docs_url=None, redoc_url=None)

    if capture_requests:
        @app.middleware("http")
        async def _record(request: Request, call_next):
            line = request.url.path
            if request.url.query:
                line += "?" + request.url.query
            indexes.request_log.append(line)
            return await call_next(request)

    @app.get("/api/pools")
    def pools() -> Response:
        return _json_response(indexes.pools_list())

    @app.get("/api/address/{addr}")
    def address(addr: str) -> Response:
        normalized = addr.strip().lower()
        if not is_address(normalized):
            return _error("malformed_address", 400)
        return _json_response(indexes.address_summary(normalized))

    @app.get("/api/transactions/{addr}")
    def transactions(addr: str, as_of: Optional[str] = None) -> Response:
        normalized = addr.strip().lower()
        if not is_address(normalized):
            return _error("malformed_address", 400)
        stamp: Optional[int] = None
        if as_of is not None:
            try:
                stamp = int(as_of)
            except ValueError:
                return _error("malformed_as_of", 400)
        return _json_response(indexes.reveal_timeline(normalized, stamp))

    @app.get("/api/pool/{pool_id}")
    def pool(pool_id: str) -> Response:
        try:
            return _json_response(indexes.pool_audit(pool_id))
        except NotFoundError:
            return _error("unknown_pool", 404)

    @app.get("/api/check/{prefix}")
    def check(prefix: str) -> Response:
        normalized = prefix.strip().lower()
        if not _PREFIX_RE.fullmatch(normalized):
            return _error("malformed_prefix", 400)
        return _json_response({
            "prefix": normalized,
            "digests": indexes.check(normalized),
        })

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True))
    return app
