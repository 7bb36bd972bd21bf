"""Clients speaking the RPC envelope, over HTTP or straight to a Service."""

from __future__ import annotations

import itertools

import httpx

from .core import Service
from .models import ApiRequest, ApiResponse


class _Base:
    def __init__(self):
        self._ids = itertools.count(1)

    def call(self, method: str, **params: str) -> ApiResponse:
        req = ApiRequest(id=str(next(self._ids)), method=method, params={k: str(v) for k, v in params.items()})
        resp = self._send(req)
        if resp.id != req.id:
            raise RuntimeError(f"response id {resp.id!r} does not match request {req.id!r}")
        return resp


class LocalClient(_Base):
    def __init__(self, service: Service):
        super().__init__()
        self.service = service

    def _send(self, req: ApiRequest) -> ApiResponse:
        # round-trip through JSON so in-process calls see exactly the wire form
        wire = ApiRequest.model_validate_json(req.model_dump_json())
        return ApiResponse.model_validate_json(self.service.dispatch(wire).model_dump_json())


class HttpClient(_Base):
    def __init__(self, base_url: str, timeout: float = 30.0, transport: httpx.BaseTransport | None = None):
        super().__init__()
        self._http = httpx.Client(base_url=base_url, timeout=timeout, transport=transport)

    def _send(self, req: ApiRequest) -> ApiResponse:
        r = self._http.post("/v1/rpc", content=req.model_dump_json(), headers={"content-type": "application/json"})
        r.raise_for_status()
        return ApiResponse.model_validate_json(r.text)

    def close(self) -> None:
        self._http.close()
