"""FastAPI application exposing the historian over one RPC route."""

from __future__ import annotations

from contextlib import asynccontextmanager

from fastapi import FastAPI

from .config import ServiceConfig
from .core import Service
from .models import ApiRequest, ApiResponse


def create_app(config: ServiceConfig | None = None, service: Service | None = None) -> FastAPI:
    if service is None:
        service = Service(config or ServiceConfig())

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        service.close()

    app = FastAPI(title="hints historian", version="1", lifespan=lifespan)
    app.state.service = service

    # sync handlers run in the threadpool; the historians serialize writers
    @app.post("/v1/rpc", response_model=ApiResponse)
    def rpc(request: ApiRequest) -> ApiResponse:
        return service.dispatch(request)

    @app.get("/v1/health")
    def health() -> dict:
        return {"status": "ok", "mode": service.config.mode, "methods": service.methods}

    return app
