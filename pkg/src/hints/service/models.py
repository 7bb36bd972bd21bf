"""Versioned request/response envelopes for the historian API."""

from __future__ import annotations

from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

API_VERSION = "1"

Status = Literal["ok", "bad-request", "unauthorized", "not-found", "unknown-method", "error"]


class ApiRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    version: str = API_VERSION
    id: str
    method: str
    params: dict[str, str] = Field(default_factory=dict)


class ErrorBody(BaseModel):
    reason: str
    detail: str = ""


class ApiResponse(BaseModel):
    model_config = ConfigDict(extra="forbid")

    version: str = API_VERSION
    id: str
    status: Status
    body: dict[str, Any] = Field(default_factory=dict)
    error: Optional[ErrorBody] = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"
