"""Deployable surface: configuration, RPC models, dispatch and the HTTP app."""

from .config import ServiceConfig, load_config, parse_config
from .core import Service
from .models import ApiRequest, ApiResponse

__all__ = ["ApiRequest", "ApiResponse", "Service", "ServiceConfig", "load_config", "parse_config"]
