"""Service configuration: a line-oriented ``key = value`` file."""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace
from datetime import date
from pathlib import Path
from typing import Optional

from ..dates import Duration
from ..errors import ConfigError
from ..historian import HistorianConfig

MODES = ("plain", "certified")


@dataclass(frozen=True)
class ServiceConfig:
    listen: str = "127.0.0.1:8470"
    storage: Path = Path("hints-data")
    mode: str = "plain"
    link_ttl: Duration = Duration(months=2)
    challenge_timeout: Duration = Duration(days=7)
    reconfirm_lead: Duration = Duration(days=2)
    anchor_period: int = 1024
    loose: bool = False
    clock: str = "system"  # or virtual:YYYY-MM-DD
    kdf_iterations: int = 100_000
    archive_authority: Optional[str] = None  # hex KeyId pinning the key archive signer

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}, not {self.mode!r}")
        if self.anchor_period < 1:
            raise ConfigError("anchor_period must be positive")
        host, sep, port = self.listen.rpartition(":")
        if not sep or not host or not port.isdigit() or not 0 < int(port) < 65536:
            raise ConfigError(f"listen must be host:port, not {self.listen!r}")
        if self.clock != "system":
            if not self.clock.startswith("virtual:"):
                raise ConfigError(f"clock must be 'system' or 'virtual:YYYY-MM-DD', not {self.clock!r}")
            try:
                date.fromisoformat(self.clock[len("virtual:") :])
            except ValueError:
                raise ConfigError(f"bad virtual clock date in {self.clock!r}") from None
        if self.archive_authority is not None:
            try:
                if len(bytes.fromhex(self.archive_authority)) != 32:
                    raise ValueError
            except ValueError:
                raise ConfigError("archive_authority must be a 64-digit hex KeyId") from None
        try:
            self.historian_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def host(self) -> str:
        return self.listen.rpartition(":")[0]

    @property
    def port(self) -> int:
        return int(self.listen.rpartition(":")[2])

    def historian_config(self) -> HistorianConfig:
        return HistorianConfig(
            link_ttl=self.link_ttl,
            challenge_timeout=self.challenge_timeout,
            reconfirm_lead=self.reconfirm_lead,
            loose=self.loose,
            kdf_iterations=self.kdf_iterations,
        )

    def virtual_start(self) -> Optional[date]:
        if self.clock == "system":
            return None
        return date.fromisoformat(self.clock[len("virtual:") :])

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    def with_overrides(self, **values) -> "ServiceConfig":
        return replace(self, **{k: _coerce(k, v) for k, v in values.items() if v is not None})


_TYPES = {f.name: f.type for f in fields(ServiceConfig)}


def _coerce(key: str, raw):
    if key not in _TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    if not isinstance(raw, str):
        return raw
    tp = _TYPES[key]
    try:
        if tp == "Duration":
            return Duration.parse(raw)
        if tp == "int":
            return int(raw)
        if tp == "bool":
            if raw.lower() not in ("true", "false", "yes", "no", "1", "0"):
                raise ValueError(raw)
            return raw.lower() in ("true", "yes", "1")
        if tp == "Path":
            return Path(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return raw


def parse_config(text: str) -> ServiceConfig:
    values = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"config line {n}: expected 'key = value'")
        key = key.strip()
        if key in values:
            raise ConfigError(f"config line {n}: duplicate key {key!r}")
        values[key] = _coerce(key, value.strip())
    return ServiceConfig(**values)


def load_config(path: str | os.PathLike | None = None, **overrides) -> ServiceConfig:
    """File values, overridden by HINTS_STORAGE, overridden by explicit flags."""
    try:
        config = parse_config(Path(path).read_text()) if path else ServiceConfig()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    env = os.environ.get("HINTS_STORAGE")
    if env and overrides.get("storage") is None:
        overrides["storage"] = env
    return config.with_overrides(**overrides)
