"""Canonical binary encoding for records, certificates and proofs.

A record encodes as its one-byte kind followed by its populated fields in
declared order. Each field is ``tag (1 byte, declared position + 1) |
length (4 bytes, unsigned big-endian) | value``. Sequence items reuse the
same framing with tag 0. Optional fields that are ``None`` are omitted.

Decoding is strict: any byte string it accepts re-encodes to itself.
"""

from __future__ import annotations

import dataclasses
import hashlib
import struct
import typing
from datetime import date
from enum import Enum
from functools import lru_cache
from typing import Any, Union

from .errors import DecodeError
from .histname import PrimaryName

DIGEST_SIZE = 32
ZERO_DIGEST = bytes(DIGEST_SIZE)

_LEN = struct.Struct(">I")
_KINDS: dict[int, type] = {}
_KIND_OF: dict[type, int] = {}


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def record(kind: int):
    """Class decorator registering a dataclass with the codec."""

    def wrap(cls):
        if not dataclasses.is_dataclass(cls):
            raise TypeError(f"{cls.__name__} must be a dataclass")
        if kind in _KINDS and _KINDS[kind] is not cls:
            raise ValueError(f"kind 0x{kind:02x} already used by {_KINDS[kind].__name__}")
        _KINDS[kind] = cls
        _KIND_OF[cls] = kind
        return cls

    return wrap


record(0x01)(PrimaryName)


def kind_of(cls_or_obj) -> int:
    cls = cls_or_obj if isinstance(cls_or_obj, type) else type(cls_or_obj)
    return _KIND_OF[cls]


@lru_cache(maxsize=None)
def _schema(cls) -> tuple[tuple[str, Any], ...]:
    hints = typing.get_type_hints(cls)
    return tuple((f.name, hints[f.name]) for f in dataclasses.fields(cls) if f.init)


def _frame(tag: int, value: bytes) -> bytes:
    return bytes([tag]) + _LEN.pack(len(value)) + value


def _is_optional(tp) -> tuple[bool, Any]:
    if typing.get_origin(tp) is Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if len(args) < len(typing.get_args(tp)):
            inner = args[0] if len(args) == 1 else Union[tuple(args)]
            return True, inner
    return False, tp


def _encode_value(value, tp) -> bytes:
    origin = typing.get_origin(tp)
    if origin in (list, tuple):
        args = typing.get_args(tp)
        item_tp = args[0]
        return b"".join(_frame(0, _encode_value(item, item_tp)) for item in value)
    if origin is Union:
        return encode(value)
    if tp is bytes:
        return bytes(value)
    if tp is str:
        return value.encode("utf-8")
    if tp is bool:
        return b"\x01" if value else b"\x00"
    if tp is int:
        if value < 0:
            raise ValueError("only non-negative integers are encodable")
        return value.to_bytes(max(1, (value.bit_length() + 7) // 8), "big")
    if tp is date:
        return value.isoformat().encode("ascii")
    if isinstance(tp, type) and issubclass(tp, Enum):
        return _encode_value(tp(value).value, type(tp(value).value))
    if tp in _KIND_OF or tp is Any:
        return encode(value)
    raise TypeError(f"no canonical encoding for {tp!r}")


def encode(obj) -> bytes:
    """Canonical bytes for a registered dataclass instance."""
    cls = type(obj)
    if cls not in _KIND_OF:
        raise TypeError(f"{cls.__name__} is not a registered record")
    out = [bytes([_KIND_OF[cls]])]
    for i, (name, tp) in enumerate(_schema(cls)):
        value = getattr(obj, name)
        optional, inner = _is_optional(tp)
        if value is None:
            if optional:
                continue
            raise ValueError(f"{cls.__name__}.{name} is not populated")
        out.append(_frame(i + 1, _encode_value(value, inner)))
    return b"".join(out)


def encode_fields(cls, fields: dict) -> bytes:
    """Encode from a field mapping; key order in ``fields`` is irrelevant."""
    return encode(cls(**fields))


def _read_frames(data: bytes):
    pos = 0
    n = len(data)
    while pos < n:
        if pos + 5 > n:
            raise DecodeError("truncated frame header")
        tag = data[pos]
        (length,) = _LEN.unpack_from(data, pos + 1)
        start = pos + 5
        end = start + length
        if end > n:
            raise DecodeError("truncated frame value")
        yield tag, data[start:end]
        pos = end


def _decode_value(raw: bytes, tp):
    origin = typing.get_origin(tp)
    if origin in (list, tuple):
        item_tp = typing.get_args(tp)[0]
        items = []
        for tag, value in _read_frames(raw):
            if tag != 0:
                raise DecodeError("sequence item with non-zero tag")
            items.append(_decode_value(value, item_tp))
        return tuple(items) if origin is tuple else items
    if origin is Union:
        obj = decode(raw)
        allowed = typing.get_args(tp)
        if not isinstance(obj, allowed):
            raise DecodeError(f"unexpected record {type(obj).__name__}")
        return obj
    if tp is bytes:
        return raw
    if tp is str:
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DecodeError("invalid utf-8") from exc
    if tp is bool:
        if raw not in (b"\x00", b"\x01"):
            raise DecodeError("non-canonical boolean")
        return raw == b"\x01"
    if tp is int:
        if not raw or (len(raw) > 1 and raw[0] == 0):
            raise DecodeError("non-canonical integer")
        return int.from_bytes(raw, "big")
    if tp is date:
        try:
            text = raw.decode("ascii")
            d = date.fromisoformat(text)
        except (UnicodeDecodeError, ValueError) as exc:
            raise DecodeError("bad date") from exc
        if d.isoformat() != text:
            raise DecodeError("non-canonical date")
        return d
    if isinstance(tp, type) and issubclass(tp, Enum):
        base = type(next(iter(tp)).value)
        try:
            return tp(_decode_value(raw, base))
        except ValueError as exc:
            raise DecodeError(f"bad {tp.__name__}") from exc
    if tp in _KIND_OF or tp is Any:
        obj = decode(raw)
        if tp is not Any and not isinstance(obj, tp):
            raise DecodeError(f"expected {tp.__name__}, got {type(obj).__name__}")
        return obj
    raise TypeError(f"no canonical decoding for {tp!r}")


def decode(data: bytes, expected: type | None = None):
    if not data:
        raise DecodeError("empty record")
    cls = _KINDS.get(data[0])
    if cls is None:
        raise DecodeError(f"unknown record kind 0x{data[0]:02x}")
    if expected is not None and not issubclass(cls, expected):
        raise DecodeError(f"expected {expected.__name__}, got {cls.__name__}")
    schema = _schema(cls)
    values = {}
    last_tag = 0
    for tag, raw in _read_frames(data[1:]):
        if tag <= last_tag or tag > len(schema):
            raise DecodeError(f"unexpected field tag {tag} in {cls.__name__}")
        last_tag = tag
        name, tp = schema[tag - 1]
        _, inner = _is_optional(tp)
        values[name] = _decode_value(raw, inner)
    for name, tp in schema:
        if name not in values:
            optional, _ = _is_optional(tp)
            if not optional:
                raise DecodeError(f"{cls.__name__}.{name} missing")
            values[name] = None
    try:
        obj = cls(**values)
    except (TypeError, ValueError) as exc:
        raise DecodeError(f"invalid {cls.__name__}: {exc}") from exc
    if encode(obj) != data:
        raise DecodeError(f"non-canonical {cls.__name__} encoding")
    return obj
