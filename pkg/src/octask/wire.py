"""Parcel wire format: little-endian, length-prefixed frames.

Frame layout (after a 4-byte little-endian length prefix holding the
body size):

    magic            4 bytes  "MTP1"
    version          1 byte
    kind             1 byte   (1 invoke, 2 reply, 3 handshake)
    request_id       8 bytes
    target locality  4 bytes
    target index     8 bytes
    action_id        4 bytes  (carries the status code on replies)
    payload length   4 bytes
    payload          N bytes

Fixed part is 34 bytes.  Decoding is strict and names the offending
field; a decoder must never crash on hostile bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

MAGIC = b"MTP1"
VERSION = 1

KIND_INVOKE = 1
KIND_REPLY = 2
KIND_HANDSHAKE = 3
_KINDS = (KIND_INVOKE, KIND_REPLY, KIND_HANDSHAKE)

MAX_PAYLOAD = 16 * 1024 * 1024

_HEADER = struct.Struct("<4sBBQIQII")
HEADER_SIZE = _HEADER.size  # 34
_PREFIX = struct.Struct("<I")

# first field that is incomplete at a given truncation point
_FIELD_AT = (
    [("magic")] * 4 + ["version", "kind"] + ["request_id"] * 8
    + ["target.locality_id"] * 4 + ["target.local_index"] * 8
    + ["action_id"] * 4 + ["payload_length"] * 4
)


class DecodeError(ValueError):
    """Malformed frame; `field` names what failed."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class Gid:
    """Globally unique component id; the locality is part of the id."""

    locality_id: int
    local_index: int

    def __post_init__(self):
        if not 0 <= self.locality_id < 1 << 32:
            raise ValueError("locality_id out of range")
        if not 0 <= self.local_index < 1 << 64:
            raise ValueError("local_index out of range")


@dataclass(frozen=True)
class Parcel:
    kind: int
    request_id: int
    target: Gid
    action_id: int
    payload: bytes = b""


def encode(p: Parcel, max_payload: int = MAX_PAYLOAD) -> bytes:
    """Length prefix plus frame body."""
    if p.kind not in _KINDS:
        raise ValueError(f"unknown parcel kind {p.kind}")
    if len(p.payload) > max_payload:
        raise ValueError(f"payload of {len(p.payload)} bytes exceeds limit {max_payload}")
    body = _HEADER.pack(MAGIC, VERSION, p.kind, p.request_id,
                        p.target.locality_id, p.target.local_index,
                        p.action_id, len(p.payload)) + p.payload
    return _PREFIX.pack(len(body)) + body


def decode_body(body: bytes, max_payload: int = MAX_PAYLOAD) -> Parcel:
    """Decode a frame body (without the length prefix)."""
    if len(body) < HEADER_SIZE:
        raise DecodeError(_FIELD_AT[len(body)], "frame truncated")
    magic, version, kind, request_id, loc, idx, action_id, plen = \
        _HEADER.unpack_from(body)
    if magic != MAGIC:
        raise DecodeError("magic", f"expected {MAGIC!r}, got {magic!r}")
    if version != VERSION:
        raise DecodeError("version", f"unsupported version {version}")
    if kind not in _KINDS:
        raise DecodeError("kind", f"unknown kind {kind}")
    if plen > max_payload:
        raise DecodeError("payload_length", f"{plen} exceeds limit {max_payload}")
    if len(body) != HEADER_SIZE + plen:
        raise DecodeError("payload", f"expected {plen} payload bytes, frame has {len(body) - HEADER_SIZE}")
    return Parcel(kind, request_id, Gid(loc, idx), action_id, body[HEADER_SIZE:])


def decode(frame: bytes, max_payload: int = MAX_PAYLOAD) -> Parcel:
    """Decode a full frame including its length prefix."""
    if len(frame) < 4:
        raise DecodeError("length_prefix", "frame shorter than the length prefix")
    (n,) = _PREFIX.unpack_from(frame)
    if n != len(frame) - 4:
        raise DecodeError("length_prefix", f"prefix says {n} bytes, frame has {len(frame) - 4}")
    return decode_body(frame[4:], max_payload)
