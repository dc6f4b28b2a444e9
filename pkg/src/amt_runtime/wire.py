"""Bit-exact wire formats: value encoding, action-id hashing, parcel frames.

Every frame starts with a fixed 64-byte header (magic "AMT1", version,
flags, destination and continuation GIDs, action id, source locality,
sequence number, payload length), all integers big-endian, followed by the
payload bytes.  Payloads use a tag-length-value scheme with five value
kinds: int64, float64 (IEEE 754 bit pattern), byte string, list, unit.
Encoding is canonical: a value has exactly one byte representation.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .errors import DecodeError, InvalidArgumentError
from .gid import GID, GID_BYTES, NULL_GID

MAGIC = b"AMT1"
VERSION = 1
HEADER_LEN = 64

FLAG_HAS_CONTINUATION = 0x0001
FLAG_FORWARDED = 0x0002

TAG_INT64 = 1
TAG_FLOAT64 = 2
TAG_BYTES = 3
TAG_LIST = 4
TAG_UNIT = 5

# Signature tag names, as used in action registrations.
TYPE_NAMES = {
    TAG_INT64: "i64",
    TAG_FLOAT64: "f64",
    TAG_BYTES: "bytes",
    TAG_LIST: "list",
    TAG_UNIT: "unit",
}
NAME_TO_TAG = {name: tag for tag, name in TYPE_NAMES.items()}

_INT64_MIN = -(1 << 63)
_INT64_MAX = (1 << 63) - 1

_I64 = struct.Struct(">q")
_F64 = struct.Struct(">d")
_U32 = struct.Struct(">I")
_HEADER = struct.Struct(">4sHH16s16sQIQI")


FNV_OFFSET_BASIS = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


def fnv1a_64(data: bytes) -> int:
    """64-bit FNV-1a hash; used to derive stable action ids from names."""
    h = FNV_OFFSET_BASIS
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def value_tag(value) -> int:
    """The encoding tag a Python value will be encoded with."""
    if value is None:
        return TAG_UNIT
    if isinstance(value, bool) or isinstance(value, int):
        return TAG_INT64
    if isinstance(value, float):
        return TAG_FLOAT64
    if isinstance(value, (bytes, bytearray)):
        return TAG_BYTES
    if isinstance(value, (list, tuple)):
        return TAG_LIST
    raise InvalidArgumentError(f"value of type {type(value).__name__} is not encodable")


def encode_value(value, out: bytearray | None = None) -> bytes:
    """Encode one value; tags self-describe nested structure."""
    buf = bytearray() if out is None else out
    tag = value_tag(value)
    buf.append(tag)
    if tag == TAG_INT64:
        v = int(value)
        if not _INT64_MIN <= v <= _INT64_MAX:
            raise InvalidArgumentError(f"integer {v} outside 64-bit signed range")
        buf += _I64.pack(v)
    elif tag == TAG_FLOAT64:
        buf += _F64.pack(value)
    elif tag == TAG_BYTES:
        data = bytes(value)
        buf += _U32.pack(len(data))
        buf += data
    elif tag == TAG_LIST:
        buf += _U32.pack(len(value))
        for item in value:
            encode_value(item, buf)
    # TAG_UNIT carries no body
    return bytes(buf) if out is None else b""


def decode_value(data: bytes, offset: int = 0) -> tuple[object, int]:
    """Decode one value starting at offset; returns (value, next_offset)."""
    if offset >= len(data):
        raise DecodeError("value", "truncated before tag")
    tag = data[offset]
    offset += 1
    if tag == TAG_INT64:
        if offset + 8 > len(data):
            raise DecodeError("int64", "truncated")
        return _I64.unpack_from(data, offset)[0], offset + 8
    if tag == TAG_FLOAT64:
        if offset + 8 > len(data):
            raise DecodeError("float64", "truncated")
        return _F64.unpack_from(data, offset)[0], offset + 8
    if tag == TAG_BYTES:
        if offset + 4 > len(data):
            raise DecodeError("bytes", "truncated length")
        n = _U32.unpack_from(data, offset)[0]
        offset += 4
        if offset + n > len(data):
            raise DecodeError("bytes", "truncated body")
        return data[offset : offset + n], offset + n
    if tag == TAG_LIST:
        if offset + 4 > len(data):
            raise DecodeError("list", "truncated count")
        count = _U32.unpack_from(data, offset)[0]
        offset += 4
        items = []
        for _ in range(count):
            item, offset = decode_value(data, offset)
            items.append(item)
        return items, offset
    if tag == TAG_UNIT:
        return None, offset
    raise DecodeError("tag", f"unknown value tag {tag}")


def encode_values(values) -> bytes:
    """Encode an argument tuple as a concatenation of values."""
    buf = bytearray()
    for v in values:
        encode_value(v, buf)
    return bytes(buf)


def decode_values(data: bytes) -> list:
    values = []
    offset = 0
    while offset < len(data):
        v, offset = decode_value(data, offset)
        values.append(v)
    return values


@dataclass(slots=True)
class Parcel:
    """A one-sided active message addressed to a global object."""

    dest: GID
    action_id: int
    source_locality: int
    seq_no: int
    payload: bytes = b""
    continuation: GID = field(default=NULL_GID)
    forwarded: bool = False

    def encode(self) -> bytes:
        flags = 0
        if not self.continuation.is_null():
            flags |= FLAG_HAS_CONTINUATION
        if self.forwarded:
            flags |= FLAG_FORWARDED
        header = _HEADER.pack(
            MAGIC,
            VERSION,
            flags,
            self.dest.pack(),
            self.continuation.pack(),
            self.action_id,
            self.source_locality,
            self.seq_no,
            len(self.payload),
        )
        return header + self.payload


def decode_parcel(frame: bytes) -> Parcel:
    """Exact inverse of Parcel.encode; validates magic, version and length."""
    if len(frame) < HEADER_LEN:
        raise DecodeError("frame", f"header needs {HEADER_LEN} bytes, got {len(frame)}")
    magic, version, flags, dest_b, cont_b, action_id, source, seq_no, payload_len = _HEADER.unpack_from(frame, 0)
    if magic != MAGIC:
        raise DecodeError("magic", f"expected {MAGIC!r}, got {magic!r}")
    if version != VERSION:
        raise DecodeError("version", f"unsupported version {version}")
    if len(frame) != HEADER_LEN + payload_len:
        raise DecodeError("payload_len", f"frame is {len(frame)} bytes, header says {HEADER_LEN + payload_len}")
    return Parcel(
        dest=GID.unpack(dest_b),
        action_id=action_id,
        source_locality=source,
        seq_no=seq_no,
        payload=frame[HEADER_LEN:],
        continuation=GID.unpack(cont_b),
        forwarded=bool(flags & FLAG_FORWARDED),
    )


def read_header(header: bytes) -> int:
    """Validate a 64-byte header and return the payload length to read."""
    if len(header) != HEADER_LEN:
        raise DecodeError("frame", "short header")
    magic, version, _, _, _, _, _, _, payload_len = _HEADER.unpack(header)
    if magic != MAGIC:
        raise DecodeError("magic", f"expected {MAGIC!r}, got {magic!r}")
    if version != VERSION:
        raise DecodeError("version", f"unsupported version {version}")
    return payload_len


assert _HEADER.size == HEADER_LEN
assert GID_BYTES == 16
