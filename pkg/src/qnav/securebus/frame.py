"""Bit-exact wire format of secure-bus frames.

All integers are little-endian. Header (31 bytes)::

    off  size  field
      0     2  magic        0x51 0x41 ("QA")
      2     1  version      1
      3     1  msg_type     0 Hello, 1 KemResponse, 2 Data, 3 Close
      4     1  suite_id
      5     2  sensor_id    u16
      7     8  sequence     u64
     15    12  nonce
     27     4  payload_len  u32

followed by ``payload_len`` payload bytes and, for Data frames only, a
16-byte authentication tag.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

from .errors import MalformedFrame

MAGIC = b"\x51\x41"
VERSION = 1
HEADER = struct.Struct("<2sBBBHQ12sI")
HEADER_LEN = HEADER.size
TAG_LEN = 16
NONCE_LEN = 12
MAX_PAYLOAD = 1 << 20
U64_MAX = (1 << 64) - 1


class MsgType(enum.IntEnum):
    HELLO = 0
    KEM_RESPONSE = 1
    DATA = 2
    CLOSE = 3


@dataclass(frozen=True)
class SecureFrame:
    msg_type: MsgType
    suite_id: int
    sensor_id: int
    sequence: int
    nonce: bytes
    payload: bytes
    tag: bytes = b""

    def __post_init__(self):
        object.__setattr__(self, "msg_type", MsgType(self.msg_type))
        if not 0 <= self.suite_id <= 0xFF:
            raise ValueError("suite_id must fit in u8")
        if not 0 <= self.sensor_id <= 0xFFFF:
            raise ValueError("sensor_id must fit in u16")
        if not 0 <= self.sequence <= U64_MAX:
            raise ValueError("sequence must fit in u64")
        if len(self.nonce) != NONCE_LEN:
            raise ValueError(f"nonce must be {NONCE_LEN} bytes")
        if len(self.payload) > MAX_PAYLOAD:
            raise ValueError(f"payload exceeds {MAX_PAYLOAD} bytes")
        expected_tag = TAG_LEN if self.msg_type is MsgType.DATA else 0
        if len(self.tag) != expected_tag:
            raise ValueError(f"{self.msg_type.name} frame needs a {expected_tag}-byte tag")

    def header_bytes(self) -> bytes:
        return HEADER.pack(MAGIC, VERSION, int(self.msg_type), self.suite_id, self.sensor_id,
                           self.sequence, bytes(self.nonce), len(self.payload))

    def to_bytes(self) -> bytes:
        return self.header_bytes() + bytes(self.payload) + bytes(self.tag)

    def __len__(self) -> int:
        return HEADER_LEN + len(self.payload) + len(self.tag)


def frame_length(header: bytes) -> int:
    """Total frame length announced by a header (validates the header first)."""
    _, msg_type, payload_len = _parse_header(header)
    return HEADER_LEN + payload_len + (TAG_LEN if msg_type is MsgType.DATA else 0)


def _parse_header(data: bytes):
    if len(data) < HEADER_LEN:
        raise MalformedFrame("header", f"truncated: {len(data)} of {HEADER_LEN} header bytes")
    magic, version, msg_type, suite_id, sensor_id, sequence, nonce, payload_len = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise MalformedFrame("magic", f"expected {MAGIC.hex()}, got {magic.hex()}")
    if version != VERSION:
        raise MalformedFrame("version", f"unsupported version {version}")
    try:
        msg_type = MsgType(msg_type)
    except ValueError:
        raise MalformedFrame("msg_type", f"unknown message type {msg_type}") from None
    if payload_len > MAX_PAYLOAD:
        raise MalformedFrame("payload_len", f"{payload_len} exceeds limit {MAX_PAYLOAD}")
    return (suite_id, sensor_id, sequence, nonce), msg_type, payload_len


def parse_frame(data) -> SecureFrame:
    """Parse exactly one frame; never raises anything but :class:`MalformedFrame`."""
    try:
        data = bytes(data)
    except TypeError:
        raise MalformedFrame("input", "frame must be bytes-like") from None
    (suite_id, sensor_id, sequence, nonce), msg_type, payload_len = _parse_header(data)
    tag_len = TAG_LEN if msg_type is MsgType.DATA else 0
    total = HEADER_LEN + payload_len + tag_len
    if len(data) < HEADER_LEN + payload_len:
        raise MalformedFrame("payload", f"truncated: {len(data) - HEADER_LEN} of {payload_len} payload bytes")
    if len(data) < total:
        raise MalformedFrame("tag", "truncated authentication tag")
    if len(data) > total:
        raise MalformedFrame("length", f"{len(data) - total} trailing bytes after frame")
    payload = data[HEADER_LEN:HEADER_LEN + payload_len]
    tag = data[HEADER_LEN + payload_len:total]
    return SecureFrame(msg_type, suite_id, sensor_id, sequence, nonce, payload, tag)


def data_nonce(sensor_id: int, sequence: int) -> bytes:
    """``(sensor_id as 4 bytes || 8 zero bytes) XOR (4 zero bytes || sequence as 8 bytes)``."""
    left = sensor_id.to_bytes(4, "little") + bytes(8)
    right = bytes(4) + sequence.to_bytes(8, "little")
    return bytes(a ^ b for a, b in zip(left, right))
