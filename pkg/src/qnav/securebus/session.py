"""Sensor/processor session state machine over the secure-bus frames.

Handshake::

    sensor                                   processor
    Idle --handshake_hello-->  Hello  -->    verify signature against registry
    HelloSent                                encapsulate to sensor KEM key
              <--  KemResponse  <--          Established
    handshake_finish: decapsulate
    Established

``session_key = SHA256(shared_secret || hello_nonce || transcript_hash)`` with
``transcript_hash = SHA256(hello_frame_bytes || kem_ciphertext)``. Each
direction then seals under its own subkey ``SHA256(session_key || label)``
so the two per-direction sequence spaces never share a (key, nonce) pair.
"""
from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass, field
from typing import Mapping, Optional, Tuple

from .errors import (
    HandshakeError,
    MalformedFrame,
    ReplayDetected,
    SequenceExhausted,
    SignatureInvalid,
    UnknownSensor,
    UnsupportedSuite,
    WrongState,
)
from .frame import MAGIC, NONCE_LEN, TAG_LEN, U64_MAX, VERSION, MsgType, SecureFrame, data_nonce, parse_frame
from .registry import SensorCredentials, SensorRecord
from .suites import CryptoSuite

HELLO_NONCE_LEN = 32
_ZERO_NONCE = bytes(NONCE_LEN)
_SIG_LEN = struct.Struct("<H")


class Role(enum.Enum):
    SENSOR = "sensor"
    PROCESSOR = "processor"


class State(enum.Enum):
    IDLE = "idle"
    HELLO_SENT = "hello_sent"
    ESTABLISHED = "established"
    FAILED = "failed"


@dataclass
class SessionState:
    role: Role
    sensor_id: int = 0
    state: State = State.IDLE
    session_key: Optional[bytes] = None
    send_seq: int = 1
    recv_seq: int = 0
    suite: Optional[CryptoSuite] = None
    sign_frames: bool = False
    # sensor side: signing key for per-frame signatures; processor side: the sensor's vk
    frame_sig_key: Optional[bytes] = None
    hello_nonce: Optional[bytes] = field(default=None, repr=False)
    hello_bytes: Optional[bytes] = field(default=None, repr=False)

    def _require(self, *states: State) -> None:
        if self.state not in states:
            raise WrongState(f"{self.role.value} session is {self.state.value}, "
                             f"expected {' or '.join(s.value for s in states)}")

    def _direction_key(self, sender: Role) -> bytes:
        label = b"sensor->processor" if sender is Role.SENSOR else b"processor->sensor"
        return hashlib.sha256(self.session_key + label).digest()

    @property
    def established(self) -> bool:
        return self.state is State.ESTABLISHED


def _hello_signed_bytes(sensor_id: int, suite_id: int, nonce: bytes) -> bytes:
    return MAGIC + bytes([VERSION]) + sensor_id.to_bytes(2, "little") + bytes([suite_id]) + nonce


def derive_session_key(shared_secret: bytes, hello_nonce: bytes, hello_bytes: bytes, kem_ciphertext: bytes) -> bytes:
    transcript = hashlib.sha256(hello_bytes + kem_ciphertext).digest()
    return hashlib.sha256(shared_secret + hello_nonce + transcript).digest()


def _split_hello(payload: bytes) -> Tuple[bytes, bytes, bytes]:
    if len(payload) < HELLO_NONCE_LEN + _SIG_LEN.size:
        raise MalformedFrame("payload", "hello body too short")
    nonce = payload[:HELLO_NONCE_LEN]
    (sig_len,) = _SIG_LEN.unpack_from(payload, HELLO_NONCE_LEN)
    start = HELLO_NONCE_LEN + _SIG_LEN.size
    if len(payload) < start + sig_len:
        raise MalformedFrame("payload", "hello signature truncated")
    return nonce, payload[start:start + sig_len], payload[start + sig_len:]


def handshake_hello(sensor: SessionState, suite: CryptoSuite, sig_sk: bytes, payload_meta: bytes = b"") -> SecureFrame:
    """Emit a signed Hello. ``payload_meta`` rides along unsigned but enters the transcript hash."""
    sensor._require(State.IDLE)
    if sensor.role is not Role.SENSOR:
        raise WrongState("only a sensor session sends Hello")
    nonce = suite.random_bytes(HELLO_NONCE_LEN)
    sig = suite.sig.sign(sig_sk, _hello_signed_bytes(sensor.sensor_id, suite.suite_id, nonce))
    payload = nonce + _SIG_LEN.pack(len(sig)) + sig + bytes(payload_meta)
    frame = SecureFrame(MsgType.HELLO, suite.suite_id, sensor.sensor_id, 0, _ZERO_NONCE, payload)
    sensor.suite = suite
    sensor.hello_nonce = nonce
    sensor.hello_bytes = frame.to_bytes()
    if sensor.sign_frames:
        sensor.frame_sig_key = sig_sk
    sensor.state = State.HELLO_SENT
    return frame


def handshake_respond(processor: SessionState, suite: CryptoSuite, hello, registry: Mapping[int, SensorRecord]
                      ) -> Tuple[SecureFrame, SessionState]:
    """Authenticate a Hello and answer with a KEM ciphertext; the processor becomes Established."""
    processor._require(State.IDLE)
    try:
        hello = hello if isinstance(hello, SecureFrame) else parse_frame(hello)
        if hello.msg_type is not MsgType.HELLO:
            raise MalformedFrame("msg_type", f"expected HELLO, got {hello.msg_type.name}")
        if hello.suite_id != suite.suite_id:
            raise UnsupportedSuite(f"suite {hello.suite_id} not supported (processor runs {suite.suite_id})")
        record = registry.get(hello.sensor_id)
        if record is None:
            raise UnknownSensor(f"sensor {hello.sensor_id} is not registered")
        if record.suite_id != hello.suite_id:
            raise UnsupportedSuite(f"sensor {hello.sensor_id} is registered for suite {record.suite_id}")
        nonce, sig, _ = _split_hello(hello.payload)
        if not suite.sig.verify(record.verification_key, _hello_signed_bytes(hello.sensor_id, hello.suite_id, nonce), sig):
            raise SignatureInvalid(f"hello signature from sensor {hello.sensor_id} does not verify")
        ciphertext, shared = suite.kem.encapsulate(record.kem_public_key)
    except Exception:
        processor.state = State.FAILED
        raise
    hello_bytes = hello.to_bytes()
    processor.sensor_id = hello.sensor_id
    processor.suite = suite
    processor.session_key = derive_session_key(shared, nonce, hello_bytes, ciphertext)
    processor.send_seq, processor.recv_seq = 1, 0
    if processor.sign_frames:
        processor.frame_sig_key = record.verification_key
    processor.state = State.ESTABLISHED
    response = SecureFrame(MsgType.KEM_RESPONSE, suite.suite_id, hello.sensor_id, 0, _ZERO_NONCE, ciphertext)
    return response, processor


def handshake_finish(sensor: SessionState, response, kem_sk: bytes) -> SessionState:
    sensor._require(State.HELLO_SENT)
    try:
        response = response if isinstance(response, SecureFrame) else parse_frame(response)
        if response.msg_type is not MsgType.KEM_RESPONSE:
            raise MalformedFrame("msg_type", f"expected KEM_RESPONSE, got {response.msg_type.name}")
        if response.sensor_id != sensor.sensor_id or response.suite_id != sensor.suite.suite_id:
            raise HandshakeError("KEM response does not match the hello")
        shared = sensor.suite.kem.decapsulate(kem_sk, response.payload)
    except Exception:
        sensor.state = State.FAILED
        raise
    sensor.session_key = derive_session_key(shared, sensor.hello_nonce, sensor.hello_bytes, response.payload)
    sensor.send_seq, sensor.recv_seq = 1, 0
    sensor.state = State.ESTABLISHED
    return sensor


def seal_frame(session: SessionState, plaintext: bytes) -> SecureFrame:
    session._require(State.ESTABLISHED)
    if session.send_seq > U64_MAX:
        raise SequenceExhausted("send sequence space exhausted; rotate keys")
    seq = session.send_seq
    body = bytes(plaintext)
    if session.sign_frames and session.role is Role.SENSOR:
        sig = session.suite.sig.sign(session.frame_sig_key, _frame_signed_bytes(session.sensor_id, seq, body))
        body = _SIG_LEN.pack(len(sig)) + sig + body
    nonce = data_nonce(session.sensor_id, seq)
    # header bytes do not depend on the tag, so build it with a placeholder first
    draft = SecureFrame(MsgType.DATA, session.suite.suite_id, session.sensor_id, seq, nonce,
                        bytes(len(body)), bytes(TAG_LEN))
    sealed = session.suite.aead.seal(session._direction_key(session.role), nonce, draft.header_bytes(), body)
    session.send_seq = seq + 1
    return SecureFrame(MsgType.DATA, draft.suite_id, draft.sensor_id, seq, nonce, sealed[:-TAG_LEN], sealed[-TAG_LEN:])


def open_frame(session: SessionState, frame) -> bytes:
    """Authenticate, then enforce strictly increasing sequence numbers."""
    session._require(State.ESTABLISHED)
    frame = frame if isinstance(frame, SecureFrame) else parse_frame(frame)
    if frame.msg_type is not MsgType.DATA:
        raise MalformedFrame("msg_type", f"expected DATA, got {frame.msg_type.name}")
    peer = Role.PROCESSOR if session.role is Role.SENSOR else Role.SENSOR
    nonce = data_nonce(session.sensor_id, frame.sequence)
    body = session.suite.aead.open(session._direction_key(peer), nonce, frame.header_bytes(),
                                   frame.payload + frame.tag)
    if frame.sequence <= session.recv_seq:
        raise ReplayDetected(f"sequence {frame.sequence} <= last accepted {session.recv_seq}")
    if session.sign_frames and session.role is Role.PROCESSOR:
        if len(body) < _SIG_LEN.size:
            raise SignatureInvalid("frame signature missing")
        (sig_len,) = _SIG_LEN.unpack_from(body)
        sig, body = body[2:2 + sig_len], body[2 + sig_len:]
        if not session.suite.sig.verify(session.frame_sig_key, _frame_signed_bytes(session.sensor_id, frame.sequence, body), sig):
            raise SignatureInvalid(f"frame {frame.sequence} signature does not verify")
    session.recv_seq = frame.sequence
    return body


def _frame_signed_bytes(sensor_id: int, sequence: int, body: bytes) -> bytes:
    return sensor_id.to_bytes(2, "little") + sequence.to_bytes(8, "little") + body


def close_frame(session: SessionState) -> SecureFrame:
    return SecureFrame(MsgType.CLOSE, session.suite.suite_id if session.suite else 0, session.sensor_id, 0,
                       _ZERO_NONCE, b"")


def connect(credentials: SensorCredentials, registry: Mapping[int, SensorRecord], sensor_suite: CryptoSuite,
            processor_suite: Optional[CryptoSuite] = None, *, sign_frames: bool = False
            ) -> Tuple[SessionState, SessionState]:
    """Run the full in-memory handshake; returns (sensor, processor) sessions."""
    sensor = SessionState(Role.SENSOR, credentials.sensor_id, sign_frames=sign_frames)
    processor = SessionState(Role.PROCESSOR, sign_frames=sign_frames)
    hello = handshake_hello(sensor, sensor_suite, credentials.sig_sk)
    response, processor = handshake_respond(processor, processor_suite or sensor_suite, hello.to_bytes(), registry)
    handshake_finish(sensor, response.to_bytes(), credentials.kem_sk)
    return sensor, processor


def rotate_keys(sensor: SessionState, processor: SessionState, suite: CryptoSuite, *,
                credentials: SensorCredentials, registry: Mapping[int, SensorRecord]
                ) -> Tuple[SessionState, SessionState]:
    """Fresh handshake tunnelled through the current channel; counters restart.

    The old sessions are marked Failed so they cannot be used by accident.
    """
    sensor._require(State.ESTABLISHED)
    processor._require(State.ESTABLISHED)
    new_sensor = SessionState(Role.SENSOR, sensor.sensor_id, sign_frames=sensor.sign_frames)
    new_processor = SessionState(Role.PROCESSOR, sign_frames=processor.sign_frames)
    hello = handshake_hello(new_sensor, suite, credentials.sig_sk)
    tunnelled_hello = open_frame(processor, seal_frame(sensor, hello.to_bytes()).to_bytes())
    response, new_processor = handshake_respond(new_processor, suite, tunnelled_hello, registry)
    tunnelled_response = open_frame(sensor, seal_frame(processor, response.to_bytes()).to_bytes())
    handshake_finish(new_sensor, tunnelled_response, credentials.kem_sk)
    sensor.state = processor.state = State.FAILED
    return new_sensor, new_processor
