"""Authenticated, encrypted sensor-to-processor message bus."""
from .errors import (
    HandshakeError,
    MalformedFrame,
    ReplayDetected,
    SecureBusError,
    SequenceExhausted,
    SignatureInvalid,
    TagMismatch,
    UnknownSensor,
    UnsupportedSuite,
    WrongState,
)
from .frame import HEADER_LEN, MsgType, SecureFrame, data_nonce, parse_frame
from .registry import SensorCredentials, SensorRecord, load_registry, save_registry
from .session import (
    Role,
    SessionState,
    State,
    connect,
    handshake_finish,
    handshake_hello,
    handshake_respond,
    open_frame,
    rotate_keys,
    seal_frame,
)
from .transport import recv_frame, recv_frame_bytes, send_frame
from .suites import CryptoSuite, deterministic_suite, get_suite, pqc_available, pqc_suite

__all__ = [
    "CryptoSuite", "HEADER_LEN", "HandshakeError", "MalformedFrame", "MsgType", "ReplayDetected", "Role",
    "SecureBusError", "SecureFrame", "SensorCredentials", "SensorRecord", "SequenceExhausted", "SessionState",
    "SignatureInvalid", "State", "TagMismatch", "UnknownSensor", "UnsupportedSuite", "WrongState", "connect",
    "data_nonce", "deterministic_suite", "get_suite", "handshake_finish", "handshake_hello", "handshake_respond",
    "load_registry", "open_frame", "parse_frame", "pqc_available", "pqc_suite", "recv_frame", "recv_frame_bytes", "rotate_keys",
    "save_registry", "seal_frame", "send_frame",
]
