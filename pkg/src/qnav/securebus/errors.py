"""Secure-bus failures. Every rejection of untrusted bytes is one of these."""
from ..errors import QnavError


class SecureBusError(QnavError):
    pass


class MalformedFrame(SecureBusError, ValueError):
    """Bytes do not form a valid frame; ``field`` names the first bad field."""

    def __init__(self, field: str, message: str):
        super().__init__(f"malformed frame ({field}): {message}")
        self.field = field


class WrongState(SecureBusError):
    pass


class SignatureInvalid(SecureBusError):
    pass


class UnknownSensor(SecureBusError):
    pass


class UnsupportedSuite(SecureBusError):
    pass


class TagMismatch(SecureBusError):
    pass


class ReplayDetected(SecureBusError):
    pass


class SequenceExhausted(SecureBusError):
    pass


class HandshakeError(SecureBusError):
    """Key agreement failed for a reason other than authentication."""
