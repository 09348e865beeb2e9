"""Frame delimiting over a byte-stream socket.

A stream carries frames back to back; the reader takes the fixed header,
then reads exactly the payload (and tag) length it announces.
"""
from __future__ import annotations

import socket

from .errors import MalformedFrame
from .frame import HEADER_LEN, SecureFrame, frame_length, parse_frame


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            if buf:
                raise MalformedFrame("input", f"stream closed after {len(buf)} of {n} bytes")
            raise EOFError("stream closed")
        buf += chunk
    return bytes(buf)


def send_frame(sock: socket.socket, frame: SecureFrame | bytes) -> None:
    sock.sendall(frame.to_bytes() if isinstance(frame, SecureFrame) else bytes(frame))


def recv_frame_bytes(sock: socket.socket) -> bytes:
    """Read one whole frame's bytes; raises EOFError on a clean end of stream."""
    header = _recv_exact(sock, HEADER_LEN)
    rest = frame_length(header) - HEADER_LEN
    return header + (_recv_exact(sock, rest) if rest else b"")


def recv_frame(sock: socket.socket) -> SecureFrame:
    return parse_frame(recv_frame_bytes(sock))
