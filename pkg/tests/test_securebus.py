import hashlib
import json
import socket
import struct
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qnav.securebus import (
    HEADER_LEN,
    MalformedFrame,
    MsgType,
    ReplayDetected,
    Role,
    SecureFrame,
    SensorCredentials,
    SequenceExhausted,
    SessionState,
    SignatureInvalid,
    State,
    TagMismatch,
    UnknownSensor,
    UnsupportedSuite,
    WrongState,
    connect,
    data_nonce,
    deterministic_suite,
    get_suite,
    handshake_finish,
    handshake_hello,
    handshake_respond,
    open_frame,
    parse_frame,
    pqc_available,
    recv_frame,
    rotate_keys,
    seal_frame,
    send_frame,
)
from qnav.securebus.frame import MAX_PAYLOAD, U64_MAX
from qnav.securebus.registry import registry_from_json, registry_to_json

GOLDEN = json.loads((Path(__file__).parent / "golden" / "securebus_vectors.json").read_text())


def pair(seed=0, sensor_id=9, sign_frames=False):
    suite = deterministic_suite(seed)
    creds = SensorCredentials.generate(suite, sensor_id)
    sensor, processor = connect(creds, {sensor_id: creds.record()}, suite, deterministic_suite(seed + 1),
                                sign_frames=sign_frames)
    return suite, creds, sensor, processor


def flip_bit(data: bytes, bit: int) -> bytes:
    out = bytearray(data)
    out[bit // 8] ^= 1 << (bit % 8)
    return bytes(out)


frames_strategy = st.builds(
    lambda kind, suite, sid, seq, nonce, payload: SecureFrame(
        kind, suite, sid, seq, nonce, payload, bytes(range(16)) if kind is MsgType.DATA else b""),
    st.sampled_from(list(MsgType)), st.integers(0, 255), st.integers(0, 0xFFFF), st.integers(0, U64_MAX),
    st.binary(min_size=12, max_size=12), st.binary(max_size=300),
)


class TestWireFormat:
    def test_hand_assembled_header(self):
        frame = SecureFrame(MsgType.DATA, 1, 0x0102, 0x0807060504030201, bytes(range(12)), b"\xaa\xbb", b"\x11" * 16)
        expected = (b"\x51\x41" + b"\x01" + b"\x02" + b"\x01" + b"\x02\x01"
                    + b"\x01\x02\x03\x04\x05\x06\x07\x08" + bytes(range(12)) + b"\x02\x00\x00\x00")
        assert len(expected) == HEADER_LEN == 31
        assert frame.to_bytes() == expected + b"\xaa\xbb" + b"\x11" * 16

    @given(frames_strategy)
    def test_round_trip(self, frame):
        wire = frame.to_bytes()
        assert parse_frame(wire).to_bytes() == wire
        assert len(frame) == len(wire)

    @pytest.mark.parametrize("data,field", [
        (b"", "header"),
        (b"QB" + bytes(29), "magic"),
        (b"QA\x02" + bytes(28), "version"),
        (b"QA\x01\x09" + bytes(27), "msg_type"),
        (b"QA\x01\x00" + bytes(23) + struct.pack("<I", MAX_PAYLOAD + 1), "payload_len"),
        (b"QA\x01\x00" + bytes(23) + struct.pack("<I", 5) + b"abc", "payload"),
        (b"QA\x01\x02" + bytes(23) + struct.pack("<I", 0) + bytes(15), "tag"),
        (b"QA\x01\x03" + bytes(27) + b"x", "length"),
        (None, "input"),
    ])
    def test_structured_errors(self, data, field):
        with pytest.raises(MalformedFrame) as info:
            parse_frame(data)
        assert info.value.field == field

    def test_random_fuzz(self):
        rng = np.random.default_rng(0)
        for _ in range(10_000):
            blob = rng.bytes(int(rng.integers(0, 1025)))
            try:
                parse_frame(blob)
            except MalformedFrame:
                pass

    def test_mutation_fuzz(self):
        rng = np.random.default_rng(1)
        base = bytes.fromhex(GOLDEN["data_frames"][1])
        for _ in range(5_000):
            blob = bytearray(base)
            for _ in range(int(rng.integers(1, 4))):
                blob[int(rng.integers(len(blob)))] = int(rng.integers(256))
            cut = int(rng.integers(0, len(blob) + 8))
            blob = bytes(blob[:cut]) + rng.bytes(max(0, cut - len(blob)))
            try:
                parse_frame(blob)
            except MalformedFrame:
                pass

    def test_data_nonce_layout(self):
        nonce = data_nonce(0x0102, 0x1122334455667788)
        assert nonce == b"\x02\x01\x00\x00" + bytes.fromhex("8877665544332211")


class TestGoldenVectors:
    def test_regenerated_bytes_match(self):
        from golden.generate_securebus_vectors import build

        assert build() == GOLDEN

    def test_session_key_follows_key_schedule(self):
        # recompute every derivation from the recorded bytes with hashlib alone
        hello = bytes.fromhex(GOLDEN["hello"])
        response = bytes.fromhex(GOLDEN["kem_response"])
        ciphertext = response[HEADER_LEN:]
        pk = bytes.fromhex(GOLDEN["kem_public_key"])
        shared = hashlib.sha256(b"qnav-test-kem-ss" + pk + ciphertext).digest()
        hello_nonce = hello[HEADER_LEN:HEADER_LEN + 32]
        transcript = hashlib.sha256(hello + ciphertext).digest()
        assert hashlib.sha256(shared + hello_nonce + transcript).hexdigest() == GOLDEN["session_key"]

    def test_data_frame_headers(self):
        sid = GOLDEN["sensor_id"]
        for seq, (hex_frame, hex_plain) in enumerate(zip(GOLDEN["data_frames"], GOLDEN["plaintexts"]), start=1):
            wire = bytes.fromhex(hex_frame)
            nonce = sid.to_bytes(4, "little") + seq.to_bytes(8, "little")
            header = (b"QA\x01\x02\x01" + sid.to_bytes(2, "little") + seq.to_bytes(8, "little") + nonce
                      + (len(hex_plain) // 2).to_bytes(4, "little"))
            assert wire[:HEADER_LEN] == header
            assert len(wire) == HEADER_LEN + len(hex_plain) // 2 + 16

    def test_recorded_frames_open(self):
        suite = deterministic_suite(0)
        processor = SessionState(Role.PROCESSOR, GOLDEN["sensor_id"], State.ESTABLISHED,
                                 bytes.fromhex(GOLDEN["session_key"]), suite=suite)
        for wire, plain in zip(GOLDEN["data_frames"], GOLDEN["plaintexts"]):
            assert open_frame(processor, bytes.fromhex(wire)).hex() == plain


class TestHandshake:
    def test_keys_agree(self):
        _, _, sensor, processor = pair()
        assert sensor.established and processor.established
        assert sensor.session_key == processor.session_key
        assert processor.sensor_id == 9

    def test_hello_signature_verifies(self):
        suite = deterministic_suite(3)
        creds = SensorCredentials.generate(suite, 4)
        hello = parse_frame(handshake_hello(SessionState(Role.SENSOR, 4), suite, creds.sig_sk).to_bytes())
        nonce = hello.payload[:32]
        (sig_len,) = struct.unpack_from("<H", hello.payload, 32)
        sig = hello.payload[34:34 + sig_len]
        signed = b"QA\x01" + (4).to_bytes(2, "little") + b"\x01" + nonce
        assert suite.sig.verify(creds.verification_key, signed, sig)

    def test_hello_twice(self):
        suite = deterministic_suite(0)
        creds = SensorCredentials.generate(suite, 1)
        sensor = SessionState(Role.SENSOR, 1)
        handshake_hello(sensor, suite, creds.sig_sk)
        with pytest.raises(WrongState):
            handshake_hello(sensor, suite, creds.sig_sk)

    def test_unsupported_suite(self):
        suite = deterministic_suite(0)
        creds = SensorCredentials.generate(suite, 1)
        hello = handshake_hello(SessionState(Role.SENSOR, 1), suite, creds.sig_sk)
        forged = SecureFrame(hello.msg_type, 77, hello.sensor_id, 0, hello.nonce, hello.payload)
        processor = SessionState(Role.PROCESSOR)
        with pytest.raises(UnsupportedSuite):
            handshake_respond(processor, suite, forged, {1: creds.record()})
        assert processor.state is State.FAILED
        with pytest.raises(UnsupportedSuite):
            get_suite(77)

    @pytest.mark.parametrize("offset", [34, 40, 65])
    def test_flipped_signature_byte(self, offset):
        suite = deterministic_suite(0)
        creds = SensorCredentials.generate(suite, 1)
        wire = bytearray(handshake_hello(SessionState(Role.SENSOR, 1), suite, creds.sig_sk).to_bytes())
        wire[HEADER_LEN + offset] ^= 0x01
        processor = SessionState(Role.PROCESSOR)
        with pytest.raises(SignatureInvalid):
            handshake_respond(processor, suite, bytes(wire), {1: creds.record()})
        assert processor.state is State.FAILED

    def test_forged_hello_without_key(self):
        suite = deterministic_suite(0)
        creds = SensorCredentials.generate(suite, 1)
        impostor = SensorCredentials.generate(suite, 1)
        hello = handshake_hello(SessionState(Role.SENSOR, 1), suite, impostor.sig_sk)
        with pytest.raises(SignatureInvalid):
            handshake_respond(SessionState(Role.PROCESSOR), suite, hello, {1: creds.record()})

    def test_unknown_sensor(self):
        suite = deterministic_suite(0)
        creds = SensorCredentials.generate(suite, 1)
        hello = handshake_hello(SessionState(Role.SENSOR, 2), suite, creds.sig_sk)
        with pytest.raises(UnknownSensor):
            handshake_respond(SessionState(Role.PROCESSOR), suite, hello, {1: creds.record()})

    def test_wrong_kem_key_breaks_channel(self):
        suite = deterministic_suite(0)
        creds = SensorCredentials.generate(suite, 1)
        sensor = SessionState(Role.SENSOR, 1)
        hello = handshake_hello(sensor, suite, creds.sig_sk)
        response, processor = handshake_respond(SessionState(Role.PROCESSOR), suite, hello, {1: creds.record()})
        handshake_finish(sensor, response, bytes(32))
        with pytest.raises(TagMismatch):
            open_frame(processor, seal_frame(sensor, b"hi"))

    def test_response_type_checked(self):
        suite = deterministic_suite(0)
        creds = SensorCredentials.generate(suite, 1)
        sensor = SessionState(Role.SENSOR, 1)
        hello = handshake_hello(sensor, suite, creds.sig_sk)
        with pytest.raises(MalformedFrame):
            handshake_finish(sensor, hello, creds.kem_sk)
        assert sensor.state is State.FAILED


class TestChannel:
    def test_round_trip_both_directions(self):
        _, _, sensor, processor = pair()
        assert open_frame(processor, seal_frame(sensor, b"frame").to_bytes()) == b"frame"
        assert open_frame(sensor, seal_frame(processor, b"ack").to_bytes()) == b"ack"

    def test_consecutive_sequences(self):
        _, _, sensor, _ = pair()
        a, b = seal_frame(sensor, b"x"), seal_frame(sensor, b"x")
        assert (a.sequence, b.sequence) == (1, 2)
        assert a.nonce != b.nonce and a.payload != b.payload

    def test_empty_plaintext(self):
        _, _, sensor, processor = pair()
        frame = seal_frame(sensor, b"")
        assert len(frame.payload) == 0 and len(frame.tag) == 16
        assert open_frame(processor, frame.to_bytes()) == b""
        with pytest.raises(TagMismatch):
            open_frame(processor, flip_bit(seal_frame(sensor, b"").to_bytes(), 8 * HEADER_LEN + 3))

    def test_many_frames(self):
        _, _, sensor, processor = pair()
        rng = np.random.default_rng(0)
        for _ in range(1 << 10):
            msg = rng.bytes(int(rng.integers(0, 200)))
            assert open_frame(processor, seal_frame(sensor, msg).to_bytes()) == msg

    def test_replay(self):
        _, _, sensor, processor = pair()
        wire = seal_frame(sensor, b"once").to_bytes()
        open_frame(processor, wire)
        with pytest.raises(ReplayDetected):
            open_frame(processor, wire)

    def test_out_of_order_rejected(self):
        _, _, sensor, processor = pair()
        first, second = seal_frame(sensor, b"1").to_bytes(), seal_frame(sensor, b"2").to_bytes()
        open_frame(processor, second)
        with pytest.raises(ReplayDetected):
            open_frame(processor, first)

    def test_every_bit_flip_detected(self):
        _, _, sensor, processor = pair()
        wire = seal_frame(sensor, b"payload bytes").to_bytes()
        for bit in range(8 * len(wire)):
            tampered = flip_bit(wire, bit)
            with pytest.raises((TagMismatch, MalformedFrame)):
                open_frame(processor, tampered)
        assert open_frame(processor, wire) == b"payload bytes"

    def test_sensor_id_is_bound(self):
        _, _, sensor, processor = pair()
        frame = seal_frame(sensor, b"data")
        moved = SecureFrame(frame.msg_type, frame.suite_id, frame.sensor_id ^ 1, frame.sequence, frame.nonce,
                            frame.payload, frame.tag)
        with pytest.raises(TagMismatch):
            open_frame(processor, moved.to_bytes())

    def test_reflection_rejected(self):
        _, _, sensor, _ = pair()
        with pytest.raises(TagMismatch):
            open_frame(sensor, seal_frame(sensor, b"echo"))

    def test_requires_established(self):
        with pytest.raises(WrongState):
            seal_frame(SessionState(Role.SENSOR, 1), b"x")

    def test_sequence_exhaustion(self):
        _, _, sensor, _ = pair()
        sensor.send_seq = U64_MAX + 1
        with pytest.raises(SequenceExhausted):
            seal_frame(sensor, b"x")

    def test_signed_frames(self):
        _, _, sensor, processor = pair(sign_frames=True)
        frame = seal_frame(sensor, b"signed")
        assert len(frame.payload) > len(b"signed") + 32
        assert open_frame(processor, frame.to_bytes()) == b"signed"

    def test_signed_frames_reject_wrong_key(self):
        _, _, sensor, processor = pair(sign_frames=True)
        processor.frame_sig_key = bytes(32)
        with pytest.raises(SignatureInvalid):
            open_frame(processor, seal_frame(sensor, b"signed"))


class TestRotation:
    def test_rotation_round_trip_and_key_separation(self):
        suite, creds, sensor, processor = pair()
        registry = {creds.sensor_id: creds.record()}
        stale = seal_frame(sensor, b"old key")
        new_sensor, new_processor = rotate_keys(sensor, processor, suite, credentials=creds, registry=registry)
        assert new_sensor.session_key == new_processor.session_key != sensor.session_key
        assert open_frame(new_processor, seal_frame(new_sensor, b"fresh")) == b"fresh"
        with pytest.raises(TagMismatch):
            open_frame(new_processor, stale)
        assert sensor.state is State.FAILED and processor.state is State.FAILED

    def test_rotation_of_failed_session(self):
        suite, creds, sensor, processor = pair()
        sensor.state = State.FAILED
        with pytest.raises(WrongState):
            rotate_keys(sensor, processor, suite, credentials=creds, registry={creds.sensor_id: creds.record()})


class TestRegistry:
    def test_json_round_trip(self):
        suite = deterministic_suite(0)
        records = {i: SensorCredentials.generate(suite, i).record() for i in (1, 5, 300)}
        assert registry_from_json(registry_to_json(records)) == records

    @pytest.mark.parametrize("text", ['[]', '{"x": {}}', '{"1": {"verification_key": "zz", "kem_public_key": "", '
                                                         '"suite_id": 1}}', '{"70000": {}}'])
    def test_rejects_malformed(self, text):
        with pytest.raises(ValueError):
            registry_from_json(text)


class TestTransport:
    def test_stream_framing(self):
        _, _, sensor, processor = pair()
        a, b = socket.socketpair()
        with a, b:
            frames = [seal_frame(sensor, bytes([i]) * i) for i in range(20)]
            for f in frames:
                send_frame(a, f)
            for i in range(20):
                assert open_frame(processor, recv_frame(b)) == bytes([i]) * i
            a.shutdown(socket.SHUT_WR)
            with pytest.raises(EOFError):
                recv_frame(b)

    def test_truncated_stream(self):
        _, _, sensor, _ = pair()
        a, b = socket.socketpair()
        with a, b:
            a.sendall(seal_frame(sensor, b"abcdef").to_bytes()[:-3])
            a.shutdown(socket.SHUT_WR)
            with pytest.raises(MalformedFrame):
                recv_frame(b)


@pytest.mark.skipif(not pqc_available(), reason="pqc extra not installed")
class TestPqcSuite:
    def test_handshake_and_channel(self):
        suite = get_suite(2)
        assert suite.nist_level == 3
        creds = SensorCredentials.generate(suite, 11)
        sensor, processor = connect(creds, {11: creds.record()}, suite)
        assert sensor.session_key == processor.session_key
        wire = seal_frame(sensor, b"post-quantum").to_bytes()
        with pytest.raises(TagMismatch):
            open_frame(processor, flip_bit(wire, 8 * HEADER_LEN + 1))
        assert open_frame(processor, wire) == b"post-quantum"

    def test_forged_hello(self):
        suite = get_suite(2)
        creds = SensorCredentials.generate(suite, 11)
        other = SensorCredentials.generate(suite, 11)
        hello = handshake_hello(SessionState(Role.SENSOR, 11), suite, other.sig_sk)
        with pytest.raises(SignatureInvalid):
            handshake_respond(SessionState(Role.PROCESSOR), suite, hello, {11: creds.record()})
