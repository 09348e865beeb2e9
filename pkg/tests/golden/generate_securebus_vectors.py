"""Regenerate securebus_vectors.json (run only when the wire format changes on purpose)."""
import json
from pathlib import Path

from qnav.securebus import (
    Role,
    SensorCredentials,
    SessionState,
    deterministic_suite,
    handshake_finish,
    handshake_hello,
    handshake_respond,
    seal_frame,
)

SENSOR_SEED = 2024
PROCESSOR_SEED = 7
SENSOR_ID = 0x0102
PLAINTEXTS = [b"", b"lidar:0.125,1.0,1.0", bytes(range(64))]
REPLY = b"\x02"
META = b"fw=1.4"


def build():
    sensor_suite = deterministic_suite(SENSOR_SEED)
    processor_suite = deterministic_suite(PROCESSOR_SEED)
    creds = SensorCredentials.generate(sensor_suite, SENSOR_ID)
    sensor = SessionState(Role.SENSOR, SENSOR_ID)
    processor = SessionState(Role.PROCESSOR)
    hello = handshake_hello(sensor, sensor_suite, creds.sig_sk, META)
    response, processor = handshake_respond(processor, processor_suite, hello.to_bytes(), {SENSOR_ID: creds.record()})
    handshake_finish(sensor, response.to_bytes(), creds.kem_sk)
    return {
        "sensor_seed": SENSOR_SEED,
        "processor_seed": PROCESSOR_SEED,
        "sensor_id": SENSOR_ID,
        "meta": META.hex(),
        "sig_sk": creds.sig_sk.hex(),
        "kem_sk": creds.kem_sk.hex(),
        "kem_public_key": creds.kem_public_key.hex(),
        "hello": hello.to_bytes().hex(),
        "kem_response": response.to_bytes().hex(),
        "session_key": sensor.session_key.hex(),
        "plaintexts": [p.hex() for p in PLAINTEXTS],
        "data_frames": [seal_frame(sensor, p).to_bytes().hex() for p in PLAINTEXTS],
        "reply": REPLY.hex(),
        "reply_frame": seal_frame(processor, REPLY).to_bytes().hex(),
    }


if __name__ == "__main__":
    path = Path(__file__).with_name("securebus_vectors.json")
    path.write_text(json.dumps(build(), indent=2) + "\n")
    print(f"wrote {path}")
