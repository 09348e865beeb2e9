"""Sensor key registry and per-sensor credentials.

Registry file (JSON)::

    {
      "1": {"verification_key": "<hex>", "kem_public_key": "<hex>", "suite_id": 1},
      ...
    }

Keys are decimal sensor ids. The registry is read-only after startup.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Mapping

from .suites import CryptoSuite


@dataclass(frozen=True)
class SensorRecord:
    sensor_id: int
    verification_key: bytes
    kem_public_key: bytes
    suite_id: int


@dataclass(frozen=True)
class SensorCredentials:
    """Everything one sensor holds: both key pairs."""

    sensor_id: int
    suite_id: int
    sig_sk: bytes
    verification_key: bytes
    kem_sk: bytes
    kem_public_key: bytes

    @classmethod
    def generate(cls, suite: CryptoSuite, sensor_id: int) -> "SensorCredentials":
        vk, sig_sk = suite.sig.keygen()
        kem_pk, kem_sk = suite.kem.keygen()
        return cls(sensor_id, suite.suite_id, sig_sk, vk, kem_sk, kem_pk)

    def record(self) -> SensorRecord:
        return SensorRecord(self.sensor_id, self.verification_key, self.kem_public_key, self.suite_id)


def registry_to_json(registry: Mapping[int, SensorRecord]) -> str:
    doc = {
        str(sid): {
            "verification_key": rec.verification_key.hex(),
            "kem_public_key": rec.kem_public_key.hex(),
            "suite_id": rec.suite_id,
        }
        for sid, rec in sorted(registry.items())
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def registry_from_json(text: str) -> Dict[int, SensorRecord]:
    doc = json.loads(text)
    if not isinstance(doc, dict):
        raise ValueError("registry must be a JSON object keyed by sensor id")
    out = {}
    for key, entry in doc.items():
        try:
            sid = int(key)
            if not 0 <= sid <= 0xFFFF:
                raise ValueError("sensor id must fit in u16")
            out[sid] = SensorRecord(sid, bytes.fromhex(entry["verification_key"]),
                                    bytes.fromhex(entry["kem_public_key"]), int(entry["suite_id"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"registry entry {key!r}: {exc}") from None
    return out


def save_registry(path, registry: Mapping[int, SensorRecord]) -> None:
    Path(path).write_text(registry_to_json(registry))


def load_registry(path) -> Dict[int, SensorRecord]:
    return registry_from_json(Path(path).read_text())
