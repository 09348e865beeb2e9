"""Pluggable crypto suites: KEM, signature and AEAD behind one record.

Suite 1 (``TEST``) is deterministic and NOT secure. It stands in keyed
hashing for every primitive so the protocol logic can be tested bit-exactly
from a seed:

* signature: HMAC-SHA256 under the signing key; the "verification key" is the
  same secret, so the registry must be kept private under this suite;
* KEM: ciphertext is 32 random bytes ``r``, shared secret ``SHA256(pk || r)``;
  anyone holding ``pk`` can recompute it;
* AEAD: SHA-256 counter keystream plus a truncated HMAC-SHA256 tag.

Suite 2 (``PQC``) uses ML-KEM-768, ML-DSA-65 and AES-256-GCM and needs the
optional ``pqc`` extra (``kyber-py``, ``dilithium-py``, ``cryptography``).
"""
from __future__ import annotations

import hashlib
import hmac
import os
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Protocol, Tuple

from .errors import HandshakeError, TagMismatch, UnsupportedSuite

KEY_LEN = 32
NONCE_LEN = 12
TAG_LEN = 16

TEST_SUITE_ID = 1
PQC_SUITE_ID = 2


class Kem(Protocol):
    def keygen(self) -> Tuple[bytes, bytes]: ...
    def encapsulate(self, pk: bytes) -> Tuple[bytes, bytes]: ...
    def decapsulate(self, sk: bytes, ciphertext: bytes) -> bytes: ...


class Signature(Protocol):
    def keygen(self) -> Tuple[bytes, bytes]: ...
    def sign(self, sk: bytes, msg: bytes) -> bytes: ...
    def verify(self, vk: bytes, msg: bytes, signature: bytes) -> bool: ...


class Aead(Protocol):
    def seal(self, key: bytes, nonce: bytes, aad: bytes, plaintext: bytes) -> bytes: ...
    def open(self, key: bytes, nonce: bytes, aad: bytes, sealed: bytes) -> bytes: ...


@dataclass(frozen=True)
class CryptoSuite:
    suite_id: int
    name: str
    kem: Kem
    sig: Signature
    aead: Aead
    random_bytes: Callable[[int], bytes]
    nist_level: int = 0


class HashDrbg:
    """SHA-256 counter-mode byte stream; reproducible from its seed."""

    def __init__(self, seed: int | bytes):
        if isinstance(seed, int):
            seed = seed.to_bytes(16, "little", signed=True)
        self._key = hashlib.sha256(b"qnav-drbg" + seed).digest()
        self._counter = 0

    def __call__(self, n: int) -> bytes:
        out = bytearray()
        while len(out) < n:
            out += hashlib.sha256(self._key + self._counter.to_bytes(8, "little")).digest()
            self._counter += 1
        return bytes(out[:n])


def _check_len(name: str, value: bytes, n: int) -> None:
    if len(value) != n:
        raise ValueError(f"{name} must be {n} bytes, got {len(value)}")


class HashKem:
    def __init__(self, rand: Callable[[int], bytes]):
        self._rand = rand

    @staticmethod
    def public_key(sk: bytes) -> bytes:
        return hashlib.sha256(b"qnav-test-kem-pk" + sk).digest()

    def keygen(self):
        sk = self._rand(32)
        return self.public_key(sk), sk

    def encapsulate(self, pk):
        _check_len("KEM public key", pk, 32)
        r = self._rand(32)
        return r, hashlib.sha256(b"qnav-test-kem-ss" + pk + r).digest()

    def decapsulate(self, sk, ciphertext):
        if len(sk) != 32 or len(ciphertext) != 32:
            raise HandshakeError("test KEM expects 32-byte key and ciphertext")
        return hashlib.sha256(b"qnav-test-kem-ss" + self.public_key(sk) + ciphertext).digest()


class HmacSignature:
    def __init__(self, rand: Callable[[int], bytes]):
        self._rand = rand

    def keygen(self):
        sk = self._rand(32)
        return sk, sk

    def sign(self, sk, msg):
        return hmac.new(sk, msg, hashlib.sha256).digest()

    def verify(self, vk, msg, signature):
        return hmac.compare_digest(hmac.new(vk, msg, hashlib.sha256).digest(), bytes(signature))


class HashAead:
    @staticmethod
    def _keystream(key: bytes, nonce: bytes, n: int) -> bytes:
        out = bytearray()
        block = 0
        while len(out) < n:
            out += hashlib.sha256(b"qnav-test-aead" + key + nonce + block.to_bytes(4, "little")).digest()
            block += 1
        return bytes(out[:n])

    @staticmethod
    def _tag(key: bytes, nonce: bytes, aad: bytes, ct: bytes) -> bytes:
        mac = hmac.new(key, nonce + len(aad).to_bytes(8, "little") + aad + ct, hashlib.sha256)
        return mac.digest()[:TAG_LEN]

    def seal(self, key, nonce, aad, plaintext):
        _check_len("AEAD key", key, KEY_LEN)
        _check_len("AEAD nonce", nonce, NONCE_LEN)
        ct = bytes(a ^ b for a, b in zip(plaintext, self._keystream(key, nonce, len(plaintext))))
        return ct + self._tag(key, nonce, aad, ct)

    def open(self, key, nonce, aad, sealed):
        _check_len("AEAD key", key, KEY_LEN)
        _check_len("AEAD nonce", nonce, NONCE_LEN)
        if len(sealed) < TAG_LEN:
            raise TagMismatch("sealed message shorter than its tag")
        ct, tag = sealed[:-TAG_LEN], sealed[-TAG_LEN:]
        if not hmac.compare_digest(self._tag(key, nonce, aad, ct), tag):
            raise TagMismatch("authentication tag does not match")
        return bytes(a ^ b for a, b in zip(ct, self._keystream(key, nonce, len(ct))))


def deterministic_suite(seed: int | bytes = 0) -> CryptoSuite:
    rand = HashDrbg(seed)
    return CryptoSuite(TEST_SUITE_ID, "TEST-HMAC-SHA256", HashKem(rand), HmacSignature(rand), HashAead(), rand, 0)


class _MlKem:
    def __init__(self):
        from kyber_py.ml_kem import ML_KEM_768

        self._impl = ML_KEM_768

    def keygen(self):
        ek, dk = self._impl.keygen()
        return ek, dk

    def encapsulate(self, pk):
        try:
            shared, ct = self._impl.encaps(pk)
        except ValueError as exc:
            raise HandshakeError(f"ML-KEM encapsulation failed: {exc}") from None
        return ct, shared

    def decapsulate(self, sk, ciphertext):
        try:
            return self._impl.decaps(sk, ciphertext)
        except ValueError as exc:
            raise HandshakeError(f"ML-KEM decapsulation failed: {exc}") from None


class _MlDsa:
    def __init__(self):
        from dilithium_py.ml_dsa import ML_DSA_65

        self._impl = ML_DSA_65

    def keygen(self):
        return self._impl.keygen()

    def sign(self, sk, msg):
        return self._impl.sign(sk, msg)

    def verify(self, vk, msg, signature):
        try:
            return bool(self._impl.verify(vk, msg, signature))
        except (ValueError, IndexError):
            return False


class _AesGcm:
    def __init__(self):
        from cryptography.exceptions import InvalidTag
        from cryptography.hazmat.primitives.ciphers.aead import AESGCM

        self._cls, self._invalid = AESGCM, InvalidTag

    def seal(self, key, nonce, aad, plaintext):
        _check_len("AEAD key", key, KEY_LEN)
        return self._cls(key).encrypt(nonce, plaintext, aad)

    def open(self, key, nonce, aad, sealed):
        _check_len("AEAD key", key, KEY_LEN)
        try:
            return self._cls(key).decrypt(nonce, sealed, aad)
        except self._invalid:
            raise TagMismatch("authentication tag does not match") from None


def pqc_suite() -> CryptoSuite:
    try:
        return CryptoSuite(PQC_SUITE_ID, "ML-KEM-768+ML-DSA-65+AES-256-GCM", _MlKem(), _MlDsa(), _AesGcm(),
                           os.urandom, 3)
    except ImportError as exc:
        raise UnsupportedSuite(f"PQC suite needs the 'pqc' extra: {exc}") from None


def pqc_available() -> bool:
    try:
        pqc_suite()
    except UnsupportedSuite:
        return False
    return True


SUITE_FACTORIES: Dict[int, Callable[..., CryptoSuite]] = {
    TEST_SUITE_ID: deterministic_suite,
    PQC_SUITE_ID: lambda seed=None: pqc_suite(),
}


def get_suite(suite_id: int, seed: Optional[int] = 0) -> CryptoSuite:
    try:
        factory = SUITE_FACTORIES[suite_id]
    except KeyError:
        raise UnsupportedSuite(f"unknown suite id {suite_id}") from None
    return factory(seed)
