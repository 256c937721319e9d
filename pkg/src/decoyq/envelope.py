"""Sealed envelopes for bitmaps crossing the untrusted provider.

An envelope binds a key encapsulation to the recipient, an authenticated
encryption of the payload under the encapsulated secret, and a signature by
the sender over every other field.

Two suites are registered:

``TEST-NULLKEM``
    Hash-based stand-ins for every primitive. Deterministic under a seeded
    generator and useful for tests and reproducible experiments. It is NOT
    secure: anyone holding a public key can forge signatures.
``X25519-AESGCM-ED25519``
    Classical primitives from the ``cryptography`` package (optional extra).
    Post-quantum KEMs are not provided; this suite marks where one plugs in.
"""
from __future__ import annotations

import hashlib
import hmac
import secrets
import struct
from dataclasses import dataclass
from enum import Enum
from typing import Protocol

import numpy as np

from .errors import (AuthFailureError, EnvelopeError, MalformedEnvelopeError,
                     SignatureFailureError, UnknownSuiteError, WrongRecipientError)

TEST_SUITE = "TEST-NULLKEM"
CLASSICAL_SUITE = "X25519-AESGCM-ED25519"
NONCE_SIZE = 12
TAG_SIZE = 16
_U32 = struct.Struct("<I")


class Role(str, Enum):
    BACKEND = "BKND"
    USER = "USER"


def _random_bytes(rng, n: int) -> bytes:
    if rng is None:
        return secrets.token_bytes(n)
    if isinstance(rng, np.random.Generator):
        return rng.bytes(n)
    return rng(n)


@dataclass(frozen=True)
class KeyPair:
    public: bytes
    private: bytes
    role: Role
    suite: str

    def __repr__(self) -> str:
        return (f"KeyPair(role={self.role.name}, suite={self.suite!r}, "
                f"public={self.public[:8].hex()}..., private=<redacted>)")

    __str__ = __repr__

    def public_only(self) -> KeyPair:
        return KeyPair(self.public, b"", self.role, self.suite)


@dataclass(frozen=True)
class Envelope:
    suite_id: str
    kem_ciphertext: bytes
    nonce: bytes
    ciphertext: bytes
    auth_tag: bytes
    signature: bytes

    def signed_part(self) -> bytes:
        return _pack_fields([self.suite_id.encode("ascii"), self.kem_ciphertext,
                             self.nonce, self.ciphertext, self.auth_tag])


class CipherSuite(Protocol):
    suite_id: str

    def keygen(self, rng) -> tuple[bytes, bytes]: ...

    def encapsulate(self, public: bytes, rng) -> tuple[bytes, bytes]: ...

    def decapsulate(self, private: bytes, kem_ct: bytes) -> bytes: ...

    def encrypt(self, key: bytes, nonce: bytes, plaintext: bytes) -> tuple[bytes, bytes]: ...

    def decrypt(self, key: bytes, nonce: bytes, ciphertext: bytes, tag: bytes) -> bytes: ...

    def sign(self, private: bytes, message: bytes) -> bytes: ...

    def verify(self, public: bytes, message: bytes, signature: bytes) -> bool: ...


def _h(label: bytes, *parts: bytes) -> bytes:
    h = hashlib.sha256(label)
    for p in parts:
        h.update(_U32.pack(len(p)))
        h.update(p)
    return h.digest()


class NullKemSuite:
    """Hash-only suite. Non-secure; for tests and reproducible runs."""

    suite_id = TEST_SUITE

    @staticmethod
    def _public_of(private: bytes) -> bytes:
        return _h(b"nullkem/pk", private)

    def keygen(self, rng):
        private = _random_bytes(rng, 32)
        return self._public_of(private), private

    def encapsulate(self, public, rng):
        r = _random_bytes(rng, 32)
        confirm = _h(b"nullkem/confirm", public, r)[:TAG_SIZE]
        return r + confirm, _h(b"nullkem/ss", public, r)

    def decapsulate(self, private, kem_ct):
        if len(kem_ct) != 32 + TAG_SIZE:
            raise WrongRecipientError("decapsulation failed")
        public = self._public_of(private)
        r, confirm = kem_ct[:32], kem_ct[32:]
        if not hmac.compare_digest(confirm, _h(b"nullkem/confirm", public, r)[:TAG_SIZE]):
            raise WrongRecipientError("decapsulation failed")
        return _h(b"nullkem/ss", public, r)

    @staticmethod
    def _stream(key, nonce, n):
        return hashlib.shake_256(b"nullkem/stream" + key + nonce).digest(n)

    def encrypt(self, key, nonce, plaintext):
        ct = bytes(a ^ b for a, b in zip(plaintext, self._stream(key, nonce, len(plaintext))))
        tag = hmac.new(key, nonce + ct, hashlib.sha256).digest()[:TAG_SIZE]
        return ct, tag

    def decrypt(self, key, nonce, ciphertext, tag):
        expect = hmac.new(key, nonce + ciphertext, hashlib.sha256).digest()[:TAG_SIZE]
        if not hmac.compare_digest(tag, expect):
            raise AuthFailureError("authentication tag mismatch")
        return bytes(a ^ b for a, b in zip(ciphertext, self._stream(key, nonce, len(ciphertext))))

    def sign(self, private, message):
        return hmac.new(self._public_of(private), message, hashlib.sha256).digest()

    def verify(self, public, message, signature):
        return hmac.compare_digest(signature, hmac.new(public, message, hashlib.sha256).digest())


class ClassicalSuite:
    """X25519 key agreement with key confirmation, AES-256-GCM, Ed25519.

    Key bytes are the concatenation of the X25519 and Ed25519 raw keys.
    """

    suite_id = CLASSICAL_SUITE

    def __init__(self):
        try:
            from cryptography.hazmat.primitives.asymmetric import ed25519, x25519
            from cryptography.hazmat.primitives.ciphers.aead import AESGCM
        except ImportError as exc:  # pragma: no cover - depends on the environment
            raise UnknownSuiteError(f"{CLASSICAL_SUITE} needs the 'cryptography' package") from exc
        self._x, self._ed, self._aes = x25519, ed25519, AESGCM

    def _raw_public(self, key) -> bytes:
        from cryptography.hazmat.primitives import serialization
        return key.public_key().public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw)

    def keygen(self, rng):
        xs, es = _random_bytes(rng, 32), _random_bytes(rng, 32)
        xk = self._x.X25519PrivateKey.from_private_bytes(xs)
        ek = self._ed.Ed25519PrivateKey.from_private_bytes(es)
        return self._raw_public(xk) + self._raw_public(ek), xs + es

    def _derive(self, shared, eph_pub, recipient_pub):
        return _h(b"x25519/ss", shared, eph_pub, recipient_pub)

    def encapsulate(self, public, rng):
        if len(public) != 64:
            raise EnvelopeError("malformed public key")
        eph = self._x.X25519PrivateKey.from_private_bytes(_random_bytes(rng, 32))
        eph_pub = self._raw_public(eph)
        shared = eph.exchange(self._x.X25519PublicKey.from_public_bytes(public[:32]))
        ss = self._derive(shared, eph_pub, public[:32])
        return eph_pub + _h(b"x25519/confirm", ss)[:TAG_SIZE], ss

    def decapsulate(self, private, kem_ct):
        if len(kem_ct) != 32 + TAG_SIZE or len(private) != 64:
            raise WrongRecipientError("decapsulation failed")
        key = self._x.X25519PrivateKey.from_private_bytes(private[:32])
        eph_pub = kem_ct[:32]
        try:
            shared = key.exchange(self._x.X25519PublicKey.from_public_bytes(eph_pub))
        except ValueError as exc:
            raise WrongRecipientError("decapsulation failed") from exc
        ss = self._derive(shared, eph_pub, self._raw_public(key))
        if not hmac.compare_digest(kem_ct[32:], _h(b"x25519/confirm", ss)[:TAG_SIZE]):
            raise WrongRecipientError("decapsulation failed")
        return ss

    def encrypt(self, key, nonce, plaintext):
        out = self._aes(key).encrypt(nonce, plaintext, None)
        return out[:-TAG_SIZE], out[-TAG_SIZE:]

    def decrypt(self, key, nonce, ciphertext, tag):
        from cryptography.exceptions import InvalidTag
        try:
            return self._aes(key).decrypt(nonce, ciphertext + tag, None)
        except (InvalidTag, ValueError) as exc:
            raise AuthFailureError("authentication tag mismatch") from exc

    def sign(self, private, message):
        return self._ed.Ed25519PrivateKey.from_private_bytes(private[32:]).sign(message)

    def verify(self, public, message, signature):
        from cryptography.exceptions import InvalidSignature
        try:
            self._ed.Ed25519PublicKey.from_public_bytes(public[32:]).verify(signature, message)
            return True
        except (InvalidSignature, ValueError):
            return False


_SUITES = {TEST_SUITE: NullKemSuite, CLASSICAL_SUITE: ClassicalSuite}


def get_suite(suite_id: str) -> CipherSuite:
    try:
        factory = _SUITES[suite_id]
    except KeyError:
        raise UnknownSuiteError(f"unknown cipher suite {suite_id!r}") from None
    return factory()


def available_suites() -> list[str]:
    return sorted(_SUITES)


def keygen(suite: str, rng=None, role: Role | str = Role.USER) -> KeyPair:
    public, private = get_suite(suite).keygen(rng)
    return KeyPair(public, private, Role(role), suite)


def seal(plaintext: bytes, recipient: KeyPair, signer: KeyPair, rng=None) -> Envelope:
    """Encrypt ``plaintext`` to ``recipient`` and sign it with ``signer``'s private key."""
    if recipient.suite != signer.suite:
        raise EnvelopeError("recipient and signer keys use different suites")
    if not signer.private:
        raise EnvelopeError("signer key has no private part")
    suite = get_suite(recipient.suite)
    kem_ct, key = suite.encapsulate(recipient.public, rng)
    nonce = _random_bytes(rng, NONCE_SIZE)
    ct, tag = suite.encrypt(key, nonce, bytes(plaintext))
    env = Envelope(recipient.suite, kem_ct, nonce, ct, tag, b"")
    return Envelope(env.suite_id, kem_ct, nonce, ct, tag, suite.sign(signer.private, env.signed_part()))


def open_envelope(env: Envelope, recipient: KeyPair, signer: KeyPair) -> bytes:
    """Return the plaintext, or raise if decapsulation, the tag or the signature fails."""
    suite = get_suite(env.suite_id)
    if recipient.suite != env.suite_id or signer.suite != env.suite_id:
        raise WrongRecipientError("key suite does not match envelope")
    if not recipient.private:
        raise WrongRecipientError("recipient key has no private part")
    key = suite.decapsulate(recipient.private, env.kem_ciphertext)
    if len(env.nonce) != NONCE_SIZE:
        raise AuthFailureError("bad nonce length")
    plaintext = suite.decrypt(key, env.nonce, env.ciphertext, env.auth_tag)
    if not suite.verify(signer.public, env.signed_part(), env.signature):
        raise SignatureFailureError("signature does not verify")
    return plaintext


# Binary formats: u32 little-endian length before every field.

def _pack_fields(fields) -> bytes:
    return b"".join(_U32.pack(len(f)) + f for f in fields)


def _unpack_fields(data: bytes, count: int, what: str) -> list[bytes]:
    out, pos = [], 0
    for _ in range(count):
        if pos + 4 > len(data):
            raise MalformedEnvelopeError(f"truncated {what}")
        (n,) = _U32.unpack_from(data, pos)
        pos += 4
        if pos + n > len(data):
            raise MalformedEnvelopeError(f"truncated {what}")
        out.append(data[pos:pos + n])
        pos += n
    if pos != len(data):
        raise MalformedEnvelopeError(f"trailing bytes after {what}")
    return out


def serialize_envelope(env: Envelope) -> bytes:
    return _pack_fields([env.suite_id.encode("ascii"), env.kem_ciphertext, env.nonce,
                         env.ciphertext, env.auth_tag, env.signature])


def deserialize_envelope(data: bytes) -> Envelope:
    suite, kem_ct, nonce, ct, tag, sig = _unpack_fields(bytes(data), 6, "envelope")
    try:
        suite_id = suite.decode("ascii")
    except UnicodeDecodeError:
        raise MalformedEnvelopeError("suite id is not ASCII") from None
    return Envelope(suite_id, kem_ct, nonce, ct, tag, sig)


def serialize_key(key: KeyPair, include_private: bool = True) -> bytes:
    private = key.private if include_private else b""
    return key.role.value.encode("ascii") + _pack_fields([key.suite.encode("ascii"), key.public, private])


def deserialize_key(data: bytes) -> KeyPair:
    data = bytes(data)
    try:
        role = Role(data[:4].decode("ascii"))
    except (UnicodeDecodeError, ValueError):
        raise MalformedEnvelopeError("bad key role tag") from None
    suite, public, private = _unpack_fields(data[4:], 3, "key file")
    suite_id = suite.decode("ascii", errors="replace")
    get_suite(suite_id)
    return KeyPair(public, private, role, suite_id)
