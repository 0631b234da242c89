"""Classical crypto primitives: seeded RNG streams, a keyed-hash PRF, and
hybrid authenticated public-key encryption.

The PRF is keyed BLAKE2b with 32-byte output; integer indices are encoded
as 8 big-endian bytes before hashing, so test vectors are stable across
platforms.  Public-key sealing is X25519 ephemeral-static key agreement
feeding ChaCha20-Poly1305; ciphertext integrity stands in for
non-malleability of the sealed payload.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305

from .errors import IntegrityFailure

KEY_BYTES = 32
NONCE_BYTES = 12
SEALED_VERSION = 1


class Rng:
    """Deterministic random stream with hierarchical child derivation.

    Backed by a Philox counter generator keyed from 32 seed bytes; children
    are derived by keyed hashing so experiment trials get independent,
    reproducible streams.  Byte and float draws are buffered: the protocol
    layers consume many tiny draws and per-call generator overhead would
    otherwise dominate whole experiments.
    """

    __slots__ = ("_seed", "np", "_buf", "_pos", "_fbuf", "_fpos")

    _BUF = 8192
    _FBUF = 2048

    def __init__(self, seed: bytes | int):
        if isinstance(seed, int):
            seed = seed.to_bytes(KEY_BYTES, "big", signed=False)
        if len(seed) != KEY_BYTES:
            seed = hashlib.blake2b(seed, digest_size=KEY_BYTES).digest()
        self._seed = seed
        key = int.from_bytes(seed[:16], "big")
        self.np = np.random.Generator(np.random.Philox(key=key))
        self._buf = b""
        self._pos = 0
        self._fbuf = None
        self._fpos = 0

    def child(self, label: str | int) -> "Rng":
        if isinstance(label, int):
            label = str(label)
        seed = hashlib.blake2b(label.encode(), key=self._seed, digest_size=KEY_BYTES).digest()
        return Rng(seed)

    def bytes(self, n: int) -> bytes:
        if n > self._BUF:
            return self.np.bytes(n)
        if self._pos + n > len(self._buf):
            self._buf = self.np.bytes(self._BUF)
            self._pos = 0
        out = self._buf[self._pos:self._pos + n]
        self._pos += n
        return out

    def bits(self, k: int) -> int:
        """Uniform k-bit integer."""
        if k <= 0:
            return 0
        return int.from_bytes(self.bytes((k + 7) // 8), "little") & ((1 << k) - 1)

    def integer(self, upper: int) -> int:
        """Uniform integer in [0, upper)."""
        if upper <= 0:
            raise ValueError("upper must be positive")
        span = upper.bit_length()
        while True:
            v = self.bits(span)
            if v < upper:
                return v

    def random(self) -> float:
        if self._fbuf is None or self._fpos >= self._FBUF:
            self._fbuf = self.np.random(self._FBUF)
            self._fpos = 0
        v = self._fbuf[self._fpos]
        self._fpos += 1
        return float(v)

    def choice_weighted(self, weights) -> int:
        """Index drawn according to ``weights`` (need not be normalized)."""
        total = float(sum(weights))
        u = self.random() * total
        acc = 0.0
        for i, w in enumerate(weights):
            acc += w
            if u < acc:
                return i
        return len(weights) - 1


class SeedStream:
    """Cheap deterministic byte stream for key derivation.

    Counter-mode keyed BLAKE2b; orders of magnitude cheaper to set up
    than a full generator, which matters because chain wrappers re-derive
    whole key bundles inside every oracle call.
    """

    __slots__ = ("_key", "_counter", "_buf", "_pos")

    def __init__(self, seed: bytes):
        self._key = seed if len(seed) == KEY_BYTES else hashlib.blake2b(
            seed, digest_size=KEY_BYTES).digest()
        self._counter = 0
        self._buf = b""
        self._pos = 0

    def bytes(self, n: int) -> bytes:
        while len(self._buf) - self._pos < n:
            block = hashlib.blake2b(struct.pack("<Q", self._counter), key=self._key,
                                    digest_size=64).digest()
            self._buf = self._buf[self._pos:] + block
            self._pos = 0
            self._counter += 1
        out = self._buf[self._pos:self._pos + n]
        self._pos += n
        return out

    def bits(self, k: int) -> int:
        if k <= 0:
            return 0
        return int.from_bytes(self.bytes((k + 7) // 8), "little") & ((1 << k) - 1)


def prf(key: bytes, index: int | bytes) -> bytes:
    """32-byte keyed-BLAKE2b PRF; integer indices as 8-byte big-endian."""
    if isinstance(index, int):
        index = index.to_bytes(8, "big")
    return hashlib.blake2b(index, key=key, digest_size=KEY_BYTES).digest()


def expand(key: bytes, label: bytes, n: int) -> bytes:
    """Arbitrary-length keyed stream in counter mode over BLAKE2b."""
    out = bytearray()
    counter = 0
    while len(out) < n:
        out += hashlib.blake2b(label + struct.pack("<Q", counter), key=key, digest_size=64).digest()
        counter += 1
    return bytes(out[:n])


def xor_bytes(a: bytes, b: bytes) -> bytes:
    if len(a) != len(b):
        raise ValueError("length mismatch")
    n = len(a)
    return (int.from_bytes(a, "little") ^ int.from_bytes(b, "little")).to_bytes(n, "little")


def aead_seal(key: bytes, nonce: bytes, plaintext: bytes, ad: bytes = b"") -> bytes:
    return ChaCha20Poly1305(key).encrypt(nonce, plaintext, ad)


def aead_open(key: bytes, nonce: bytes, ciphertext: bytes, ad: bytes = b"") -> bytes:
    try:
        return ChaCha20Poly1305(key).decrypt(nonce, ciphertext, ad)
    except InvalidTag as exc:
        raise IntegrityFailure("authenticated decryption failed") from exc


@dataclass(frozen=True)
class MasterKeypair:
    """Oracle-side decryption secret plus its public encryption key."""

    msk: bytes
    mpk: bytes


@dataclass(frozen=True)
class SealedPayload:
    """Authenticated public-key ciphertext; wire form is canonical."""

    ciphertext: bytes

    def encode(self) -> bytes:
        return self.ciphertext

    @classmethod
    def decode(cls, b: bytes) -> "SealedPayload":
        if len(b) < 1 + 2 + 32 + NONCE_BYTES + 16 or b[0] != SEALED_VERSION:
            raise IntegrityFailure("sealed payload malformed")
        return cls(bytes(b))


def pk_gen(rng: Rng) -> MasterKeypair:
    """Fresh keypair; msk is the raw X25519 private scalar."""
    msk = rng.bytes(KEY_BYTES)
    mpk = X25519PrivateKey.from_private_bytes(msk).public_key().public_bytes_raw()
    return MasterKeypair(msk=msk, mpk=mpk)


def _kem_key(shared: bytes, eph_pub: bytes, mpk: bytes) -> bytes:
    return hashlib.blake2b(eph_pub + mpk, key=shared, digest_size=KEY_BYTES).digest()


@lru_cache(maxsize=256)
def _private_key(msk: bytes) -> X25519PrivateKey:
    return X25519PrivateKey.from_private_bytes(msk)


@lru_cache(maxsize=256)
def _public_key(mpk: bytes) -> X25519PublicKey:
    return X25519PublicKey.from_public_bytes(mpk)


def pk_encrypt(mpk: bytes, plaintext: bytes, rng: Rng) -> SealedPayload:
    """Hybrid seal: fresh X25519 share, ChaCha20-Poly1305 payload."""
    if not plaintext:
        raise ValueError("plaintext must be non-empty")
    eph = X25519PrivateKey.from_private_bytes(rng.bytes(KEY_BYTES))
    eph_pub = eph.public_key().public_bytes_raw()
    shared = eph.exchange(_public_key(mpk))
    nonce = rng.bytes(NONCE_BYTES)
    body = aead_seal(_kem_key(shared, eph_pub, mpk), nonce, plaintext)
    wire = struct.pack(">BH", SEALED_VERSION, len(eph_pub)) + eph_pub + nonce + body
    return SealedPayload(wire)


def pk_decrypt(msk: bytes, sealed: SealedPayload) -> bytes:
    b = sealed.ciphertext
    try:
        version, klen = struct.unpack_from(">BH", b, 0)
        if version != SEALED_VERSION:
            raise IntegrityFailure("unknown sealed payload version")
        off = 3
        eph_pub = b[off:off + klen]
        off += klen
        nonce = b[off:off + NONCE_BYTES]
        body = b[off + NONCE_BYTES:]
        if len(eph_pub) != klen or len(nonce) != NONCE_BYTES or not body:
            raise IntegrityFailure("sealed payload truncated")
        priv = _private_key(msk)
        shared = priv.exchange(X25519PublicKey.from_public_bytes(eph_pub))
        mpk = priv.public_key().public_bytes_raw()
        return aead_open(_kem_key(shared, eph_pub, mpk), nonce, body)
    except IntegrityFailure:
        raise
    except Exception as exc:  # malformed point, short buffer, ...
        raise IntegrityFailure("sealed payload malformed") from exc
