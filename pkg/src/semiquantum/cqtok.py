"""Semi-quantum tokenized signatures in receiver-first single-round form.

A classical sender owns a hidden subspace and a pad key.  The public key
carries the pad-masked subspace; the receiver's side of the single round
produces a consumable hardware token plus a sealed tag holding the
receiver's offset pair, and the sender's reply is an evaluation key made
of three transparent coset checkers.  Signing bit 0 measures the token in
the computational basis (landing in S + x), bit 1 in the dual basis
(landing in the orthogonal coset), and verification is plain affine
membership.

Two stand-ins are deliberate and symbolic rather than cryptographic: the
pad channel replaces homomorphic encryption (it reproduces the
information flow only), and the transparent checkers replace obfuscated
membership programs.  Adversaries in the test suite interact with tokens
exclusively through this module's API, which is the surface the security
arguments actually use.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache

from . import gf2
from .crypt import (
    KEY_BYTES,
    NONCE_BYTES,
    Rng,
    SeedStream,
    aead_open,
    aead_seal,
    expand,
    prf,
    xor_bytes,
)
from .errors import IntegrityFailure, MalformedPk, TagDecodeFailure, XInSubspaceAbort

TOKEN_VERSION = 1

# Fixed key for the pad-sealing stream: models a channel only the simulated
# hardware can invert; explicitly NOT a secrecy mechanism.
_HW_CHANNEL_KEY = bytes.fromhex(
    "b7d0a1f5c2e84903764d5b8a19f0e3c6d4a25e7b9c013f8642da6f10b5c7e924")


@dataclass(frozen=True)
class TokenSecretKey:
    rows: tuple[int, ...]
    lam: int
    pad_key: bytes

    @classmethod
    def generate(cls, rng, lam: int) -> "TokenSecretKey":
        if lam < 4 or lam % 2:
            raise ValueError("lam must be even and >= 4")
        rows = gf2.sample_subspace(rng, lam, lam // 2)
        return cls(rows=rows, lam=lam, pad_key=rng.bytes(KEY_BYTES))

    @classmethod
    @lru_cache(maxsize=16384)
    def from_seed(cls, seed: bytes, lam: int) -> "TokenSecretKey":
        # cached: chain rounds re-derive the same bundles on both sides
        return cls.generate(SeedStream(seed), lam)


@dataclass(frozen=True)
class TokenPublicKey:
    lam: int
    enc_subspace: bytes
    enc_pad: bytes

    def encode(self) -> bytes:
        return (struct.pack("<BH", TOKEN_VERSION, self.lam)
                + struct.pack("<H", len(self.enc_subspace)) + self.enc_subspace
                + struct.pack("<H", len(self.enc_pad)) + self.enc_pad)

    @classmethod
    def decode(cls, b: bytes) -> "TokenPublicKey":
        try:
            version, lam = struct.unpack_from("<BH", b, 0)
            if version != TOKEN_VERSION:
                raise MalformedPk("unknown token pk version")
            (slen,) = struct.unpack_from("<H", b, 3)
            sub = bytes(b[5:5 + slen])
            (plen,) = struct.unpack_from("<H", b, 5 + slen)
            pad = bytes(b[7 + slen:7 + slen + plen])
            if len(sub) != slen or len(pad) != plen or len(b) != 7 + slen + plen:
                raise MalformedPk("token pk truncated")
            return cls(lam=lam, enc_subspace=sub, enc_pad=pad)
        except struct.error as exc:
            raise MalformedPk("token pk truncated") from exc


@dataclass(frozen=True)
class TokenTag:
    lam: int
    blob: bytes  # nonce || AEAD(x || z)

    def encode(self) -> bytes:
        return struct.pack("<BHH", TOKEN_VERSION, self.lam, len(self.blob)) + self.blob

    @classmethod
    def decode(cls, b: bytes) -> "TokenTag":
        try:
            version, lam, blen = struct.unpack_from("<BHH", b, 0)
        except struct.error as exc:
            raise TagDecodeFailure("tag truncated") from exc
        if version != TOKEN_VERSION or len(b) != 5 + blen:
            raise TagDecodeFailure("tag malformed")
        return cls(lam=lam, blob=bytes(b[5:]))


@dataclass(frozen=True)
class CosetChecker:
    """Transparent membership test for ``offset + rowspan(rows)``."""

    rows: tuple[int, ...]
    offset: int
    lam: int

    def accepts(self, v: int) -> bool:
        return gf2.member(self.rows, v ^ self.offset)

    def accepts_batch(self, v):
        return gf2.batch_member(self.rows, self.offset, v)

    def encode(self) -> bytes:
        return (struct.pack("<HH", self.lam, len(self.rows))
                + gf2.pack_matrix(self.rows, self.lam)
                + gf2.pack_vector(self.offset, self.lam))

    @classmethod
    def decode(cls, b: bytes, off: int = 0) -> tuple["CosetChecker", int]:
        lam, nrows = struct.unpack_from("<HH", b, off)
        off += 4
        step = (lam + 7) // 8
        rows = gf2.unpack_matrix(bytes(b[off:off + nrows * step]), nrows, lam)
        off += nrows * step
        offset = gf2.unpack_vector(bytes(b[off:off + step]), lam)
        return cls(rows=rows, offset=offset, lam=lam), off + step


@dataclass(frozen=True)
class EvalKey:
    """Verification material for one token: bit 0 is accepted by either
    half-coset checker, bit 1 by the dual-coset checker."""

    checker_a: CosetChecker
    checker_b: CosetChecker
    checker_perp: CosetChecker
    lam: int

    def encode(self) -> bytes:
        parts = [c.encode() for c in (self.checker_a, self.checker_b, self.checker_perp)]
        return struct.pack("<BH", TOKEN_VERSION, self.lam) + b"".join(parts)

    @classmethod
    def decode(cls, b: bytes) -> "EvalKey":
        version, lam = struct.unpack_from("<BH", b, 0)
        if version != TOKEN_VERSION:
            raise ValueError("unknown eval key version")
        off = 3
        a, off = CosetChecker.decode(b, off)
        bb, off = CosetChecker.decode(b, off)
        p, off = CosetChecker.decode(b, off)
        if off != len(b):
            raise ValueError("trailing bytes in eval key")
        return cls(checker_a=a, checker_b=bb, checker_perp=p, lam=lam)


def _pad_seal_key(enc_subspace: bytes) -> bytes:
    return expand(_HW_CHANNEL_KEY, b"pad-seal/" + enc_subspace, KEY_BYTES)


def _tag_key(pad_key: bytes) -> bytes:
    return prf(pad_key, b"tag-key")


def tok_setup(sk: TokenSecretKey) -> TokenPublicKey:
    """Deterministic public key: pad-masked subspace plus sealed pad."""
    matrix = gf2.pack_matrix(sk.rows, sk.lam)
    enc_subspace = xor_bytes(matrix, expand(sk.pad_key, b"subspace-pad", len(matrix)))
    enc_pad = xor_bytes(sk.pad_key, _pad_seal_key(enc_subspace))
    return TokenPublicKey(lam=sk.lam, enc_subspace=enc_subspace, enc_pad=enc_pad)


def tok_rec(pk: TokenPublicKey, hardware, rng: Rng) -> tuple[object, TokenTag]:
    """Receiver's half of the single round.

    Plays the honest state-preparation role: recovers the subspace inside
    the hardware boundary, draws fresh offsets, registers the consumable
    state, and seals the offsets into the tag only the sender can open.
    The caller sees nothing but the handle and the tag.
    """
    lam = pk.lam
    if lam < 4 or lam % 2:
        raise MalformedPk("invalid lambda")
    step = (lam + 7) // 8
    if len(pk.enc_pad) != KEY_BYTES or len(pk.enc_subspace) != (lam // 2) * step:
        raise MalformedPk("bad public key geometry")
    pad_key = xor_bytes(pk.enc_pad, _pad_seal_key(pk.enc_subspace))
    matrix = xor_bytes(pk.enc_subspace, expand(pad_key, b"subspace-pad", len(pk.enc_subspace)))
    rows = gf2.unpack_matrix(matrix, lam // 2, lam)
    if not gf2.is_rref(rows, lam) or len(rows) != lam // 2:
        raise MalformedPk("public key does not unpad to a canonical subspace")
    x = rng.bits(lam)
    z = rng.bits(lam)
    handle = hardware.register_token(rows, x, z, lam)
    nonce = rng.bytes(NONCE_BYTES)
    plain = gf2.pack_vector(x, lam) + gf2.pack_vector(z, lam)
    blob = nonce + aead_seal(_tag_key(pad_key), nonce, plain)
    return handle, TokenTag(lam=lam, blob=blob)


def open_tag(sk: TokenSecretKey, tag: TokenTag) -> tuple[int, int]:
    """Sender-side tag opening; raises TagDecodeFailure on any tamper."""
    if tag.lam != sk.lam or len(tag.blob) < NONCE_BYTES + 16:
        raise TagDecodeFailure("tag geometry mismatch")
    try:
        plain = aead_open(_tag_key(sk.pad_key), tag.blob[:NONCE_BYTES], tag.blob[NONCE_BYTES:])
    except IntegrityFailure as exc:
        raise TagDecodeFailure("tag failed authentication") from exc
    step = (sk.lam + 7) // 8
    if len(plain) != 2 * step:
        raise TagDecodeFailure("tag payload has wrong size")
    x = gf2.unpack_vector(plain[:step], sk.lam)
    z = gf2.unpack_vector(plain[step:], sk.lam)
    return x, z


def _seal_tag(sk: TokenSecretKey, x: int, z: int, rng: Rng) -> TokenTag:
    """Forge-a-tag helper for adversarial tests (requires the pad key)."""
    nonce = rng.bytes(NONCE_BYTES)
    plain = gf2.pack_vector(x, sk.lam) + gf2.pack_vector(z, sk.lam)
    return TokenTag(lam=sk.lam, blob=nonce + aead_seal(_tag_key(sk.pad_key), nonce, plain))


def tok_sen(sk: TokenSecretKey, pk: TokenPublicKey, tag: TokenTag) -> EvalKey:
    """Sender's reply: open the tag and emit the three coset checkers.

    Aborts when the decoded x lies inside the subspace (the two bit-0
    half-cosets would then overlap the span and verification soundness
    breaks down); honest receivers hit this with probability 2^(-lam/2).
    """
    x, z = open_tag(sk, tag)
    if gf2.member(sk.rows, x):
        raise XInSubspaceAbort("receiver offset landed in the subspace")
    w = sk.rows[0]
    s0 = sk.rows[1:]
    perp = gf2.perp_basis(sk.rows, sk.lam)
    return EvalKey(
        checker_a=CosetChecker(rows=s0, offset=x, lam=sk.lam),
        checker_b=CosetChecker(rows=s0, offset=w ^ x, lam=sk.lam),
        checker_perp=CosetChecker(rows=perp, offset=z, lam=sk.lam),
        lam=sk.lam,
    )


def tok_sign(pk: TokenPublicKey, ek: EvalKey, handle, b: int, hardware, rng: Rng) -> int:
    """Consume the token: bit 0 measures computational, bit 1 dual."""
    if b:
        return hardware.measure_hadamard(handle, rng)
    return hardware.measure_computational(handle, rng)


def tok_cv(pk: TokenPublicKey, ek: EvalKey, sigma: int, b: int) -> int:
    """Deterministic classical verification; 0 on out-of-range input."""
    if not isinstance(sigma, int) or sigma < 0 or sigma >> ek.lam:
        return 0
    if b:
        return int(ek.checker_perp.accepts(sigma))
    return int(ek.checker_a.accepts(sigma) or ek.checker_b.accepts(sigma))
