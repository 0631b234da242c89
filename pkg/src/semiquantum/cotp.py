"""Single-round one-time programs behind a universal classical oracle.

Generation is receiver-first: the receiver prepares one lifted token per
program input bit and sends the tags; the sender answers with a single
sealed payload binding the program, the per-bit public keys and the
per-bit evaluation keys.  The oracle holds the master decryption key,
verifies a lifted signature on every input bit, and only then runs the
program.  It is stateless and uniform: every failure mode collapses to
the same empty reply, and identical queries always produce identical
answers.

Chain programs need two things plain programs do not: an unsigned
auxiliary section on the query (next-round tags and any native extra
input) and a structured reply (output bits plus the freshly sealed next
round).  Per-bit signing of those auxiliary bytes is not meaningful --
their size depends on the following round's token count -- so one-time
semantics rest entirely on the signed input bits.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .crypt import Rng, SealedPayload, pk_decrypt, pk_encrypt, pk_gen, prf
from .cqtok import EvalKey, TokenPublicKey, TokenSecretKey, TokenTag, tok_rec, tok_sen, tok_setup
from .errors import AlreadyEvaluated, IntegrityFailure, MalformedPk
from .ftlift import FtToken, decode_ft_signature, encode_ft_signature, ft_cv, ft_sign
from .progvm import Program, decode_program, encode_program, eval_program

QUERY_VERSION = 1
REPLY_BITS = 1
REPLY_CHAIN = 2


def _lp(b: bytes) -> bytes:
    return struct.pack("<I", len(b)) + b


def _read_lp(b: bytes, off: int) -> tuple[bytes, int]:
    (n,) = struct.unpack_from("<I", b, off)
    off += 4
    if off + n > len(b):
        raise ValueError("length prefix overruns buffer")
    return bytes(b[off:off + n]), off + n


@dataclass(frozen=True)
class PkBundle:
    """Per-input-bit vectors of lifted token public keys (n x w)."""

    keys: tuple[tuple[TokenPublicKey, ...], ...]

    @property
    def n(self) -> int:
        return len(self.keys)

    @property
    def w(self) -> int:
        return len(self.keys[0])

    def encode(self) -> bytes:
        out = [struct.pack("<HH", self.n, self.w)]
        for row in self.keys:
            for pk in row:
                out.append(_lp(pk.encode()))
        return b"".join(out)

    @classmethod
    def decode(cls, b: bytes) -> "PkBundle":
        n, w = struct.unpack_from("<HH", b, 0)
        off = 4
        keys = []
        for _ in range(n):
            row = []
            for _ in range(w):
                blob, off = _read_lp(b, off)
                row.append(TokenPublicKey.decode(blob))
            keys.append(tuple(row))
        if off != len(b):
            raise ValueError("trailing bytes in pk bundle")
        return cls(keys=tuple(keys))


@dataclass(frozen=True)
class EkBundle:
    """Per-input-bit vectors of evaluation keys, aligned with a PkBundle."""

    keys: tuple[tuple[EvalKey, ...], ...]

    def encode(self) -> bytes:
        out = [struct.pack("<HH", len(self.keys), len(self.keys[0]))]
        for row in self.keys:
            for ek in row:
                out.append(_lp(ek.encode()))
        return b"".join(out)

    @classmethod
    def decode(cls, b: bytes) -> "EkBundle":
        n, w = struct.unpack_from("<HH", b, 0)
        off = 4
        keys = []
        for _ in range(n):
            row = []
            for _ in range(w):
                blob, off = _read_lp(b, off)
                row.append(EvalKey.decode(blob))
            keys.append(tuple(row))
        if off != len(b):
            raise ValueError("trailing bytes in ek bundle")
        return cls(keys=tuple(keys))


@dataclass(frozen=True)
class ChainReply:
    """Oracle answer for a chain round: output plus next-round material."""

    y_bits: tuple[int, ...]
    ct_next: SealedPayload
    pk_after_next: PkBundle


def seal_triple(mpk: bytes, program, pk: PkBundle, ek: EkBundle, rng: Rng) -> SealedPayload:
    """Bind [program, pk, ek] into one authenticated ciphertext."""
    plain = _lp(encode_program(program)) + _lp(pk.encode()) + _lp(ek.encode())
    return pk_encrypt(mpk, plain, rng)


def open_triple(msk: bytes, ct: SealedPayload):
    """Inverse of seal_triple; any bit flip or component swap fails."""
    plain = pk_decrypt(msk, ct)
    try:
        prog_b, off = _read_lp(plain, 0)
        pk_b, off = _read_lp(plain, off)
        ek_b, off = _read_lp(plain, off)
        if off != len(plain):
            raise ValueError("trailing bytes in sealed triple")
        return decode_program(prog_b), PkBundle.decode(pk_b), EkBundle.decode(ek_b)
    except IntegrityFailure:
        raise
    except Exception as exc:
        raise IntegrityFailure("sealed triple failed to parse") from exc


class ClassicalOracle:
    """The universal classically accessible oracle with hard-coded msk.

    Stateless by construction; all failure causes produce the same None
    so callers cannot distinguish why a query was rejected.
    """

    def __init__(self, msk: bytes, step_budget: int = 1_000_000):
        self._msk = msk
        self._step_budget = step_budget

    def query(self, x_bits, ct: SealedPayload, sigs, aux: bytes = b""):
        """Verify one lifted signature per input bit, then run the program.

        Returns the program's output bits, a ChainReply for chain rounds,
        or None on any failure whatsoever.
        """
        try:
            program, pk, ek = open_triple(self._msk, ct)
            x_bits = tuple(x_bits)
            n = program.n_input_bits
            if len(x_bits) != n or len(sigs) != n or pk.n != n or len(ek.keys) != n:
                return None
            if any(b not in (0, 1) for b in x_bits):
                return None
            for i in range(n):
                if not ft_cv(pk.keys[i], ek.keys[i], sigs[i], x_bits[i]):
                    return None
            if hasattr(program, "run_in_oracle"):
                return program.run_in_oracle(x_bits, aux, self._step_budget)
            if len(aux) != program.aux_len:
                return None
            _, y = eval_program(program, bytes(program.ram_schema), x_bits, aux,
                                self._step_budget)
            return y
        except Exception:
            return None

    def query_wire(self, request: bytes) -> bytes:
        """Wire-format entry point used by the framed transports."""
        try:
            x_bits, ct, sigs, aux = decode_oracle_query(request)
        except Exception:
            return encode_oracle_reply(None)
        return encode_oracle_reply(self.query(x_bits, ct, sigs, aux))


@dataclass(frozen=True)
class GlobalSetup:
    """Public side of the global setup: the oracle plus its public key."""

    mpk: bytes
    oracle: ClassicalOracle


def global_setup(rng: Rng) -> GlobalSetup:
    """Fresh master keypair; the oracle closure is reusable across programs."""
    keys = pk_gen(rng)
    return GlobalSetup(mpk=keys.mpk, oracle=ClassicalOracle(keys.msk))


def otp_keygen(rng: Rng, n: int, w: int, lam: int):
    """n fresh lifted secret keys, each a vector of w base keys."""
    return [[TokenSecretKey.generate(rng, lam) for _ in range(w)] for _ in range(n)]


def otp_keys_from_seed(seed: bytes, n: int, w: int, lam: int):
    """Deterministic key expansion; chain wrappers re-derive with this."""
    return [[TokenSecretKey.from_seed(prf(seed, f"tok/{i}/{j}".encode()), lam)
             for j in range(w)] for i in range(n)]


def otp_setup(sks) -> PkBundle:
    return PkBundle(keys=tuple(tuple(tok_setup(sk) for sk in row) for row in sks))


@dataclass
class OtpReceiverState:
    """Receiver-held material for one generation; strictly single-use."""

    pk: PkBundle
    tokens: list[FtToken]
    tags: list[list[TokenTag]]
    ct: SealedPayload | None = None
    used: bool = False
    transcript: list = field(default_factory=list)


def otp_gen_receiver(pk: PkBundle, hardware, rng: Rng) -> tuple[OtpReceiverState, list[list[TokenTag]]]:
    """Receiver's (first) message of generation: tokens live, tags out."""
    if pk.n < 1:
        raise MalformedPk("empty public key bundle")
    tokens, tags = [], []
    for row in pk.keys:
        handles, row_tags = [], []
        for token_pk in row:
            handle, tag = tok_rec(token_pk, hardware, rng)
            handles.append(handle)
            row_tags.append(tag)
        tokens.append(FtToken(handles=tuple(handles)))
        tags.append(row_tags)
    state = OtpReceiverState(pk=pk, tokens=tokens, tags=tags)
    state.transcript.append({"direction": "recv_to_send", "messageType": "tags",
                             "byteLength": len(encode_tags(tags))})
    return state, tags


def otp_gen_sender_reply(program, sks, tags, mpk: bytes, rng: Rng) -> SealedPayload:
    """Sender's reply: per-component eval keys sealed with program and pks."""
    pk = otp_setup(sks)
    ek_rows = []
    for sk_row, pk_row, tag_row in zip(sks, pk.keys, tags, strict=True):
        ek_rows.append(tuple(tok_sen(sk, tpk, tag)
                             for sk, tpk, tag in zip(sk_row, pk_row, tag_row, strict=True)))
    return seal_triple(mpk, program, pk, EkBundle(keys=tuple(ek_rows)), rng)


def otp_eval(state: OtpReceiverState, x_bits, oracle, hardware, rng: Rng):
    """Sign every input bit, consume all tokens, query the oracle once.

    Returns the program output bits or None; the state is dead either way.
    """
    if state.used:
        raise AlreadyEvaluated("receiver state already spent")
    if state.ct is None:
        raise ValueError("sender reply not yet attached")
    x_bits = tuple(x_bits)
    if len(x_bits) != state.pk.n:
        raise ValueError("input width mismatch")
    state.used = True
    sigs = []
    for i, bit in enumerate(x_bits):
        sigs.append(ft_sign(state.pk.keys[i], None, state.tokens[i], bit, hardware, rng))
    return oracle.query(x_bits, state.ct, sigs, b"")


def encode_tags(tags) -> bytes:
    n = len(tags)
    w = len(tags[0])
    out = [struct.pack("<HH", n, w)]
    for row in tags:
        for tag in row:
            out.append(_lp(tag.encode()))
    return b"".join(out)


def decode_tags(b: bytes):
    n, w = struct.unpack_from("<HH", b, 0)
    off = 4
    rows = []
    for _ in range(n):
        row = []
        for _ in range(w):
            blob, off = _read_lp(b, off)
            row.append(TokenTag.decode(blob))
        rows.append(row)
    if off != len(b):
        raise ValueError("trailing bytes in tag bundle")
    return rows


def pack_bits(bits) -> bytes:
    out = bytearray((len(bits) + 7) // 8)
    for i, b in enumerate(bits):
        if b:
            out[i // 8] |= 1 << (i % 8)
    return bytes(out)


def unpack_bits(data: bytes, n: int) -> tuple[int, ...]:
    return tuple((data[i // 8] >> (i % 8)) & 1 for i in range(n))


def encode_oracle_query(x_bits, ct: SealedPayload, sigs, aux: bytes, lam: int) -> bytes:
    """version || u16 n || packed x || ct || n lifted signatures || aux."""
    n = len(x_bits)
    out = [struct.pack("<BH", QUERY_VERSION, n), pack_bits(x_bits), _lp(ct.encode())]
    for row in sigs:
        out.append(_lp(encode_ft_signature(row, lam)))
    out.append(_lp(aux))
    return b"".join(out)


def decode_oracle_query(b: bytes):
    version, n = struct.unpack_from("<BH", b, 0)
    if version != QUERY_VERSION:
        raise ValueError("unknown query version")
    off = 3
    nbytes = (n + 7) // 8
    x_bits = unpack_bits(b[off:off + nbytes], n)
    off += nbytes
    ct_b, off = _read_lp(b, off)
    sigs = []
    for _ in range(n):
        sig_b, off = _read_lp(b, off)
        sigs.append(decode_ft_signature(sig_b))
    aux, off = _read_lp(b, off)
    if off != len(b):
        raise ValueError("trailing bytes in oracle query")
    return x_bits, SealedPayload.decode(ct_b), sigs, aux


def encode_oracle_reply(reply) -> bytes:
    if reply is None:
        return b"\x00"
    if isinstance(reply, ChainReply):
        return (bytes([REPLY_CHAIN]) + struct.pack("<H", len(reply.y_bits))
                + pack_bits(reply.y_bits) + _lp(reply.ct_next.encode())
                + _lp(reply.pk_after_next.encode()))
    return bytes([REPLY_BITS]) + struct.pack("<H", len(reply)) + pack_bits(reply)


def decode_oracle_reply(b: bytes):
    if not b:
        raise ValueError("empty oracle reply")
    kind = b[0]
    if kind == 0:
        return None
    if kind == REPLY_BITS:
        (m,) = struct.unpack_from("<H", b, 1)
        return unpack_bits(b[3:], m)
    if kind == REPLY_CHAIN:
        (m,) = struct.unpack_from("<H", b, 1)
        off = 3
        nbytes = (m + 7) // 8
        y = unpack_bits(b[off:off + nbytes], m)
        off += nbytes
        ct_b, off = _read_lp(b, off)
        pk_b, off = _read_lp(b, off)
        if off != len(b):
            raise ValueError("trailing bytes in oracle reply")
        return ChainReply(y_bits=y, ct_next=SealedPayload.decode(ct_b),
                          pk_after_next=PkBundle.decode(pk_b))
    raise ValueError("unknown oracle reply kind")
