"""Stateful black-box programs built by chaining one-time programs.

Each chain round is one OTP whose sealed program is a self-refreshing
wrapper: run the inner program on the hidden RAM, then play the sender
role for the next round against the receiver-supplied tags, seal the
successor wrapper (carrying the updated RAM) and hand back the public
keys two rounds ahead.  Round keys are a PRF chain over a secret that
only ever exists inside sealed payloads, so the original sender can be
dropped right after setup and the receiver never holds quantum state for
more than one round at a time.

A failed round is fatal by construction: the successor ciphertext is
minted inside the oracle during a successful evaluation, so there is
nothing to retry against.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field, replace

from .cotp import (
    ChainReply,
    EkBundle,
    OtpReceiverState,
    PkBundle,
    _lp,
    _read_lp,
    encode_tags,
    decode_tags,
    otp_gen_receiver,
    otp_keys_from_seed,
    otp_setup,
    pack_bits,
    seal_triple,
)
from .crypt import KEY_BYTES, Rng, SeedStream, prf
from .cqtok import tok_sen
from .errors import ChainBroken, AlreadyConsumed, MalformedProgram
from .ftlift import ft_sign
from .progvm import EXTRA_KIND_DECODERS, PROGRAM_VERSION, decode_program, encode_program, eval_program

KIND_CHAIN_WRAPPER = 5


@dataclass(frozen=True)
class ChainParams:
    """Token geometry shared by every round of one chain."""

    lam: int = 32
    w: int = 1


@dataclass(frozen=True)
class RecursiveWrapper:
    """The program one chain round actually runs inside the oracle."""

    inner: object
    chain_key: bytes
    round_index: int
    ram: bytes
    mpk: bytes
    params: ChainParams

    @property
    def n_input_bits(self) -> int:
        return self.inner.n_input_bits

    def encode_extra_kind(self) -> bytes:
        inner_b = encode_program(self.inner)
        return (struct.pack("<BB", PROGRAM_VERSION, KIND_CHAIN_WRAPPER)
                + struct.pack("<QHH", self.round_index, self.params.lam, self.params.w)
                + self.chain_key
                + _lp(self.ram) + _lp(self.mpk) + _lp(inner_b))

    @classmethod
    def decode_extra_kind(cls, b: bytes) -> "RecursiveWrapper":
        version, kind = struct.unpack_from("<BB", b, 0)
        if version != PROGRAM_VERSION or kind != KIND_CHAIN_WRAPPER:
            raise MalformedProgram("not a chain wrapper")
        round_index, lam, w = struct.unpack_from("<QHH", b, 2)
        off = 14
        chain_key = bytes(b[off:off + KEY_BYTES])
        off += KEY_BYTES
        ram, off = _read_lp(b, off)
        mpk, off = _read_lp(b, off)
        inner_b, off = _read_lp(b, off)
        if off != len(b) or len(chain_key) != KEY_BYTES:
            raise MalformedProgram("chain wrapper truncated")
        return cls(inner=decode_program(inner_b), chain_key=chain_key,
                   round_index=round_index, ram=ram, mpk=mpk,
                   params=ChainParams(lam=lam, w=w))

    def _keys_for_round(self, i: int):
        return otp_keys_from_seed(prf(self.chain_key, i), self.inner.n_input_bits,
                                  self.params.w, self.params.lam)

    def run_in_oracle(self, x_bits, aux: bytes, step_budget: int) -> ChainReply:
        """One round: evaluate, refresh, reseal.

        The sealing randomness is derived from the chain key, the round
        and a digest of the query, so the oracle stays deterministic:
        resubmitting an identical query reproduces the identical reply.
        """
        tags_b, off = _read_lp(aux, 0)
        inner_aux, off = _read_lp(aux, off)
        if off != len(aux):
            raise MalformedProgram("trailing bytes in chain aux")
        tags_next = decode_tags(tags_b)

        ram_next, y = eval_program(self.inner, self.ram, x_bits, inner_aux, step_budget)

        nxt = self.round_index + 1
        keys_next = self._keys_for_round(nxt)
        pk_next = otp_setup(keys_next)
        ek_rows = []
        for key_row, pk_row, tag_row in zip(keys_next, pk_next.keys, tags_next, strict=True):
            ek_rows.append(tuple(tok_sen(sk, tpk, tag)
                                 for sk, tpk, tag in zip(key_row, pk_row, tag_row, strict=True)))
        wrapper_next = replace(self, round_index=nxt, ram=ram_next)

        digest = hashlib.blake2b(pack_bits(x_bits) + aux, digest_size=32).digest()
        seal_seed = prf(self.chain_key, b"seal/%d/" % nxt + digest)
        ct_next = seal_triple(self.mpk, wrapper_next, pk_next, EkBundle(keys=tuple(ek_rows)),
                              SeedStream(seal_seed))
        pk_after = otp_setup(self._keys_for_round(nxt + 1))
        return ChainReply(y_bits=y, ct_next=ct_next, pk_after_next=pk_after)


EXTRA_KIND_DECODERS[KIND_CHAIN_WRAPPER] = RecursiveWrapper.decode_extra_kind


@dataclass
class ChainReceiverState:
    """Everything the receiver holds between rounds.

    Quantum material exists for exactly one round (the current tokens);
    the next round is present only as classical public keys until the
    moment of evaluation.
    """

    ct: object
    tokens: list
    next_pk: PkBundle
    round_index: int
    params: ChainParams
    alive: bool = True
    transcript: list = field(default_factory=list)

    def log(self, direction: str, message_type: str, byte_length: int, outcome: str = "ok"):
        self.transcript.append({
            "round": self.round_index,
            "direction": direction,
            "messageType": message_type,
            "byteLength": byte_length,
            "outcome": outcome,
        })


def transcript_jsonl(state: ChainReceiverState) -> str:
    return "\n".join(json.dumps(entry, sort_keys=True) for entry in state.transcript)


def ro_send(program, ram0: bytes, g, hardware, rng: Rng,
            params: ChainParams = ChainParams()) -> ChainReceiverState:
    """Single-round chain setup.

    The sender derives the round-0 and round-1 keys from a fresh chain
    secret, publishes both public key bundles, answers the receiver's
    tags with the sealed round-0 wrapper, and then owns nothing: every
    later round re-derives its keys inside the oracle.
    """
    if len(ram0) != program.ram_schema:
        raise MalformedProgram("initial ram does not match program schema")
    chain_key = rng.bytes(KEY_BYTES)
    keys0 = otp_keys_from_seed(prf(chain_key, 0), program.n_input_bits, params.w, params.lam)
    pk0 = otp_setup(keys0)
    pk1 = otp_setup(otp_keys_from_seed(prf(chain_key, 1), program.n_input_bits,
                                       params.w, params.lam))

    otp_state, tags0 = otp_gen_receiver(pk0, hardware, rng)
    wrapper0 = RecursiveWrapper(inner=program, chain_key=chain_key, round_index=0,
                                ram=ram0, mpk=g.mpk, params=params)
    ek_rows = []
    for key_row, pk_row, tag_row in zip(keys0, pk0.keys, tags0, strict=True):
        ek_rows.append(tuple(tok_sen(sk, tpk, tag)
                             for sk, tpk, tag in zip(key_row, pk_row, tag_row, strict=True)))
    ct0 = seal_triple(g.mpk, wrapper0, pk0, EkBundle(keys=tuple(ek_rows)), rng)

    state = ChainReceiverState(ct=ct0, tokens=otp_state.tokens, next_pk=pk1,
                               round_index=0, params=params)
    state.log("send_to_recv", "publish_pk", len(pk0.encode()) + len(pk1.encode()))
    state.log("recv_to_send", "tags", len(encode_tags(tags0)))
    state.log("send_to_recv", "sealed_round", len(ct0.encode()))
    return state


def ro_eval(state: ChainReceiverState, x_bits, oracle, hardware, rng: Rng,
            inner_aux: bytes = b""):
    """Evaluate the current round and roll the chain forward.

    Returns (output bits | None, next state).  The receiver first turns
    the next round's public keys into fresh tokens and tags, then spends
    the current round's tokens on the input bits and sends one query.  A
    None reply (or stale tokens) kills the chain permanently.
    """
    if not state.alive:
        raise ChainBroken("chain is dead")
    x_bits = tuple(x_bits)
    tokens_next_state, tags_next = otp_gen_receiver(state.next_pk, hardware, rng)
    aux = _lp(encode_tags(tags_next)) + _lp(inner_aux)

    dead = ChainReceiverState(ct=state.ct, tokens=[], next_pk=state.next_pk,
                              round_index=state.round_index, params=state.params,
                              alive=False, transcript=state.transcript)
    try:
        sigs = []
        for i, bit in enumerate(x_bits):
            sigs.append(ft_sign(None, None, state.tokens[i], bit, hardware, rng))
    except AlreadyConsumed:
        state.log("recv_to_send", "oracle_query", 0, outcome="stale_tokens")
        state.alive = False
        return None, dead

    reply = oracle.query(x_bits, state.ct, sigs, aux)
    if not isinstance(reply, ChainReply):
        state.log("recv_to_send", "oracle_query", 0, outcome="rejected")
        state.alive = False
        return None, dead

    state.alive = False  # this round is spent; the successor carries on
    next_state = ChainReceiverState(ct=reply.ct_next, tokens=tokens_next_state.tokens,
                                    next_pk=reply.pk_after_next,
                                    round_index=state.round_index + 1,
                                    params=state.params, transcript=state.transcript)
    next_state.log("recv_to_send", "oracle_query", len(encode_tags(tags_next)))
    next_state.log("send_to_recv", "sealed_round", len(reply.ct_next.encode()))
    return reply.y_bits, next_state


def reference_outputs(program, ram0: bytes, inputs, auxes=None):
    """Direct interpreter run of the same query sequence, for equivalence
    checks against the chain."""
    ram = bytes(ram0)
    outs = []
    for i, x in enumerate(inputs):
        aux = auxes[i] if auxes else b""
        ram, y = eval_program(program, ram, x, aux)
        outs.append(y)
    return outs
