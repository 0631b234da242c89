"""Fault tolerance by independent repetition and majority verification.

A lifted token is w independent base tokens; a lifted signature verifies
when strictly more than half of the component verifications accept.  The
width calculator returns the minimal odd w whose exact binomial tail
meets the target failure probability, which is sharper than the Chernoff
closed form while staying inside the same O(log(1/eps)/delta^2) envelope;
the Chernoff-derived width is kept as a cross-check upper bound.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy.stats import binom

from . import gf2
from .cqtok import tok_cv, tok_sign
from .errors import AlreadyConsumed


def binomial_tail(w: int, delta: float) -> float:
    """P[no majority]: at most floor(w/2) successes at rate 1/2 + delta."""
    return float(binom.cdf(w // 2, w, 0.5 + delta))


def chernoff_width(delta: float, eps_tok: float) -> int:
    """Smallest odd w with the Hoeffding bound exp(-2 w delta^2) <= eps."""
    w = max(1, math.ceil(math.log(1.0 / eps_tok) / (2.0 * delta * delta)))
    return w if w % 2 else w + 1


@dataclass(frozen=True)
class FTParams:
    w: int
    delta: float
    eps_tok: float

    @property
    def majority(self) -> int:
        return self.w // 2 + 1


def ft_params(delta: float, eps_tok: float) -> FTParams:
    """Minimal odd repetition count meeting the exact tail target."""
    if not 0.0 < delta <= 0.5:
        raise ValueError("delta must be in (0, 1/2]")
    if not 0.0 < eps_tok < 1.0:
        raise ValueError("eps_tok must be in (0, 1)")
    w_max = chernoff_width(delta, eps_tok) + 2
    ws = np.arange(1, w_max + 1, 2)
    tails = binom.cdf(ws // 2, ws, 0.5 + delta)
    below = np.nonzero(tails <= eps_tok)[0]
    w = int(ws[below[0]])
    return FTParams(w=w, delta=delta, eps_tok=eps_tok)


@dataclass
class FtToken:
    """w independent token handles; void once any component is spent."""

    handles: tuple


def ft_sign(pks, eks, token: FtToken, b: int, hardware, rng) -> list[int]:
    """Sign bit b on every component, consuming all w handles.

    ``pks``/``eks`` may be None: signing is a measurement and never needs
    key material (the verification side normally travels sealed to the
    oracle anyway).  A component that was already consumed voids the whole
    lifted token: the remaining live components are still consumed, then
    the error is raised, so no partial signing capability survives.
    """
    if pks is None:
        pks = [None] * len(token.handles)
    if eks is None:
        eks = [None] * len(pks)
    sigs: list[int] = []
    stale = None
    for pk, ek, handle in zip(pks, eks, token.handles, strict=True):
        try:
            sigs.append(tok_sign(pk, ek, handle, b, hardware, rng))
        except AlreadyConsumed as exc:
            stale = exc
    if stale is not None:
        raise AlreadyConsumed("lifted token is void") from stale
    return sigs


def ft_cv(pks, eks, sigs, b: int) -> int:
    """1 iff strictly more than half of the component verdicts accept."""
    w = len(pks)
    votes = sum(tok_cv(pk, ek, s, b) for pk, ek, s in zip(pks, eks, sigs, strict=True))
    return int(votes >= w // 2 + 1)


def encode_ft_signature(sigs, lam: int) -> bytes:
    body = b"".join(struct.pack("<H", (lam + 7) // 8) + gf2.pack_vector(s, lam) for s in sigs)
    return struct.pack("<H", len(sigs)) + body


def decode_ft_signature(b: bytes) -> list[int]:
    (w,) = struct.unpack_from("<H", b, 0)
    off = 2
    sigs = []
    for _ in range(w):
        (n,) = struct.unpack_from("<H", b, off)
        off += 2
        sigs.append(int.from_bytes(b[off:off + n], "little"))
        off += n
    if off != len(b):
        raise ValueError("trailing bytes in lifted signature")
    return sigs
