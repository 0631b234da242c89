"""GF(2) linear algebra on bitmask-encoded row vectors.

A length-``lam`` row vector is a Python int whose bit ``j`` is column ``j``.
Matrices are tuples of such ints.  Canonical form throughout is reduced row
echelon form (RREF) with pivot columns strictly increasing, so equal row
spans have equal encodings.  Batch helpers mirror the scalar operations on
numpy uint64 arrays for Monte Carlo work (lam <= 64 there).
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np


def rref(rows, lam: int) -> tuple[int, ...]:
    """Reduced row echelon form of the row span; zero rows dropped."""
    work = [r & ((1 << lam) - 1) for r in rows]
    out: list[int] = []
    for col in range(lam):
        bit = 1 << col
        pivot = None
        for i, r in enumerate(work):
            if r & bit:
                pivot = work.pop(i)
                break
        if pivot is None:
            continue
        work = [r ^ pivot if r & bit else r for r in work]
        out = [r ^ pivot if r & bit else r for r in out]
        out.append(pivot)
    return tuple(out)


def is_rref(rows, lam: int) -> bool:
    """True iff ``rows`` is already in canonical reduced echelon form."""
    if any(r <= 0 or r >> lam for r in rows):
        return False
    pivs = [r & -r for r in rows]
    if any(pivs[i] >= pivs[i + 1] for i in range(len(pivs) - 1)):
        return False
    mask = 0
    for p in pivs:
        mask |= p
    return all((r & mask) == p for r, p in zip(rows, pivs))


def rank(rows, lam: int) -> int:
    return len(rref(rows, lam))


def pivots(rows) -> tuple[int, ...]:
    """Pivot column of each RREF row (its lowest set bit)."""
    return tuple((r & -r).bit_length() - 1 for r in rows)


def member(rows, v: int) -> bool:
    """Is ``v`` in the row span?  ``rows`` must be in RREF."""
    for r in rows:
        if v & (r & -r):
            v ^= r
    return v == 0


def reduce_mod(rows, v: int) -> int:
    """Canonical coset representative of ``v`` modulo the row span."""
    for r in rows:
        if v & (r & -r):
            v ^= r
    return v


@lru_cache(maxsize=16384)
def perp_basis(rows, lam: int) -> tuple[int, ...]:
    """RREF basis of the orthogonal complement of the row span.

    ``rows`` must be an RREF tuple.  For each non-pivot column f the
    vector e_f + sum of e_p over pivot rows with bit f set is orthogonal
    to all rows; together these span the complement.  Cached: senders and
    dual-basis measurements revisit the same subspaces.
    """
    piv = pivots(rows)
    piv_set = set(piv)
    basis = []
    for f in range(lam):
        if f in piv_set:
            continue
        v = 1 << f
        for p, r in zip(piv, rows):
            if r & (1 << f):
                v |= 1 << p
        basis.append(v)
    return rref(basis, lam)


def sample_subspace(rng, lam: int, dim: int) -> tuple[int, ...]:
    """Uniformly random ``dim``-dimensional subspace of F_2^lam, in RREF.

    A uniformly random full-rank matrix has a uniformly distributed row
    span, so rejection sampling on rank is exact.
    """
    while True:
        rows = rref([rng.bits(lam) for _ in range(dim)], lam)
        if len(rows) == dim:
            return rows


def coset_sample(rows, offset: int, rng) -> int:
    """Uniform element of ``offset + rowspan(rows)``."""
    c = rng.bits(len(rows))
    v = offset
    for j, r in enumerate(rows):
        if (c >> j) & 1:
            v ^= r
    return v


def span_elements(rows):
    """All 2^k elements of the row span (exhaustive tests only)."""
    elems = [0]
    for r in rows:
        elems += [v ^ r for v in elems]
    return elems


def dot(a: int, b: int) -> int:
    return (a & b).bit_count() & 1


def pack_vector(v: int, lam: int) -> bytes:
    return v.to_bytes((lam + 7) // 8, "little")


def unpack_vector(b: bytes, lam: int) -> int:
    v = int.from_bytes(b, "little")
    if v >> lam:
        raise ValueError("vector wider than lam")
    return v


def pack_matrix(rows, lam: int) -> bytes:
    step = (lam + 7) // 8
    return b"".join(r.to_bytes(step, "little") for r in rows)


def unpack_matrix(b: bytes, nrows: int, lam: int) -> tuple[int, ...]:
    step = (lam + 7) // 8
    if len(b) != nrows * step:
        raise ValueError("matrix byte length mismatch")
    return tuple(int.from_bytes(b[i * step:(i + 1) * step], "little") for i in range(nrows))


# ---------------------------------------------------------------------------
# numpy batch mirrors (lam <= 64)

def batch_coset_sample(rows, offset: int, coeffs: np.ndarray) -> np.ndarray:
    """Vectorized coset sampling: one output per coefficient word."""
    v = np.full(coeffs.shape, np.uint64(offset), dtype=np.uint64)
    for j, r in enumerate(rows):
        mask = (coeffs >> np.uint64(j)) & np.uint64(1)
        v ^= mask * np.uint64(r)
    return v


def batch_member(rows, offset: int, v: np.ndarray) -> np.ndarray:
    """Vectorized affine membership test: (v ^ offset) in rowspan(rows)."""
    w = v ^ np.uint64(offset)
    for r in rows:
        p = (r & -r).bit_length() - 1
        mask = (w >> np.uint64(p)) & np.uint64(1)
        w ^= mask * np.uint64(r)
    return w == 0
