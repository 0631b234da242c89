"""Simulated consumable quantum hardware.

Token states are stored symbolically as a subspace plus two offset
vectors; the honest protocol only ever needs coset sampling, which keeps
the backend exact at any lambda.  No-cloning is enforced by handle
semantics: the registry hands out opaque ids, each id yields at most one
measurement ever, and consumption is atomic under concurrent access.

Noise is one independent Bernoulli event per measurement: with
probability ``p_fail`` the result is replaced by a uniform vector.  Noise
draws on distinct handles never share state, which is the independence
assumption the repetition lift relies on.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

from . import gf2
from .errors import AlreadyConsumed, UnknownHandle


@dataclass(frozen=True)
class TokenHandle:
    """Opaque registry key; the only user-facing view of a token state."""

    id: int


class _TokenState:
    __slots__ = ("rows", "x", "z", "lam", "p_fail", "_perp")

    def __init__(self, rows, x, z, lam, p_fail):
        self.rows = rows
        self.x = x
        self.z = z
        self.lam = lam
        self.p_fail = p_fail
        self._perp = None

    def perp_rows(self):
        if self._perp is None:
            self._perp = gf2.perp_basis(self.rows, self.lam)
        return self._perp


class QuantumHardware:
    """Registry of live token states with atomic consume-on-measure."""

    def __init__(self, p_fail: float = 0.0):
        if not 0.0 <= p_fail < 1.0:
            raise ValueError("p_fail must be in [0, 1)")
        self.p_fail = p_fail
        self._states: dict[int, _TokenState] = {}
        self._spent: set[int] = set()
        self._lock = threading.Lock()
        self._next_id = 1
        self._created = 0

    def register_token(self, rows, x: int, z: int, lam: int,
                       p_fail: float | None = None) -> TokenHandle:
        """Store a fresh (subspace, x, z) state and return its handle."""
        state = _TokenState(tuple(rows), x, z, lam,
                            self.p_fail if p_fail is None else p_fail)
        with self._lock:
            handle_id = self._next_id
            self._next_id += 1
            self._states[handle_id] = state
            self._created += 1
        return TokenHandle(handle_id)

    def _consume(self, handle: TokenHandle) -> _TokenState:
        with self._lock:
            state = self._states.pop(handle.id, None)
            if state is None:
                if handle.id in self._spent:
                    raise AlreadyConsumed(f"handle {handle.id} already measured")
                raise UnknownHandle(f"handle {handle.id} was never issued")
            self._spent.add(handle.id)
        return state

    def measure_computational(self, handle: TokenHandle, rng) -> int:
        """Consume the state; sample the x-shifted coset (or noise)."""
        state = self._consume(handle)
        if state.p_fail and rng.random() < state.p_fail:
            return rng.bits(state.lam)
        return gf2.coset_sample(state.rows, state.x, rng)

    def measure_hadamard(self, handle: TokenHandle, rng) -> int:
        """Consume the state; sample the z-shifted dual coset (or noise)."""
        state = self._consume(handle)
        if state.p_fail and rng.random() < state.p_fail:
            return rng.bits(state.lam)
        return gf2.coset_sample(state.perp_rows(), state.z, rng)

    def live_count(self) -> int:
        with self._lock:
            return len(self._states)

    def created_count(self) -> int:
        with self._lock:
            return self._created

    def consumed_count(self) -> int:
        with self._lock:
            return len(self._spent)
