"""Applications of the chain: reveal-once memories and copy protection.

A one-time memory is a chain over the two-secret reveal-once program: any
number of no-op reads keep the chain alive, the first real read burns the
state and returns the chosen secret, and everything after returns
nothing.  Copy protection chains a PRF-token-gated circuit: evaluating
round i needs the exact unlock token for i, and each successful round
releases the next token, so two parties that cannot talk to each other
cannot both advance the program.

The pirate game harness plays the split-and-challenge game between a
pirate and two isolated freeloaders over real chains, and the trivial win
probability is computed by exhaustive enumeration over the finite game
specification.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

from .crypt import Rng, prf
from .errors import ChainBroken
from .progvm import (
    BytecodeProgram,
    CopyProtProgram,
    OtmProgram,
    bits_to_bytes,
    eval_program,
    point_function_program,
)
from .ramobf import ChainParams, ChainReceiverState, ro_eval, ro_send

TOKEN_LEN = 32  # unlock tokens are PRF outputs


def otm_prep(s0: bytes, s1: bytes, g, hardware, rng: Rng,
             params: ChainParams = ChainParams()) -> ChainReceiverState:
    """Start a reveal-once memory chain over two equal-length secrets."""
    if len(s0) != len(s1):
        raise ValueError("secrets must have equal length")
    program = OtmProgram.create(s0, s1)
    return ro_send(program, b"\x00", g, hardware, rng, params)


def otm_read(state: ChainReceiverState, alpha, oracle, hardware, rng: Rng):
    """Read the memory: alpha in {0, 1} burns and reveals, None is a no-op.

    Returns (secret bytes | None, next chain state).  None also covers a
    dead chain round; the returned state tells the two apart via alive.
    """
    bits = (0, 0) if alpha is None else (1, 1 if alpha else 0)
    y, nxt = ro_eval(state, bits, oracle, hardware, rng)
    if y is None or y[0] != 1:
        return None, nxt
    return bits_to_bytes(y[1:]), nxt


@dataclass
class ProtectedProgram:
    """Receiver's handle on a copy-protected circuit."""

    chain: ChainReceiverState
    n_input_bits: int
    m_output_bits: int


def cp_protect(circuit: BytecodeProgram, g, hardware, rng: Rng,
               params: ChainParams = ChainParams()) -> tuple[ProtectedProgram, bytes]:
    """Protect a circuit; returns the chain plus the first unlock token."""
    key = rng.bytes(32)
    program = CopyProtProgram.create(circuit, key)
    chain = ro_send(program, (0).to_bytes(8, "little", signed=True), g, hardware, rng, params)
    return (ProtectedProgram(chain=chain, n_input_bits=circuit.n_input_bits,
                             m_output_bits=circuit.m_output_bits),
            prf(key, 0))


def cp_eval(protected: ProtectedProgram, x_bits, token: bytes, oracle, hardware, rng: Rng):
    """One gated evaluation.

    Returns (output bits | None, next token | None, still evaluable).  A
    wrong token returns nothing and bricks the program: the chain itself
    stays alive but every later round answers nothing.
    """
    y, nxt = ro_eval(protected.chain, x_bits, oracle, hardware, rng, inner_aux=token)
    protected.chain = nxt
    if y is None or y[0] != 1:
        return None, None, nxt.alive
    m = protected.m_output_bits
    return y[1:1 + m], bits_to_bytes(y[1 + m:]), nxt.alive


# ---------------------------------------------------------------------------
# pirate game

@dataclass(frozen=True)
class PirateGameSpec:
    """Finite game: weighted circuits, weighted challenge pairs per circuit.

    circuits: list of (weight, circuit) with weights summing to 1.
    challenges: per circuit, list of (weight, (x1 bits, x2 bits)).
    """

    circuits: tuple
    challenges: tuple

    def __post_init__(self):
        if abs(sum(w for w, _ in self.circuits) - 1.0) > 1e-9:
            raise ValueError("circuit weights must sum to 1")
        for rows in self.challenges:
            if abs(sum(w for w, _ in rows) - 1.0) > 1e-9:
                raise ValueError("challenge weights must sum to 1")

    @property
    def m_output_bits(self) -> int:
        return self.circuits[0][1].m_output_bits


def circuit_answer(circuit: BytecodeProgram, x_bits) -> tuple[int, ...]:
    _, y = eval_program(circuit, b"", x_bits)
    return y


def trivial_win_probability(spec: PirateGameSpec) -> float:
    """Best win rate of forward-one-guess-other, by exhaustive enumeration.

    For each freeloader slot and each candidate answer, accumulate the
    expected probability mass of that answer under the winning-answer
    distribution; the maximum over both choices is the trivial rate.
    """
    best = 0.0
    for i in (0, 1):
        mass: dict[tuple, float] = {}
        for (wc, circuit), rows in zip(spec.circuits, spec.challenges, strict=True):
            for wp, pair in rows:
                answer = circuit_answer(circuit, pair[i])
                mass[answer] = mass.get(answer, 0.0) + wc * wp
        best = max(best, max(mass.values()))
    return best


_BEST_ANSWER_CACHE: dict = {}


def best_constant_answer(spec: PirateGameSpec, slot: int) -> tuple[int, ...]:
    """Argmax answer for one freeloader slot (the guessing half)."""
    cached = _BEST_ANSWER_CACHE.get((id(spec), slot))
    if cached is not None:
        return cached
    mass: dict[tuple, float] = {}
    for (wc, circuit), rows in zip(spec.circuits, spec.challenges, strict=True):
        for wp, pair in rows:
            answer = circuit_answer(circuit, pair[slot])
            mass[answer] = mass.get(answer, 0.0) + wc * wp
    best = max(mass.items(), key=lambda kv: kv[1])[0]
    _BEST_ANSWER_CACHE[(id(spec), slot)] = best
    return best


def default_point_function_spec(n: int = 8, n_targets: int = 4, hit_weight: float = 0.4,
                                seed: int = 1) -> PirateGameSpec:
    """Point functions over n-bit inputs with uniformly chosen decoys.

    Each challenge slot lands on the circuit's target with probability
    ``hit_weight`` and otherwise on one of three uniformly drawn decoy
    inputs, which keeps the trivial win probability strictly below 1.
    """
    rng = Rng(seed)
    circuits = []
    challenges = []

    def rand_input():
        v = rng.bits(n)
        return tuple((v >> (n - 1 - j)) & 1 for j in range(n))

    for _ in range(n_targets):
        target = rand_input()
        circuits.append((1.0 / n_targets, point_function_program(n, target)))
        slots = []
        for _ in range(2):
            decoys = []
            while len(decoys) < 3:
                d = rand_input()
                if d != target and d not in decoys:
                    decoys.append(d)
            slots.append([(hit_weight, target)]
                         + [((1.0 - hit_weight) / 3, d) for d in decoys])
        pairs = tuple((w1 * w2, (x1, x2)) for w1, x1 in slots[0] for w2, x2 in slots[1])
        challenges.append(pairs)
    return PirateGameSpec(circuits=tuple(circuits), challenges=tuple(challenges))


@dataclass
class GameContext:
    """Shared read-only facilities a strategy may use."""

    g: object
    hardware: object
    rng: Rng
    spec: PirateGameSpec


# Built-in strategies.  A pirate maps (protected, t0, ctx) to two opaque
# registers; each freeloader maps (register, challenge bits, ctx) to an
# answer.  Freeloaders run after the split with no shared mutable state
# beyond the global oracle.

def pirate_forward(protected, t0, ctx):
    """Hand everything to the first freeloader; starve the second."""
    return (protected, t0), None


def freeloader_eval_or_guess(register, x_bits, ctx, slot):
    if register is None:
        return best_constant_answer(ctx.spec, slot)
    protected, token = register
    try:
        y, _, _ = cp_eval(protected, x_bits, token, ctx.g.oracle, ctx.hardware, ctx.rng)
    except ChainBroken:
        y = None
    return y if y is not None else best_constant_answer(ctx.spec, slot)


def pirate_state_split(protected, t0, ctx):
    """Burn round 0 up front; split the leftovers.

    The first freeloader gets the stale round-0 classical material (its
    tokens are spent), the second gets the fresh unlock token but no
    chain.  Neither half can evaluate.
    """
    stale = ProtectedProgram(chain=protected.chain, n_input_bits=protected.n_input_bits,
                             m_output_bits=protected.m_output_bits)
    probe = (0,) * protected.n_input_bits
    _, t1, _ = cp_eval(protected, probe, t0, ctx.g.oracle, ctx.hardware, ctx.rng)
    return (stale, t0), (None, t1)


def freeloader_split_first(register, x_bits, ctx):
    stale, t0 = register
    try:
        y, _, _ = cp_eval(stale, x_bits, t0, ctx.g.oracle, ctx.hardware, ctx.rng)
    except ChainBroken:
        y = None
    return y if y is not None else best_constant_answer(ctx.spec, 0)


def freeloader_split_second(register, x_bits, ctx):
    # holds a fresh unlock token but no chain to spend it on
    return best_constant_answer(ctx.spec, 1)


def pirate_replay(protected, t0, ctx):
    """Give both freeloaders views of the same live round.

    The classical material duplicates freely, but the round's tokens are
    consumable: whoever evaluates first wins the race and the other side's
    view is stale forever.
    """
    twin = ProtectedProgram(chain=protected.chain, n_input_bits=protected.n_input_bits,
                            m_output_bits=protected.m_output_bits)
    return (protected, t0), (twin, t0)


def freeloader_replay(register, x_bits, ctx, slot):
    protected, token = register
    try:
        y, _, _ = cp_eval(protected, x_bits, token, ctx.g.oracle, ctx.hardware, ctx.rng)
    except ChainBroken:
        y = None
    return y if y is not None else best_constant_answer(ctx.spec, slot)


STRATEGIES = {
    "forward": (pirate_forward,
                lambda r, x, c: freeloader_eval_or_guess(r, x, c, 0),
                lambda r, x, c: freeloader_eval_or_guess(r, x, c, 1)),
    "state-split": (pirate_state_split, freeloader_split_first, freeloader_split_second),
    "replay": (pirate_replay,
               lambda r, x, c: freeloader_replay(r, x, c, 0),
               lambda r, x, c: freeloader_replay(r, x, c, 1)),
}


def run_pirate_game(spec: PirateGameSpec, pirate, f1, f2, trials: int, g, hardware,
                    rng: Rng, params: ChainParams = ChainParams(),
                    csv_path=None) -> float:
    """Play the four-step game ``trials`` times; returns the win rate.

    Per trial: sample a circuit, protect it, let the pirate split, sample
    the challenge pair, collect both answers, score exact equality on
    both sides.  Freeloaders are invoked strictly after the split and
    share nothing but the stateless oracle.
    """
    wins = 0
    rows = []
    circuit_weights = [w for w, _ in spec.circuits]
    for t in range(trials):
        trial_rng = rng.child(f"game/{t}")
        ci = trial_rng.choice_weighted(circuit_weights)
        _, circuit = spec.circuits[ci]
        protected, t0 = cp_protect(circuit, g, hardware, trial_rng.child("protect"), params)
        pirate_ctx = GameContext(g=g, hardware=hardware, rng=trial_rng.child("pirate"), spec=spec)
        reg1, reg2 = pirate(protected, t0, pirate_ctx)
        pi = trial_rng.choice_weighted([w for w, _ in spec.challenges[ci]])
        x1, x2 = spec.challenges[ci][pi][1]
        # isolated sessions: separate randomness, nothing shared but the oracle
        b1 = f1(reg1, x1, GameContext(g=g, hardware=hardware,
                                      rng=trial_rng.child("f1"), spec=spec))
        b2 = f2(reg2, x2, GameContext(g=g, hardware=hardware,
                                      rng=trial_rng.child("f2"), spec=spec))
        win = (tuple(b1) == circuit_answer(circuit, x1)
               and tuple(b2) == circuit_answer(circuit, x2))
        wins += win
        if csv_path:
            rows.append({"trial": t, "circuitId": ci,
                         "x1": "".join(map(str, x1)), "x2": "".join(map(str, x2)),
                         "b1": "".join(map(str, b1)), "b2": "".join(map(str, b2)),
                         "win": int(win)})
    if csv_path:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["trial", "circuitId", "x1", "x2",
                                                    "b1", "b2", "win"])
            writer.writeheader()
            writer.writerows(rows)
    return wins / trials
