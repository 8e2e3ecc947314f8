"""Two-node executors for the distributed overlap schemes S1, S2 and S3.

Register layout for an ``n``-qubit comparison: node A data on qubits
``0..n-1``, node B data on ``n..2n-1``, then node B's ancillas (storage at
``2n``, operational at ``2n+1``) when the scheme needs them.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import noise as nz
from .overlap import TrialBatch
from .simcore import (
    MAX_QUBITS,
    Circuit,
    Gate,
    QubitRangeError,
    StateVector,
    apply_gate,
    as_generator,
    measure,
    new_zero_state,
    prepare,
    qubit_probability,
    row_probability,
    reset,
    sample,
    tensor,
)

ANCILLAS = {"S1": 2, "S2": 1, "S3": 0, "S4": 0}
EMPTY_TOL = 1e-10
# keep each chunk's amplitude array near 2^22 complex entries
CHUNK_ELEMENTS = 1 << 22


class ProtocolError(RuntimeError):
    """A protocol step was sequenced incorrectly (e.g. transfer into an occupied qubit)."""


@dataclass
class ChannelLedger:
    """Counts qubit crossings of the inter-node channel."""

    uses: int = 0
    history: list[tuple[str, int]] = field(default_factory=list)

    def record(self, label: str = "") -> int:
        self.uses += 1
        self.history.append((label, self.uses))
        return self.uses


@dataclass(frozen=True)
class NodePair:
    """Qubit index bookkeeping for a scheme on two nodes."""

    n: int
    scheme: str = "S1"

    def __post_init__(self):
        if self.scheme not in ANCILLAS:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.n < 1:
            raise ValueError("register size must be at least 1")

    @property
    def num_ancillas(self) -> int:
        return ANCILLAS[self.scheme]

    @property
    def num_qubits(self) -> int:
        return 2 * self.n + self.num_ancillas

    def a(self, k: int) -> int:
        return k

    def b(self, k: int) -> int:
        return self.n + k

    @property
    def storage(self) -> int:
        if self.num_ancillas < 1:
            raise QubitRangeError(f"{self.scheme} allocates no storage qubit")
        return 2 * self.n

    @property
    def operational(self) -> int:
        if self.num_ancillas < 2:
            raise QubitRangeError(f"{self.scheme} allocates no operational qubit")
        return 2 * self.n + 1


def expected_channel_uses(scheme: str, n: int, return_qubits: bool = True) -> int:
    if scheme == "S1":
        return 2 * n if return_qubits else n
    if scheme in ("S2", "S4"):
        return n
    if scheme == "S3":
        return 2 * n
    raise ValueError(f"unknown scheme {scheme!r}")


def cross(state: StateVector, qubit: int, ledger: ChannelLedger, budget: nz.NoiseBudget | None,
          rng, label: str = "") -> StateVector:
    """Charge one channel crossing to ``qubit``: transfer depolarizing, transit decay, ledger."""
    ledger.record(label)
    if budget is None:
        return state
    state = nz.apply_depolarizing(state, qubit, 1 - budget.f_transfer, rng)
    return nz.transit_decay(state, qubit, budget, rng)


def transmit(state: StateVector, from_qubit: int, to_qubit: int, ledger: ChannelLedger,
             noise: nz.NoiseBudget | None = None, rng=None) -> StateVector:
    """State transfer ``from_qubit -> to_qubit`` through the channel.

    The destination must be empty (|0>); the ideal transfer is a SWAP, after
    which the destination is depolarized with ``p = 1 - f_transfer``.
    """
    p1 = row_probability(state, to_qubit)
    if np.max(p1) > EMPTY_TOL:
        raise ProtocolError(f"destination qubit {to_qubit} is not in |0> (P1={np.max(p1):.3g})")
    state = apply_gate(state, Gate("SWAP", (from_qubit, to_qubit)))
    return cross(state, to_qubit, ledger, noise, as_generator(rng), f"{from_qubit}->{to_qubit}")


def _prep(p, n: int) -> StateVector:
    if isinstance(p, StateVector):
        st = p
    elif isinstance(p, Circuit):
        st = prepare(p)
    else:
        raise TypeError(f"expected Circuit or StateVector, got {type(p).__name__}")
    if st.num_qubits != n or st.batched:
        raise ValueError(f"preparation acts on {st.num_qubits} qubits, expected {n}")
    return st


def initial_state(prep_a, prep_b, n: int, scheme: str, max_qubits: int = MAX_QUBITS) -> StateVector:
    pair = NodePair(n, scheme)
    if pair.num_qubits > max_qubits:
        raise QubitRangeError(f"{scheme} with n={n} needs {pair.num_qubits} qubits, cap is {max_qubits}")
    parts = [_prep(prep_a, n), _prep(prep_b, n)]
    if pair.num_ancillas:
        parts.append(new_zero_state(pair.num_ancillas))
    return tensor(*parts)


def _read_pair(state, qa, qb, budget, rng):
    """Measure ``(qa, qb)``; one readout record of fidelity ``f_readout`` shared by both bits."""
    raw, state = measure(state, [qa, qb], rng)
    f_bit = 1.0 if budget is None else float(np.sqrt(budget.f_readout))
    read = nz.flip_readout(raw, f_bit, rng)
    return read, np.any(read != raw, axis=1), state


def run_chunked(shots: int, dim: int, fn: Callable[[int, np.random.Generator], TrialBatch],
                rng=None, chunk_elements: int = CHUNK_ELEMENTS) -> TrialBatch:
    """Run ``fn(chunk_shots, generator)`` over shot chunks and merge the batches."""
    if shots < 1:
        raise ValueError("shots must be positive")
    g = as_generator(rng)
    size = max(1, chunk_elements // dim)
    parts = []
    done = 0
    while done < shots:
        k = min(size, shots - done)
        parts.append(fn(k, g))
        done += k
    return TrialBatch.concat(parts)


def _gate(state, gate, budget, rng):
    if budget is None:
        return apply_gate(state, gate)
    return nz.noisy_gate(state, gate, budget.f_gate, rng)


def run_s1(prep_a, prep_b, n: int, shots: int, noise: nz.NoiseBudget | None = None, rng=None,
           return_qubits: bool = True, max_qubits: int = MAX_QUBITS) -> TrialBatch:
    """Distributed SWAP test: node A's qubits visit node B's storage one at a time.

    Without return, the used storage content is parked in the (now empty)
    slot of the qubit that left node A and excluded from further noise; it is
    never touched again, which is equivalent to discarding it.
    """
    pair = NodePair(n, "S1")
    init = initial_state(prep_a, prep_b, n, "S1", max_qubits)
    budget = None if noise is None or noise.is_ideal else noise
    st, op = pair.storage, pair.operational

    def shot_chunk(m, g):
        ledger = ChannelLedger()
        state = init if budget is None else init.expand(m)
        state = apply_gate(state, Gate("H", (op,)))
        live = list(range(2 * n)) + [op]
        for k in range(n):
            state = transmit(state, pair.a(k), st, ledger, budget, g)
            state = _gate(state, Gate("CSWAP", (op, st, pair.b(k))), budget, g)
            if return_qubits:
                state = transmit(state, st, pair.a(k), ledger, budget, g)
            else:
                state = apply_gate(state, Gate("SWAP", (st, pair.a(k))))
                live.remove(pair.a(k))
            if budget is not None:
                state = nz.idle_decay(state, live, budget, g)
        state = apply_gate(state, Gate("H", (op,)))
        if state.batch_size == 1 and budget is None:
            bits = sample(state, [op], m, g)[:, 0]
            return TrialBatch.from_swap(bits, None, ledger.uses)
        raw, _ = measure(state, [op], g)
        f_r = 1.0 if budget is None else budget.f_readout
        bits = nz.flip_readout(raw[:, 0], f_r, g)
        return TrialBatch.from_swap(bits, state.faults + (bits != raw[:, 0]), ledger.uses)

    if budget is None:
        return shot_chunk(shots, as_generator(rng))
    return run_chunked(shots, 2**pair.num_qubits, shot_chunk, rng)


def run_s2(prep_a, prep_b, n: int, shots: int, noise: nz.NoiseBudget | None = None, rng=None,
           max_qubits: int = MAX_QUBITS) -> TrialBatch:
    """Distributed Bell-basis test: each A qubit is sent once into B's storage and
    measured there jointly with its partner."""
    pair = NodePair(n, "S2")
    init = initial_state(prep_a, prep_b, n, "S2", max_qubits)
    budget = None if noise is None or noise.is_ideal else noise
    st = pair.storage

    def shot_chunk(m, g):
        ledger = ChannelLedger()
        state = init.expand(m)
        b = np.zeros((m, n), dtype=np.int8)
        c = np.zeros((m, n), dtype=np.int8)
        flips = np.zeros(m, dtype=np.int64)
        live = list(range(2 * n))
        for k in range(n):
            state = transmit(state, pair.a(k), st, ledger, budget, g)
            state = _gate(state, Gate("CNOT", (pair.b(k), st)), budget, g)
            state = apply_gate(state, Gate("H", (pair.b(k),)))
            read, flipped, state = _read_pair(state, st, pair.b(k), budget, g)
            b[:, k], c[:, k] = read[:, 0], read[:, 1]
            flips += flipped
            # reset acts on the true post-measurement value, not the noisy readout
            state = reset(state, st, qubit_probability(state, st) > 0.5)
            live = [q for q in live if q not in (pair.a(k), pair.b(k))]
            if budget is not None:
                state = nz.idle_decay(state, live, budget, g)
        return TrialBatch.from_bell(b, c, state.faults + flips, ledger.uses)

    return run_chunked(shots, 2**pair.num_qubits, shot_chunk, rng)


def run_s3(prep_a, prep_b, n: int, shots: int, noise: nz.NoiseBudget | None = None, rng=None,
           max_qubits: int = MAX_QUBITS) -> TrialBatch:
    """Flying-qubit scheme: each A qubit travels to B, takes part in a remote
    CNOT built from a CPHASE between local Hadamards, and travels back."""
    pair = NodePair(n, "S3")
    init = initial_state(prep_a, prep_b, n, "S3", max_qubits)
    budget = None if noise is None or noise.is_ideal else noise

    def shot_chunk(m, g):
        ledger = ChannelLedger()
        state = init.expand(m)
        b = np.zeros((m, n), dtype=np.int8)
        c = np.zeros((m, n), dtype=np.int8)
        flips = np.zeros(m, dtype=np.int64)
        live = list(range(2 * n))
        for k in range(n):
            fly, stay = pair.a(k), pair.b(k)
            state = cross(state, fly, ledger, budget, g, f"{fly}->B")
            state = apply_gate(state, Gate("H", (fly,)))
            state = _gate(state, Gate("CZ", (stay, fly)), budget, g)
            state = apply_gate(state, Gate("H", (fly,)))
            state = cross(state, fly, ledger, budget, g, f"B->{fly}")
            state = apply_gate(state, Gate("H", (stay,)))
            read, flipped, state = _read_pair(state, fly, stay, budget, g)
            b[:, k], c[:, k] = read[:, 0], read[:, 1]
            flips += flipped
            live = [q for q in live if q not in (fly, stay)]
            if budget is not None:
                state = nz.idle_decay(state, live, budget, g)
        return TrialBatch.from_bell(b, c, state.faults + flips, ledger.uses)

    return run_chunked(shots, 2**pair.num_qubits, shot_chunk, rng)


RUNNERS = {"S1": run_s1, "S2": run_s2, "S3": run_s3}


def records_to_jsonl(batch: TrialBatch) -> str:
    """One JSON object per shot, newline separated."""
    return batch.to_jsonl()
