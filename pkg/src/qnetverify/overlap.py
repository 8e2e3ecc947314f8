"""Single-device overlap tests: the ancilla SWAP test and the destructive
Bell-basis test, with their pass/fail decision rules."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from collections.abc import Sequence
from typing import Iterable

import numpy as np

from . import noise as nz
from .simcore import (
    MAX_QUBITS,
    Gate,
    QubitRangeError,
    StateVector,
    apply_gate,
    as_generator,
    measure,
    sample,
    tensor,
)

# two-qubit gate count of one cSWAP block in the Toffoli decomposition
CSWAP_TWO_QUBIT_COST = 5


@dataclass(slots=True)
class TrialRecord:
    """One shot of an overlap test."""

    verdict: str
    ancilla_bit: int | None = None
    bitstrings: tuple[str, str] | None = None
    channel_uses: int = 0
    faults: int = 0

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    @property
    def success(self) -> bool:
        """Passed with no error event anywhere in the trajectory."""
        return self.passed and self.faults == 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


class TrialBatch(Sequence):
    """Array-backed outcome of many shots; indexes and iterates as :class:`TrialRecord`.

    ``b_bits``/``c_bits`` hold the psi-side and psi_tilde-side strings of a
    Bell-type test; ``ancilla_bits`` the SWAP-test ancilla readout.
    """

    def __init__(self, passed, faults=None, channel_uses: int = 0,
                 ancilla_bits=None, b_bits=None, c_bits=None):
        self.passed = np.asarray(passed, dtype=bool)
        m = len(self.passed)
        self.faults = np.zeros(m, dtype=np.int64) if faults is None else np.asarray(faults, dtype=np.int64)
        self.channel_uses = int(channel_uses)
        self.ancilla_bits = None if ancilla_bits is None else np.asarray(ancilla_bits, dtype=np.int8)
        self.b_bits = None if b_bits is None else np.asarray(b_bits, dtype=np.int8)
        self.c_bits = None if c_bits is None else np.asarray(c_bits, dtype=np.int8)

    @classmethod
    def from_swap(cls, anc, faults=None, channel_uses=0) -> TrialBatch:
        anc = np.asarray(anc, dtype=np.int8)
        return cls(anc == 0, faults, channel_uses, ancilla_bits=anc)

    @classmethod
    def from_bell(cls, b, c, faults=None, channel_uses=0) -> TrialBatch:
        b = np.asarray(b, dtype=np.int8)
        c = np.asarray(c, dtype=np.int8)
        return cls(_parity_pass(b, c), faults, channel_uses, b_bits=b, c_bits=c)

    @classmethod
    def concat(cls, batches: Sequence[TrialBatch]) -> TrialBatch:
        uses = {bt.channel_uses for bt in batches}
        if len(uses) != 1:
            raise ValueError(f"cannot merge batches with channel uses {sorted(uses)}")

        def cat(attr):
            parts = [getattr(bt, attr) for bt in batches]
            return None if parts[0] is None else np.concatenate(parts)

        return cls(cat("passed"), cat("faults"), uses.pop(), cat("ancilla_bits"),
                   cat("b_bits"), cat("c_bits"))

    def __len__(self) -> int:
        return len(self.passed)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        anc = None if self.ancilla_bits is None else int(self.ancilla_bits[i])
        strings = None if self.b_bits is None else (_bitstring(self.b_bits[i]), _bitstring(self.c_bits[i]))
        return TrialRecord("pass" if self.passed[i] else "fail", anc, strings,
                           self.channel_uses, int(self.faults[i]))

    @property
    def pass_count(self) -> int:
        return int(self.passed.sum())

    @property
    def success(self) -> np.ndarray:
        return self.passed & (self.faults == 0)

    def pass_rate(self) -> float:
        return float(self.passed.mean())

    def to_jsonl(self) -> str:
        return "".join(r.to_json() + "\n" for r in self)


def parity_verdict(b_bits: Sequence[int], c_bits: Sequence[int]) -> str:
    """Pass iff the bitwise AND of the two strings has even parity."""
    p = sum(int(b) & int(c) for b, c in zip(b_bits, c_bits, strict=True))
    return "pass" if p % 2 == 0 else "fail"


def _parity_pass(b: np.ndarray, c: np.ndarray) -> np.ndarray:
    return (np.sum(b & c, axis=-1) % 2) == 0


def _bitstring(bits) -> str:
    return "".join(str(int(x)) for x in bits)


def _check_pair(psi: StateVector, psi_tilde: StateVector, extra: int, max_qubits: int):
    if psi.num_qubits != psi_tilde.num_qubits:
        raise ValueError(f"register sizes differ: {psi.num_qubits} vs {psi_tilde.num_qubits}")
    total = 2 * psi.num_qubits + extra
    if total > max_qubits:
        raise QubitRangeError(f"test needs {total} qubits, cap is {max_qubits}")


def run_swap_test(psi: StateVector, psi_tilde: StateVector, shots: int,
                  noise: nz.NoiseBudget | None = None, rng=None,
                  max_qubits: int = MAX_QUBITS, gate_mode: str = "block") -> TrialBatch:
    """``shots`` repetitions of the ancilla SWAP test.

    Layout: ``psi`` on qubits ``0..n-1``, ``psi_tilde`` on ``n..2n-1``,
    ancilla on ``2n``.  Pass iff the ancilla reads 0.  With
    ``gate_mode="elementary"`` each cSWAP block is charged one ``f_gate``
    twirl per two-qubit gate of its decomposition instead of one per block.
    """
    if gate_mode not in ("block", "elementary"):
        raise ValueError(f"unknown gate mode {gate_mode!r}")
    _check_pair(psi, psi_tilde, 1, max_qubits)
    g = as_generator(rng)
    n = psi.num_qubits
    anc = 2 * n
    state = tensor(psi, psi_tilde, StateVector(np.array([1, 0]), 1))
    if noise is None or noise.is_ideal:
        state = _swap_circuit(state, n)
        bits = sample(state, [anc], shots, g)[:, 0]
        return TrialBatch.from_swap(bits)
    state = apply_gate(state.expand(shots), Gate("H", (anc,)))
    for i in range(n):
        if gate_mode == "block":
            state = nz.noisy_gate(state, Gate("CSWAP", (anc, i, n + i)), noise.f_gate, g)
        else:
            state = apply_gate(state, Gate("CSWAP", (anc, i, n + i)))
            for _ in range(CSWAP_TWO_QUBIT_COST):
                state = nz.pauli_twirl(state, (anc, i, n + i), 1 - noise.f_gate, g)
        state = nz.idle_decay(state, range(2 * n + 1), noise, g)
    state = apply_gate(state, Gate("H", (anc,)))
    raw, _ = measure(state, [anc], g)
    bits = nz.flip_readout(raw[:, 0], noise.f_readout, g)
    faults = state.faults + (bits != raw[:, 0])
    return TrialBatch.from_swap(bits, faults)


def _swap_circuit(state: StateVector, n: int) -> StateVector:
    anc = 2 * n
    state = apply_gate(state, Gate("H", (anc,)))
    for i in range(n):
        state = apply_gate(state, Gate("CSWAP", (anc, i, n + i)))
    return apply_gate(state, Gate("H", (anc,)))


def _bell_circuit(state: StateVector, n: int) -> StateVector:
    for i in range(n):
        state = apply_gate(state, Gate("CNOT", (n + i, i)))
        state = apply_gate(state, Gate("H", (n + i,)))
    return state


def run_bell_test(psi: StateVector, psi_tilde: StateVector, shots: int,
                  noise: nz.NoiseBudget | None = None, rng=None,
                  max_qubits: int = MAX_QUBITS) -> TrialBatch:
    """``shots`` repetitions of the destructive Bell-basis overlap test.

    For each pair: CNOT (control ``psi_tilde`` qubit i, target ``psi`` qubit i),
    H on the ``psi_tilde`` qubit, then read both.  ``bitstrings`` holds the
    ``psi``-side string B and the ``psi_tilde``-side string C.
    """
    _check_pair(psi, psi_tilde, 0, max_qubits)
    g = as_generator(rng)
    n = psi.num_qubits
    state = tensor(psi, psi_tilde)
    if noise is None or noise.is_ideal:
        state = _bell_circuit(state, n)
        bits = sample(state, list(range(2 * n)), shots, g)
        return TrialBatch.from_bell(bits[:, :n], bits[:, n:])
    state = state.expand(shots)
    b = np.zeros((shots, n), dtype=np.int8)
    c = np.zeros((shots, n), dtype=np.int8)
    f_bit = np.sqrt(noise.f_readout)
    flips = np.zeros(shots, dtype=np.int64)
    live = list(range(2 * n))
    for i in range(n):
        state = apply_gate(state, Gate("CNOT", (n + i, i)))
        state = nz.noisy_gate(state, Gate("H", (n + i,)), 1.0, g)
        state = nz.pauli_twirl(state, (i, n + i), 1 - noise.f_gate, g)
        raw, state = measure(state, [i, n + i], g)
        read = nz.flip_readout(raw, f_bit, g)
        flips += np.any(read != raw, axis=1)
        b[:, i], c[:, i] = read[:, 0], read[:, 1]
        live = [q for q in live if q not in (i, n + i)]
        state = nz.idle_decay(state, live, noise, g)
    return TrialBatch.from_bell(b, c, state.faults + flips)


def swap_test_shot(psi, psi_tilde, noise=None, rng=None) -> TrialRecord:
    return run_swap_test(psi, psi_tilde, 1, noise, rng)[0]


def bell_test_shot(psi, psi_tilde, noise=None, rng=None) -> TrialRecord:
    return run_bell_test(psi, psi_tilde, 1, noise, rng)[0]


def swap_test_pass_probability(psi: StateVector, psi_tilde: StateVector) -> float:
    """Exact noiseless P(ancilla = 0), read off the circuit's final amplitudes."""
    _check_pair(psi, psi_tilde, 1, MAX_QUBITS)
    n = psi.num_qubits
    state = _swap_circuit(tensor(psi, psi_tilde, StateVector(np.array([1, 0]), 1)), n)
    probs = np.abs(state.amplitudes) ** 2
    idx = np.arange(state.dim)
    return float(probs[((idx >> (2 * n)) & 1) == 0].sum())


def bell_test_pass_probability(psi: StateVector, psi_tilde: StateVector) -> float:
    """Exact noiseless probability of an even-parity AND string."""
    _check_pair(psi, psi_tilde, 0, MAX_QUBITS)
    n = psi.num_qubits
    state = _bell_circuit(tensor(psi, psi_tilde), n)
    probs = np.abs(state.amplitudes) ** 2
    idx = np.arange(state.dim)
    anded = (idx & ((1 << n) - 1)) & (idx >> n)
    even = np.array([bin(int(a)).count("1") % 2 == 0 for a in anded])
    return float(probs[even].sum())


def estimate_fidelity(records: Iterable[TrialRecord]) -> float:
    """F = 2 m_p / m - 1, unclamped."""
    m_p, m = count_passes(records)
    if m == 0:
        raise ValueError("no trial records")
    return 2 * m_p / m - 1


def count_passes(records: Iterable[TrialRecord]) -> tuple[int, int]:
    """(m_p, m) for a batch or any iterable of records."""
    if isinstance(records, TrialBatch):
        return records.pass_count, len(records)
    records = list(records)
    return sum(r.passed for r in records), len(records)
