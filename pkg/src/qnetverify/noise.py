"""Stochastic error channels, unravelled into pure-state trajectories.

Each channel acts row-wise on a batched :class:`StateVector` and bumps the
per-row ``faults`` counter whenever its error branch fires.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Literal, Sequence

import numpy as np

from .simcore import (
    Gate,
    StateVector,
    ZERO_PROB,
    _split,
    _check_qubits,
    apply_gate,
    apply_to_row_groups,
    as_generator,
    row_probability,
)

_PAULIS = ("I", "X", "Y", "Z")


@dataclass(frozen=True)
class NoiseBudget:
    """Error parameters of one protocol run.

    ``f_transfer`` is charged once per channel crossing, ``f_gate`` once per
    block, ``f_readout`` once per measurement record (the ancilla bit of a
    SWAP test, or the bit pair of one Bell-pair readout).  ``gamma * t_block``
    is the amplitude-damping exponent per block.  ``decay`` selects where idle
    decay is charged: ``"idle"`` damps every stationary data qubit and the
    operational ancilla at each block boundary, ``"transit"`` damps only the
    qubit that just crossed the channel.
    """

    f_transfer: float = 1.0
    gamma: float = 0.0
    t_block: float = 0.0
    f_gate: float = 1.0
    f_readout: float = 1.0
    decay: Literal["idle", "transit"] = "idle"

    def __post_init__(self):
        for name in ("f_transfer", "f_gate", "f_readout"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name}={v} outside (0, 1]")
        if self.gamma < 0 or self.t_block < 0:
            raise ValueError("gamma and t_block must be non-negative")
        if self.decay not in ("idle", "transit"):
            raise ValueError(f"unknown decay mode {self.decay!r}")

    @property
    def decay_exponent(self) -> float:
        return self.gamma * self.t_block

    @property
    def is_ideal(self) -> bool:
        return (self.f_transfer == 1 and self.f_gate == 1 and self.f_readout == 1
                and self.decay_exponent == 0)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> NoiseBudget:
        return cls(**d)


def _fire(state: StateVector, p: float, rng) -> np.ndarray:
    return np.nonzero(rng.random(state.batch_size) < p)[0]


def _with_faults(state: StateVector, rows: np.ndarray, inc: int = 1) -> StateVector:
    faults = state.faults.copy()
    np.add.at(faults, rows, inc)
    return StateVector(state.amplitudes, state.num_qubits, faults, state.index)


def _pauli_groups(rows: np.ndarray, qubit: int, choice: np.ndarray):
    return [(rows[choice == k], Gate(name, (qubit,))) for k, name in enumerate(_PAULIS) if name != "I"]


def apply_depolarizing(state: StateVector, qubit: int, p: float, rng=None) -> StateVector:
    """With probability ``p`` apply one of X, Y, Z (uniformly); otherwise identity."""
    if not 0 <= p <= 1:
        raise ValueError(f"depolarizing probability {p} outside [0, 1]")
    _check_qubits([qubit], state.num_qubits)
    if p == 0:
        return state
    g = as_generator(rng)
    rows = _fire(state, p, g)
    choice = g.integers(1, 4, size=len(rows))
    state = apply_to_row_groups(state, _pauli_groups(rows, qubit, choice))
    return _with_faults(state, rows)


def apply_amplitude_damping(state: StateVector, qubit: int, gamma: float, dt: float, rng=None) -> StateVector:
    """Quantum-jump unravelling of amplitude damping with decay probability ``1 - exp(-gamma dt)``.

    Jump rows (probability ``q * P(1)``) have their |1> component moved onto
    |0>; the remaining rows get the no-jump Kraus operator ``diag(1, sqrt(1-q))``
    and are renormalized.
    """
    if gamma < 0 or dt < 0:
        raise ValueError("gamma and dt must be non-negative")
    _check_qubits([qubit], state.num_qubits)
    q = -np.expm1(-gamma * dt)
    if q == 0:
        return state
    g = as_generator(rng)
    n = state.num_qubits
    p1 = row_probability(state, qubit)
    jump = g.random(state.batch_size) < q * p1[state.index]
    single = not state.batched
    st, parent, out = state.branch(jump)
    pp = p1[parent]
    v = _split(st.rows(), n, qubit).copy()
    j = np.nonzero(out == 1)[0]
    v[j, :, 0, :] = v[j, :, 1, :]
    v[j, :, 1, :] = 0
    v[:, :, 1, :] *= np.where(out == 1, 1.0, np.sqrt(1 - q))[:, None, None]
    norm = np.where(out == 1, pp, 1 - q * pp)
    scale = np.where(norm > ZERO_PROB, 1 / np.sqrt(np.maximum(norm, ZERO_PROB)), 0.0)
    v *= scale[:, None, None, None]
    rows = v.reshape(len(parent), 2**n)
    if single:
        out_state = StateVector(rows[0], n, state.faults.copy())
    else:
        out_state = StateVector(rows, n, state.faults.copy(), st.index)
    return _with_faults(out_state, np.nonzero(jump)[0])


def flip_readout(bits, f_readout: float, rng=None):
    """Flip each bit independently with probability ``1 - f_readout``."""
    if not 0 < f_readout <= 1:
        raise ValueError(f"readout fidelity {f_readout} outside (0, 1]")
    arr = np.asarray(bits, dtype=np.int8)
    if f_readout == 1:
        return int(arr) if arr.ndim == 0 else arr.copy()
    g = as_generator(rng)
    flips = (g.random(arr.shape) < 1 - f_readout).astype(np.int8)
    out = arr ^ flips
    return int(out) if out.ndim == 0 else out


def noisy_gate(state: StateVector, gate: Gate, f_gate: float, rng=None) -> StateVector:
    """Apply ``gate``, then with probability ``1 - f_gate`` a uniformly random
    Pauli (I, X, Y or Z independently) on each qubit the gate touches."""
    if not 0 < f_gate <= 1:
        raise ValueError(f"gate fidelity {f_gate} outside (0, 1]")
    state = apply_gate(state, gate)
    return pauli_twirl(state, gate.all_qubits, 1 - f_gate, rng)


def pauli_twirl(state: StateVector, qubits: Sequence[int], p: float, rng=None) -> StateVector:
    """With probability ``p`` apply an independent uniform Pauli to each of ``qubits``."""
    if p <= 0:
        return state
    g = as_generator(rng)
    rows = _fire(state, p, g)
    groups = []
    for q in qubits:
        choice = g.integers(0, 4, size=len(rows))
        groups += _pauli_groups(rows, q, choice)
    state = apply_to_row_groups(state, groups)
    return _with_faults(state, rows)


def idle_decay(state: StateVector, qubits: Sequence[int], budget: NoiseBudget, rng=None) -> StateVector:
    """One block of amplitude damping on each stationary qubit (``"idle"`` mode only)."""
    if budget.decay != "idle" or budget.decay_exponent == 0:
        return state
    for q in qubits:
        state = apply_amplitude_damping(state, q, budget.gamma, budget.t_block, rng)
    return state


def transit_decay(state: StateVector, qubit: int, budget: NoiseBudget, rng=None) -> StateVector:
    """Amplitude damping on a qubit that just crossed the channel (``"transit"`` mode only)."""
    if budget.decay != "transit" or budget.decay_exponent == 0:
        return state
    return apply_amplitude_damping(state, qubit, budget.gamma, budget.t_block, rng)
