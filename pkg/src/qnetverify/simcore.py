"""Dense state-vector engine.

Qubit ordering is little-endian: qubit ``q`` is bit ``q`` of the amplitude
index.  A :class:`StateVector` holds either a single state (1-D amplitudes)
or a batch of independent trajectories, one row per shot (2-D amplitudes).
Every operation acts row-wise, so protocols can run thousands of shots with
one array operation per gate.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

MAX_QUBITS = 26
NORM_TOL = 1e-10
ZERO_PROB = 1e-14

_SQ2 = 1 / np.sqrt(2)

_FIXED = {
    "I": np.eye(2, dtype=complex),
    "H": np.array([[1, 1], [1, -1]], dtype=complex) * _SQ2,
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    "S": np.array([[1, 0], [0, 1j]], dtype=complex),
    "SDAG": np.array([[1, 0], [0, -1j]], dtype=complex),
    "SWAP": np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex),
}

# gates that are a fixed base matrix plus implicit controls
_CONTROLLED = {"CNOT": ("X", 1), "CZ": ("Z", 1), "CSWAP": ("SWAP", 1), "TOFFOLI": ("X", 2)}


class QubitRangeError(ValueError):
    """Register size or qubit index outside the supported range."""


def _phase(phi):
    return np.array([[1, 0], [0, np.exp(1j * phi)]], dtype=complex)


def _rx(t):
    c, s = np.cos(t / 2), np.sin(t / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


def _ry(t):
    c, s = np.cos(t / 2), np.sin(t / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def _rz(t):
    return np.array([[np.exp(-0.5j * t), 0], [0, np.exp(0.5j * t)]], dtype=complex)


_PARAM = {"P": _phase, "RX": _rx, "RY": _ry, "RZ": _rz}


@dataclass(frozen=True)
class Gate:
    """A gate: a ``2^k x 2^k`` matrix on ordered ``targets`` (``k <= 3``).

    ``controls`` are extra qubits the matrix is conditioned on;
    ``control_values`` selects the control pattern (1 = ordinary control,
    0 = anti-control).  Named controlled gates list their controls first in
    ``qubits``: ``Gate("CNOT", (c, t))``, ``Gate("CSWAP", (c, a, b))``,
    ``Gate("TOFFOLI", (c1, c2, t))``, ``Gate("CPHASE", (a, b), (phi,))``.
    For a multi-qubit matrix, ``targets[0]`` is the most significant bit of
    the matrix index.
    """

    name: str
    qubits: tuple[int, ...]
    params: tuple[float, ...] = ()
    matrix: np.ndarray | None = field(default=None, compare=False)
    controls: tuple[int, ...] = ()
    control_values: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "name", self.name.upper())
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        object.__setattr__(self, "controls", tuple(int(q) for q in self.controls))
        if self.controls and not self.control_values:
            object.__setattr__(self, "control_values", (1,) * len(self.controls))
        if len(self.control_values) != len(self.controls):
            raise ValueError("control_values must match controls")
        if self.name == "U":
            if self.matrix is None:
                raise ValueError("arbitrary gate needs a matrix")
            m = np.asarray(self.matrix, dtype=complex)
            object.__setattr__(self, "matrix", m)
        base, targets, _, _ = self._resolve()
        k = len(targets)
        if k > 3:
            raise ValueError("gate matrices are capped at 3 qubits")
        if base.shape != (2**k, 2**k):
            raise ValueError(f"{self.name}: matrix shape {base.shape} does not fit {k} targets")
        if np.abs(base.conj().T @ base - np.eye(2**k)).max() > NORM_TOL:
            raise ValueError(f"{self.name}: matrix is not unitary")
        allq = self.all_qubits
        if len(set(allq)) != len(allq):
            raise ValueError(f"{self.name}: repeated qubit in {allq}")

    def _resolve(self):
        """Return (base matrix, targets, controls, control values)."""
        name = self.name
        if name in _FIXED:
            base, nctl = _FIXED[name], 0
        elif name in _PARAM:
            base, nctl = _PARAM[name](*self.params), 0
        elif name in _CONTROLLED:
            key, nctl = _CONTROLLED[name]
            base = _FIXED[key]
        elif name == "CPHASE":
            base, nctl = _phase(self.params[0] if self.params else np.pi), 1
        elif name == "U":
            base, nctl = self.matrix, 0
        else:
            raise ValueError(f"unknown gate {name!r}")
        ctl = self.qubits[:nctl] + self.controls
        vals = (1,) * nctl + self.control_values
        return base, self.qubits[nctl:], ctl, vals

    @property
    def all_qubits(self) -> tuple[int, ...]:
        return self.qubits + self.controls

    @property
    def targets(self) -> tuple[int, ...]:
        return self._resolve()[1]

    def unitary(self) -> np.ndarray:
        """Dense matrix on ``all_qubits`` in little-endian order."""
        qs = self.all_qubits
        return circuit_unitary([self.remap({q: i for i, q in enumerate(qs)})], len(qs))

    def inverse(self) -> Gate:
        base, targets, ctl, vals = self._resolve()
        inv = base.conj().T
        return Gate("U", targets, matrix=inv, controls=ctl, control_values=vals)

    def remap(self, mapping) -> Gate:
        """Relabel qubits through ``mapping`` (dict or callable)."""
        f = mapping if callable(mapping) else mapping.__getitem__
        return Gate(self.name, tuple(f(q) for q in self.qubits), self.params, self.matrix,
                    tuple(f(q) for q in self.controls), self.control_values)

    def controlled(self, control: int, value: int = 1) -> Gate:
        return Gate(self.name, self.qubits, self.params, self.matrix,
                    self.controls + (control,), self.control_values + (value,))


@dataclass
class Circuit:
    """An ordered gate list on ``num_qubits`` qubits."""

    num_qubits: int
    gates: list[Gate] = field(default_factory=list)
    label: str = ""

    def __post_init__(self):
        for g in self.gates:
            for q in g.all_qubits:
                if not 0 <= q < self.num_qubits:
                    raise QubitRangeError(f"gate {g.name} touches qubit {q} outside 0..{self.num_qubits - 1}")

    def append(self, gate: Gate) -> Circuit:
        self.gates.append(gate)
        self.__post_init__()
        return self

    def __add__(self, other: Circuit) -> Circuit:
        """Run ``self`` then ``other``."""
        n = max(self.num_qubits, other.num_qubits)
        return Circuit(n, self.gates + other.gates, self.label or other.label)

    def __len__(self):
        return len(self.gates)

    def inverse(self) -> Circuit:
        return Circuit(self.num_qubits, [g.inverse() for g in reversed(self.gates)], self.label)

    def shifted(self, offset: int, num_qubits: int | None = None) -> Circuit:
        """The same circuit acting on qubits ``offset .. offset + n - 1``."""
        total = num_qubits if num_qubits is not None else self.num_qubits + offset
        return Circuit(total, [g.remap(lambda q: q + offset) for g in self.gates], self.label)

    def controlled(self, control: int, value: int = 1, num_qubits: int | None = None) -> Circuit:
        """Every gate conditioned on ``control`` (which must lie outside the circuit)."""
        total = num_qubits if num_qubits is not None else max(self.num_qubits, control + 1)
        return Circuit(total, [g.controlled(control, value) for g in self.gates], self.label)

    def unitary(self) -> np.ndarray:
        return circuit_unitary(self.gates, self.num_qubits)


def circuit_unitary(gates: Iterable[Gate], num_qubits: int) -> np.ndarray:
    """Dense unitary of a gate sequence, built column by column."""
    d = 2**num_qubits
    cols = apply_gates(StateVector(np.eye(d, dtype=complex), num_qubits), gates)
    return cols.amplitudes.T.copy()


@dataclass(eq=False)
class StateVector:
    """Amplitudes over ``num_qubits`` qubits, optionally batched over shots.

    A batch stores distinct amplitude rows in ``amplitudes`` (shape
    ``(U, 2^n)``) and maps each shot to its row through ``index``
    (length = number of shots).  Shots only diverge at stochastic events, so
    ``U`` usually stays far below the shot count and gates cost ``O(U 2^n)``.
    ``faults`` counts stochastic error events per shot; noise channels
    increment it when their error branch fires.
    """

    amplitudes: np.ndarray
    num_qubits: int
    faults: np.ndarray | None = None
    index: np.ndarray | None = None

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape[-1] != 2**self.num_qubits or self.amplitudes.ndim > 2:
            raise ValueError(f"amplitude array of shape {self.amplitudes.shape} "
                             f"does not describe {self.num_qubits} qubits")
        if self.index is None:
            self.index = np.arange(self.amplitudes.shape[0] if self.amplitudes.ndim == 2 else 1)
        if self.faults is None:
            self.faults = np.zeros(len(self.index), dtype=np.int64)

    @property
    def batched(self) -> bool:
        return self.amplitudes.ndim == 2

    @property
    def batch_size(self) -> int:
        return len(self.index)

    @property
    def num_rows(self) -> int:
        return self.amplitudes.shape[0] if self.batched else 1

    @property
    def dim(self) -> int:
        return 2**self.num_qubits

    def rows(self) -> np.ndarray:
        """Distinct amplitude rows as a ``(U, 2^n)`` view."""
        return self.amplitudes.reshape(-1, self.dim)

    def shot_rows(self) -> np.ndarray:
        """One amplitude row per shot (materialized)."""
        return self.rows()[self.index]

    def _like(self, rows: np.ndarray, faults: np.ndarray | None = None,
              index: np.ndarray | None = None) -> StateVector:
        amps = rows if self.batched else rows.reshape(self.dim)
        return StateVector(amps, self.num_qubits,
                           self.faults.copy() if faults is None else faults,
                           self.index if index is None else index)

    def expand(self, shots: int) -> StateVector:
        """Replicate a single state into ``shots`` independent trajectories."""
        if self.batched:
            if self.batch_size == shots:
                return self
            if self.batch_size != 1:
                raise ValueError("can only expand a single state")
        return StateVector(self.rows().copy(), self.num_qubits, np.repeat(self.faults, shots),
                           np.zeros(shots, dtype=np.int64))

    def compact(self) -> StateVector:
        """Drop rows no shot refers to."""
        used, inv = np.unique(self.index, return_inverse=True)
        if len(used) == self.num_rows:
            return self
        return StateVector(self.rows()[used], self.num_qubits, self.faults, inv.astype(np.int64))

    def branch(self, outcome: np.ndarray) -> tuple[StateVector, np.ndarray, np.ndarray]:
        """Regroup shots by ``(row, outcome)``.

        Returns ``(state, row_of_group, outcome_of_group)`` where ``state`` has
        one row per distinct pair (copied from the parent row, not yet
        modified) and shots re-indexed onto it.
        """
        outcome = np.asarray(outcome, dtype=np.int64)
        width = int(outcome.max()) + 1 if outcome.size else 1
        codes = self.index * width + outcome
        uniq, inv = np.unique(codes, return_inverse=True)
        parent, out = uniq // width, uniq % width
        st = StateVector(self.rows()[parent], self.num_qubits, self.faults, inv.astype(np.int64))
        return st, parent, out

    def norms(self) -> np.ndarray:
        return np.sqrt(np.sum(np.abs(self.shot_rows()) ** 2, axis=1))

    def probabilities(self) -> np.ndarray:
        if not self.batched:
            return np.abs(self.amplitudes) ** 2
        return np.abs(self.shot_rows()) ** 2

    def copy(self) -> StateVector:
        return StateVector(self.amplitudes.copy(), self.num_qubits, self.faults.copy(), self.index.copy())


def new_zero_state(num_qubits: int, max_qubits: int = MAX_QUBITS) -> StateVector:
    if not 1 <= num_qubits <= max_qubits:
        raise QubitRangeError(f"register size {num_qubits} outside 1..{max_qubits}")
    amps = np.zeros(2**num_qubits, dtype=complex)
    amps[0] = 1.0
    return StateVector(amps, num_qubits)


def from_amplitudes(amplitudes: Sequence[complex], normalize: bool = True) -> StateVector:
    amps = np.asarray(amplitudes, dtype=complex)
    n = int(round(np.log2(amps.shape[-1])))
    if 2**n != amps.shape[-1]:
        raise ValueError("amplitude length must be a power of two")
    if normalize:
        amps = amps / np.linalg.norm(amps, axis=-1, keepdims=True)
    return StateVector(amps, n)


def tensor(*states: StateVector) -> StateVector:
    """Product state; the first argument occupies the lowest qubit indices."""
    if any(s.batched for s in states):
        raise ValueError("tensor expects single states")
    amps = reduce(lambda acc, s: np.kron(s.amplitudes, acc), states[1:], states[0].amplitudes)
    return StateVector(amps, sum(s.num_qubits for s in states))


def prepare(circuit: Circuit) -> StateVector:
    """Run ``circuit`` on ``|0...0>``."""
    return apply_gates(new_zero_state(circuit.num_qubits), circuit.gates)


def random_state(num_qubits: int, rng=None) -> StateVector:
    """Haar-random pure state."""
    g = as_generator(rng)
    v = g.normal(size=2**num_qubits) + 1j * g.normal(size=2**num_qubits)
    return from_amplitudes(v)


def _axis(q: int, n: int) -> int:
    # axis 0 is the batch axis
    return 1 + (n - 1 - q)


def _check_qubits(qubits: Sequence[int], n: int):
    for q in qubits:
        if not 0 <= q < n:
            raise QubitRangeError(f"qubit {q} outside register of {n}")
    if len(set(qubits)) != len(qubits):
        raise QubitRangeError(f"repeated qubit in {tuple(qubits)}")


def _split(rows: np.ndarray, n: int, q: int) -> np.ndarray:
    """Contiguous ``(B, hi, 2, lo)`` view of ``rows`` exposing qubit ``q``."""
    return rows.reshape(rows.shape[0], 2 ** (n - 1 - q), 2, 2**q)


_MONO_CACHE: dict = {}
_MONO_MAX_QUBITS = 20


def _monomial_map(base: np.ndarray, targets, controls, values, n: int):
    """Index gather and phases for a gate whose matrix has one nonzero per row.

    Returns ``(src, phase)`` with ``new[:, i] = phase[i] * old[:, src[i]]``,
    or ``None`` if the matrix is not monomial.
    """
    nz_mask = np.abs(base) > NORM_TOL
    if not np.all(nz_mask.sum(axis=1) == 1):
        return None
    key = (base.tobytes(), tuple(targets), tuple(controls), tuple(values), n)
    hit = _MONO_CACHE.get(key)
    if hit is not None:
        return hit
    k = len(targets)
    col = np.argmax(nz_mask, axis=1)
    val = base[np.arange(2**k), col]
    idx = np.arange(2**n, dtype=np.int64)
    active = np.ones(2**n, dtype=bool)
    for c, v in zip(controls, values):
        active &= ((idx >> c) & 1) == v
    row = np.zeros(2**n, dtype=np.int64)
    for j, t in enumerate(targets):
        row |= ((idx >> t) & 1) << (k - 1 - j)
    src = idx.copy()
    for j, t in enumerate(targets):
        bit = (col[row] >> (k - 1 - j)) & 1
        src = (src & ~(1 << t)) | (bit << t)
    src = np.where(active, src, idx)
    phase = np.where(active, val[row], 1.0 + 0j)
    out = (src, None if np.allclose(phase, 1.0) else phase)
    if n <= _MONO_MAX_QUBITS:
        if len(_MONO_CACHE) > 512:
            _MONO_CACHE.clear()
        _MONO_CACHE[key] = out
    return out


def _apply_matrix(rows: np.ndarray, n: int, matrix: np.ndarray, targets: Sequence[int],
                  controls: Sequence[int] = (), values: Sequence[int] = ()) -> np.ndarray:
    """Return ``rows`` (shape ``(B, 2^n)``) with ``matrix`` applied; does not modify input."""
    b = rows.shape[0]
    mono = _monomial_map(matrix, targets, controls, values, n)
    if mono is not None:
        src, phase = mono
        out = rows[:, src]
        if phase is not None:
            out *= phase
        return out
    if len(targets) == 1 and not controls:
        v = _split(rows, n, targets[0])
        out = np.empty_like(v)
        x0, x1 = v[:, :, 0, :], v[:, :, 1, :]
        out[:, :, 0, :] = matrix[0, 0] * x0 + matrix[0, 1] * x1
        out[:, :, 1, :] = matrix[1, 0] * x0 + matrix[1, 1] * x1
        return out.reshape(b, 2**n)
    psi = rows.reshape((b,) + (2,) * n).copy()
    if controls:
        idx = [slice(None)] * (n + 1)
        for c, v in zip(controls, values):
            idx[_axis(c, n)] = v
        idx = tuple(idx)
        sub = psi[idx]
        removed = sorted(_axis(c, n) for c in controls)
        tax = [_axis(t, n) for t in targets]
        tax = [a - sum(1 for r in removed if r < a) for a in tax]
        psi[idx] = _matmul_axes(sub, matrix, tax)
    else:
        psi = _matmul_axes(psi, matrix, [_axis(t, n) for t in targets])
    return psi.reshape(b, 2**n)


def _matmul_axes(psi: np.ndarray, matrix: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    k = len(axes)
    dest = list(range(psi.ndim - k, psi.ndim))
    moved = np.moveaxis(psi, axes, dest)
    shape = moved.shape
    out = moved.reshape(-1, 2**k) @ matrix.T
    return np.moveaxis(out.reshape(shape), dest, axes)


def apply_gate(state: StateVector, gate: Gate) -> StateVector:
    _check_qubits(gate.all_qubits, state.num_qubits)
    base, targets, ctl, vals = gate._resolve()
    rows = _apply_matrix(state.rows(), state.num_qubits, base, targets, ctl, vals)
    return state._like(rows)


def apply_gates(state: StateVector, gates: Iterable[Gate]) -> StateVector:
    for g in gates:
        state = apply_gate(state, g)
    return state


def apply_circuit(state: StateVector, circuit: Circuit) -> StateVector:
    return apply_gates(state, circuit.gates)


def apply_to_rows(state: StateVector, rows: np.ndarray, gate: Gate) -> StateVector:
    """Apply ``gate`` only to the trajectories selected by the index array ``rows``."""
    return apply_to_row_groups(state, [(rows, gate)])


def apply_to_row_groups(state: StateVector, groups: Iterable[tuple[np.ndarray, Gate]]) -> StateVector:
    """Apply each ``(shots, gate)`` pair to its own subset of shots.

    Shot subsets may overlap; gates are applied in list order.
    """
    groups = [(np.asarray(r, dtype=np.int64), g) for r, g in groups if len(r)]
    if not groups:
        return state
    for _, gate in groups:
        _check_qubits(gate.all_qubits, state.num_qubits)
    if not state.batched:
        rows = state.rows()
        for _, gate in groups:
            base, targets, ctl, vals = gate._resolve()
            rows = _apply_matrix(rows, state.num_qubits, base, targets, ctl, vals)
        return state._like(rows)
    # encode, per shot, which groups touch it; shots with equal (row, pattern) share a row
    pattern = np.zeros(state.batch_size, dtype=np.int64)
    for k, (r, _) in enumerate(groups):
        pattern[r] |= 1 << k
    if len(groups) > 60:
        raise ValueError("too many gate groups in one call")
    st, parent, pat = state.branch(pattern)
    rows = st.rows().copy()
    for k, (_, gate) in enumerate(groups):
        sel = np.nonzero((pat >> k) & 1)[0]
        if len(sel):
            base, targets, ctl, vals = gate._resolve()
            rows[sel] = _apply_matrix(rows[sel], state.num_qubits, base, targets, ctl, vals)
    return StateVector(rows, state.num_qubits, state.faults.copy(), st.index)


def row_probability(state: StateVector, qubit: int) -> np.ndarray:
    """Probability of reading 1 on ``qubit`` for each distinct row."""
    n = state.num_qubits
    _check_qubits([qubit], n)
    ones = _split(state.rows(), n, qubit)[:, :, 1, :]
    return np.einsum("bij,bij->b", ones.real, ones.real) + np.einsum("bij,bij->b", ones.imag, ones.imag)


def qubit_probability(state: StateVector, qubit: int) -> np.ndarray:
    """Per-shot probability of reading 1 on ``qubit``."""
    return row_probability(state, qubit)[state.index]


def _project(rows: np.ndarray, n: int, qubit: int, bits: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Collapse ``qubit`` of each row onto ``bits`` and renormalize."""
    v = _split(rows, n, qubit).copy()
    p_out = np.where(bits == 1, probs, 1 - probs)
    scale = np.where(p_out > ZERO_PROB, 1 / np.sqrt(np.maximum(p_out, ZERO_PROB)), 0.0)
    keep0 = np.where(bits == 0, scale, 0.0)[:, None, None]
    keep1 = np.where(bits == 1, scale, 0.0)[:, None, None]
    v[:, :, 0, :] *= keep0
    v[:, :, 1, :] *= keep1
    return v.reshape(rows.shape[0], 2**n)


def measure(state: StateVector, qubits: Sequence[int], rng=None) -> tuple[np.ndarray, StateVector]:
    """Computational-basis measurement with eager collapse.

    Returns ``(bits, post_state)``; ``bits`` has shape ``(len(qubits),)`` for a
    single state and ``(batch, len(qubits))`` for a batch.
    """
    g = as_generator(rng)
    _check_qubits(qubits, state.num_qubits)
    single = not state.batched
    bits = np.zeros((state.batch_size, len(qubits)), dtype=np.int8)
    for j, q in enumerate(qubits):
        p1 = np.clip(row_probability(state, q), 0.0, 1.0)
        p1 = np.where(p1 < ZERO_PROB, 0.0, np.where(p1 > 1 - ZERO_PROB, 1.0, p1))
        b = (g.random(state.batch_size) < p1[state.index]).astype(np.int8)
        bits[:, j] = b
        st, parent, out = state.branch(b)
        rows = _project(st.rows(), state.num_qubits, q, out, p1[parent])
        state = StateVector(rows, state.num_qubits, state.faults.copy(), st.index)
    if single:
        return bits[0], StateVector(state.rows()[0], state.num_qubits, state.faults)
    return bits, state


def reset(state: StateVector, qubit: int, bits: np.ndarray) -> StateVector:
    """Return ``qubit`` to |0> given the bit it was just measured in (conditional X)."""
    rows = np.nonzero(np.atleast_1d(bits))[0]
    return apply_to_rows(state, rows, Gate("X", (qubit,)))


def sample(state: StateVector, qubits: Sequence[int], shots: int, rng=None) -> np.ndarray:
    """Draw ``shots`` terminal readouts of ``qubits`` from a single state."""
    if state.batched:
        raise ValueError("sample expects a single state")
    _check_qubits(qubits, state.num_qubits)
    g = as_generator(rng)
    probs = np.abs(state.amplitudes) ** 2
    probs = probs / probs.sum()
    idx = g.choice(state.dim, size=shots, p=probs)
    return np.stack([(idx >> q) & 1 for q in qubits], axis=1).astype(np.int8)


def overlap(a: StateVector, b: StateVector) -> complex:
    """<a|b>."""
    if a.num_qubits != b.num_qubits:
        raise ValueError("overlap of registers with different sizes")
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def fidelity(a: StateVector, b: StateVector) -> float:
    return abs(overlap(a, b)) ** 2


_PAULI = {"I": _FIXED["I"], "X": _FIXED["X"], "Y": _FIXED["Y"], "Z": _FIXED["Z"]}


@dataclass
class PauliObservable:
    """Real-weighted sum of Pauli strings.  ``"XZ"`` puts X on qubit 0 and Z on qubit 1."""

    terms: list[tuple[float, str]]

    def __post_init__(self):
        self.terms = [(float(c), s.upper()) for c, s in self.terms]
        lengths = {len(s) for _, s in self.terms}
        if len(lengths) > 1:
            raise ValueError("Pauli strings differ in length")
        for c, s in self.terms:
            if not np.isfinite(c) or set(s) - set(_PAULI):
                raise ValueError(f"bad term {(c, s)}")

    @property
    def num_qubits(self) -> int:
        return len(self.terms[0][1]) if self.terms else 0

    def __add__(self, other):
        return PauliObservable(self.terms + other.terms)

    def __mul__(self, k: float):
        return PauliObservable([(c * k, s) for c, s in self.terms])

    __rmul__ = __mul__

    def tensor(self, other: PauliObservable) -> PauliObservable:
        """``self`` on the low qubits, ``other`` on the high ones."""
        return PauliObservable([(c1 * c2, s1 + s2) for c1, s1 in self.terms for c2, s2 in other.terms])

    def matrix(self) -> np.ndarray:
        d = 2**self.num_qubits
        out = np.zeros((d, d), dtype=complex)
        for c, s in self.terms:
            out += c * reduce(lambda acc, p: np.kron(_PAULI[p], acc), s[1:], _PAULI[s[0]])
        return out


def expectation(state: StateVector, obs: PauliObservable) -> float | np.ndarray:
    """Exact <psi|O|psi> from amplitudes (per trajectory for a batch)."""
    if obs.num_qubits != state.num_qubits:
        raise ValueError(f"observable on {obs.num_qubits} qubits, register has {state.num_qubits}")
    rows = state.rows()
    total = np.zeros(rows.shape[0])
    for c, s in obs.terms:
        phi = rows
        for q, p in enumerate(s):
            if p != "I":
                phi = _apply_matrix(phi, state.num_qubits, _PAULI[p], [q])
        total += c * np.real(np.sum(rows.conj() * phi, axis=1))
    return total[state.index] if state.batched else float(total[0])


@dataclass(frozen=True)
class RandomSource:
    """Seed plus stream id; equal pairs give equal draws, distinct streams are independent."""

    master_seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.master_seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.PCG64(seq))

    def child(self, stream_id: int) -> RandomSource:
        return RandomSource(self.master_seed, self.stream_id * 1_000_003 + stream_id + 1)


def as_generator(rng=None) -> np.random.Generator:
    """Accept a Generator, RandomSource, integer seed or None."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RandomSource):
        return rng.generator()
    return np.random.default_rng(rng)
