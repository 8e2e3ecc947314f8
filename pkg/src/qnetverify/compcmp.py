"""Comparing two unitaries U_L and U_R.

Covers the Choi-state overlap (M1), initial-state sampling with a 2-design,
Hadamard tests and computational-basis sampling (M2), and the CHSH test (M3).
Every sampled estimator has an exact twin computed from amplitudes, used as
the test oracle.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import noise as nz
from . import overlap as ov
from .simcore import (
    Circuit,
    Gate,
    QubitRangeError,
    StateVector,
    apply_gate,
    apply_gates,
    as_generator,
    circuit_unitary,
    measure,
    new_zero_state,
    sample,
)

TESTS = ("swap", "bell")


@dataclass
class UnitarySpec:
    """A unitary given by a gate list on ``num_qubits`` qubits."""

    circuit: Circuit
    label: str = ""
    _matrix: np.ndarray | None = field(default=None, init=False, repr=False, compare=False)

    @classmethod
    def from_gates(cls, num_qubits: int, gates, label: str = "") -> UnitarySpec:
        return cls(Circuit(num_qubits, list(gates)), label)

    @property
    def num_qubits(self) -> int:
        return self.circuit.num_qubits

    @property
    def dim(self) -> int:
        return 2**self.num_qubits

    @property
    def gates(self) -> list[Gate]:
        return self.circuit.gates

    def unitary(self) -> np.ndarray:
        if self._matrix is None:
            self._matrix = circuit_unitary(self.gates, self.num_qubits)
        return self._matrix

    def _mapped(self, f, reverse: bool, label: str) -> UnitarySpec:
        out = []
        for g in (reversed(self.gates) if reverse else self.gates):
            base, targets, ctl, vals = g._resolve()
            out.append(Gate("U", targets, matrix=f(base), controls=ctl, control_values=vals))
        return UnitarySpec(Circuit(self.num_qubits, out), label)

    def transpose(self) -> UnitarySpec:
        # control projectors are diagonal, so a controlled gate transposes blockwise
        return self._mapped(lambda m: m.T, True, self.label + "^T")

    def conjugate(self) -> UnitarySpec:
        return self._mapped(np.conj, False, self.label + "*")

    def dagger(self) -> UnitarySpec:
        return self._mapped(lambda m: m.conj().T, True, self.label + "^dag")

    def then(self, other: UnitarySpec, label: str = "") -> UnitarySpec:
        """``other`` applied after ``self``."""
        if other.num_qubits != self.num_qubits:
            raise ValueError("register sizes differ")
        return UnitarySpec(Circuit(self.num_qubits, self.gates + other.gates), label)


@dataclass(frozen=True)
class SamplingPlan:
    """``m_b`` initial states, ``m_s`` shots each; ``L``/``K`` for 2-design draws."""

    m_b: int = 8
    m_s: int = 100
    L: int | None = None
    K: int | None = None
    exhaustive: bool = False

    def __post_init__(self):
        for name in ("m_b", "m_s"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("L", "K"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValueError(f"{name} must be positive")

    @property
    def draws(self) -> int:
        return self.L if self.L is not None else self.m_b


@dataclass
class Estimate:
    """A sampled estimate, its standard error, and the noise-free value of the
    same estimator on the same random draws (``oracle``)."""

    value: float | complex
    stderr: float
    shots: int
    oracle: float | complex | None = None
    samples: np.ndarray | None = field(default=None, repr=False)
    # standard error implied by the exact outcome probabilities at this budget
    exact_stderr: float | None = None


def process_fidelity(u_l, u_r) -> float:
    """|tr(U_L^dag U_R)|^2 / d^2 from dense matrices."""
    a, b = _mat(u_l), _mat(u_r)
    return float(abs(np.trace(a.conj().T @ b)) ** 2 / a.shape[0] ** 2)


def normalized_trace(u_l, u_r) -> complex:
    a, b = _mat(u_l), _mat(u_r)
    return complex(np.trace(a.conj().T @ b) / a.shape[0])


def fsq_oracle(u_l, u_r) -> float:
    a, b = _mat(u_l), _mat(u_r)
    return float(np.mean(np.abs(np.diag(a.conj().T @ b)) ** 2))


def _mat(u) -> np.ndarray:
    return u.unitary() if isinstance(u, UnitarySpec) else np.asarray(u, dtype=complex)


def _check_pair(u_l: UnitarySpec, u_r: UnitarySpec):
    if u_l.num_qubits != u_r.num_qubits:
        raise ValueError(f"register sizes differ: {u_l.num_qubits} vs {u_r.num_qubits}")


def _runner(test: str):
    if test == "swap":
        return ov.run_swap_test, ov.swap_test_pass_probability
    if test == "bell":
        return ov.run_bell_test, ov.bell_test_pass_probability
    raise ValueError(f"unknown overlap test {test!r}")


def _f_stderr(p: float, m: int) -> float:
    return float(2 * np.sqrt(max(p * (1 - p), 0.0) / m))


def _pass_rate_to_f(k: int, m: int) -> tuple[float, float]:
    p = k / m
    return 2 * p - 1, _f_stderr(p, m)


# ---- M1: Choi states ----

def choi_state(u: UnitarySpec) -> StateVector:
    """(U x I)|Phi+> with system qubits ``0..n-1`` and reference ``n..2n-1``."""
    n = u.num_qubits
    prep = []
    for i in range(n):
        prep += [Gate("H", (n + i,)), Gate("CNOT", (n + i, i))]
    return apply_gates(new_zero_state(2 * n), prep + u.gates)


def m1_choi_compare(u_l: UnitarySpec, u_r: UnitarySpec, test: str = "swap", shots: int = 1024,
                    noise: nz.NoiseBudget | None = None, rng=None) -> Estimate:
    _check_pair(u_l, u_r)
    run, exact = _runner(test)
    a, b = choi_state(u_l), choi_state(u_r)
    batch = run(a, b, shots, noise, as_generator(rng))
    f, se = _pass_rate_to_f(batch.pass_count, shots)
    p = exact(a, b)
    return Estimate(f, se, shots, oracle=2 * p - 1, exact_stderr=_f_stderr(p, shots))


def m1_exact(u_l: UnitarySpec, u_r: UnitarySpec, test: str = "swap") -> float:
    """tr(rho_L rho_R) read off the overlap-test circuit."""
    _, exact = _runner(test)
    return 2 * exact(choi_state(u_l), choi_state(u_r)) - 1


# ---- Clifford sources ----

@lru_cache(maxsize=1)
def _clifford_words() -> tuple[tuple[str, ...], ...]:
    def key(m):
        k = np.flatnonzero(np.abs(m.ravel()) > 1e-9)[0]
        m = m / (m.ravel()[k] / abs(m.ravel()[k]))
        return tuple(np.round(m.ravel(), 8))

    gens = {"H": Gate("H", (0,)).unitary(), "S": Gate("S", (0,)).unitary()}
    seen = {key(np.eye(2)): ()}
    queue = deque([((), np.eye(2, dtype=complex))])
    while queue:
        word, m = queue.popleft()
        for name, g in gens.items():
            nm = g @ m
            k = key(nm)
            if k not in seen:
                seen[k] = word + (name,)
                queue.append((word + (name,), nm))
    return tuple(seen.values())


def clifford_group_1q() -> list[UnitarySpec]:
    """The 24 single-qubit Cliffords as shortest words over H and S (identity first)."""
    return [UnitarySpec.from_gates(1, [Gate(w, (0,)) for w in word], "".join(word) or "I")
            for word in _clifford_words()]


@lru_cache(maxsize=1)
def _clifford_matrices() -> np.ndarray:
    return np.array([c.unitary() for c in clifford_group_1q()])


def random_clifford_circuit(n: int, depth: int | None = None, rng=None) -> UnitarySpec:
    """Layers of uniformly random single-qubit Cliffords followed by CNOTs on a
    random qubit pairing with random orientation.  An approximate 2-design
    source; ``depth`` defaults to ``3 n``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    g = as_generator(rng)
    depth = 3 * n if depth is None else depth
    mats = _clifford_matrices()
    gates = []
    for _ in range(depth):
        for q in range(n):
            gates.append(Gate("U", (q,), matrix=mats[g.integers(24)]))
        perm = g.permutation(n)
        for i in range(0, n - 1, 2):
            c, t = int(perm[i]), int(perm[i + 1])
            if g.random() < 0.5:
                c, t = t, c
            gates.append(Gate("CNOT", (c, t)))
    return UnitarySpec.from_gates(n, gates, f"clifford-d{depth}")


def _haar_2x2(g) -> np.ndarray:
    z = (g.normal(size=(2, 2)) + 1j * g.normal(size=(2, 2))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_unitary_circuit(n: int, depth: int | None = None, rng=None) -> UnitarySpec:
    """Brickwork of Haar-random single-qubit gates and CNOTs; a generic test unitary."""
    g = as_generator(rng)
    depth = 2 * n if depth is None else depth
    gates = []
    for layer in range(depth):
        for q in range(n):
            gates.append(Gate("U", (q,), matrix=_haar_2x2(g)))
        for q in range(layer % 2, n - 1, 2):
            gates.append(Gate("CNOT", (q, q + 1)))
    for q in range(n):
        gates.append(Gate("U", (q,), matrix=_haar_2x2(g)))
    return UnitarySpec.from_gates(n, gates, "random")


def random_rotation_layer(n: int, max_angle: float = np.pi / 4, rng=None) -> UnitarySpec:
    """Product of single-qubit rotations about random axes by angles uniform in [0, max_angle]."""
    g = as_generator(rng)
    gates = []
    for q in range(n):
        axis = g.normal(size=3)
        axis /= np.linalg.norm(axis)
        theta = g.uniform(0, max_angle)
        gen = axis[0] * np.array([[0, 1], [1, 0]]) + axis[1] * np.array([[0, -1j], [1j, 0]]) \
            + axis[2] * np.array([[1, 0], [0, -1]])
        m = np.cos(theta / 2) * np.eye(2) - 1j * np.sin(theta / 2) * gen
        gates.append(Gate("U", (q,), matrix=m))
    return UnitarySpec.from_gates(n, gates, "M")


def _design_draws(n: int, count: int, exhaustive: bool, g) -> list[UnitarySpec]:
    if n == 1:
        group = clifford_group_1q()
        if exhaustive:
            return group
        return [group[i] for i in g.integers(24, size=count)]
    if exhaustive:
        raise ValueError("exhaustive design averaging is only available for n = 1")
    return [random_clifford_circuit(n, rng=g) for _ in range(count)]


# ---- M2 (i): 2-design averaging ----

def _pair_states(u_l: UnitarySpec, u_r: UnitarySpec, prep: list[Gate]):
    n = u_l.num_qubits
    k = apply_gates(new_zero_state(n), prep)
    return apply_gates(k, u_l.gates), apply_gates(k, u_r.gates)


def fp_from_pass_rates(p: np.ndarray, d: int) -> float:
    """F_p = 2(d+1)/(L d) sum p_k - (d+2)/d."""
    p = np.asarray(p, dtype=float)
    return float(2 * (d + 1) / (len(p) * d) * p.sum() - (d + 2) / d)


def m2_two_design(u_l: UnitarySpec, u_r: UnitarySpec, plan: SamplingPlan, test: str = "swap",
                  noise: nz.NoiseBudget | None = None, rng=None) -> Estimate:
    _check_pair(u_l, u_r)
    g = as_generator(rng)
    run, exact = _runner(test)
    d = u_l.dim
    draws = _design_draws(u_l.num_qubits, plan.draws, plan.exhaustive, g)
    p_hat, p_true = [], []
    for c in draws:
        a, b = _pair_states(u_l, u_r, c.gates)
        p_hat.append(run(a, b, plan.m_s, noise, g).pass_rate())
        p_true.append(exact(a, b))
    p_hat, p_true = np.array(p_hat), np.array(p_true)
    coef = 2 * (d + 1) / (len(draws) * d)
    se = coef * np.sqrt(np.sum(p_hat * (1 - p_hat)) / plan.m_s)
    se_true = coef * np.sqrt(np.sum(np.clip(p_true * (1 - p_true), 0, None)) / plan.m_s)
    return Estimate(fp_from_pass_rates(p_hat, d), float(se), plan.m_s * len(draws),
                    oracle=fp_from_pass_rates(p_true, d), samples=p_hat, exact_stderr=float(se_true))


def m2_two_design_exact(u_l: UnitarySpec, u_r: UnitarySpec, test: str = "swap") -> float:
    """Exhaustive single-qubit Clifford average with exact pass probabilities."""
    if u_l.num_qubits != 1:
        raise ValueError("exact design average implemented for n = 1")
    _, exact = _runner(test)
    p = [exact(*_pair_states(u_l, u_r, c.gates)) for c in clifford_group_1q()]
    return fp_from_pass_rates(np.array(p), 2)


def average_fidelity(u_l: UnitarySpec, u_r: UnitarySpec, draws: list[UnitarySpec]) -> float:
    """Mean |<k|U_L^dag U_R|k>|^2 over initial states U_k|0>, from amplitudes."""
    vals = []
    for c in draws:
        a, b = _pair_states(u_l, u_r, c.gates)
        vals.append(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)
    return float(np.mean(vals))


# ---- M2 (ii): Hadamard tests ----

def _basis_prep(p, n: int) -> list[Gate]:
    bits = _bits(p, n)
    return [Gate("X", (q,)) for q in range(n) if bits[q]]


def _bits(p, n: int) -> tuple[int, ...]:
    if isinstance(p, (int, np.integer)):
        if not 0 <= p < 2**n:
            raise ValueError(f"basis index {p} outside 0..{2**n - 1}")
        return tuple((int(p) >> q) & 1 for q in range(n))
    bits = tuple(int(b) for b in p)
    if len(bits) != n or any(b not in (0, 1) for b in bits):
        raise ValueError(f"basis state {p} is not an {n}-bit string")
    return bits


def _hadamard_circuit(u_l: UnitarySpec, u_r: UnitarySpec, p, part: str) -> StateVector:
    n = u_l.num_qubits
    anc = n
    gates = _basis_prep(p, n) + [Gate("H", (anc,))]
    if part == "imag":
        gates.append(Gate("SDAG", (anc,)))
    elif part != "real":
        raise ValueError(f"part must be 'real' or 'imag', got {part!r}")
    gates += [gt.controlled(anc, 0) for gt in u_l.gates]
    gates += [gt.controlled(anc, 1) for gt in u_r.gates]
    gates.append(Gate("H", (anc,)))
    return apply_gates(new_zero_state(n + 1), gates)


def _p0(state: StateVector, q: int) -> float:
    probs = np.abs(state.amplitudes) ** 2
    return float(probs[((np.arange(state.dim) >> q) & 1) == 0].sum())


def hadamard_test(u_l: UnitarySpec, u_r: UnitarySpec, p, part: str = "real", shots: int = 1024,
                  noise: nz.NoiseBudget | None = None, rng=None) -> Estimate:
    """Estimate Re or Im of <p|U_L^dag U_R|p>."""
    _check_pair(u_l, u_r)
    g = as_generator(rng)
    n = u_l.num_qubits
    state = _hadamard_circuit(u_l, u_r, p, part)
    exact = (2 * _p0(state, n) - 1)
    if noise is None or noise.is_ideal:
        bits = sample(state, [n], shots, g)[:, 0]
    else:
        # one gate-error twirl for the controlled block, then readout error
        st = nz.pauli_twirl(state.expand(shots), tuple(range(n + 1)), 1 - noise.f_gate, g)
        raw, _ = measure(st, [n], g)
        bits = nz.flip_readout(raw[:, 0], noise.f_readout, g)
    val, se = _pass_rate_to_f(int(np.sum(bits == 0)), shots)
    return Estimate(val, se, shots, oracle=exact, exact_stderr=_f_stderr((1 + exact) / 2, shots))


def hadamard_exact(u_l: UnitarySpec, u_r: UnitarySpec, p, part: str = "real") -> float:
    state = _hadamard_circuit(u_l, u_r, p, part)
    return (2 * _p0(state, u_l.num_qubits) - 1)


def m2_trace_sampling(u_l: UnitarySpec, u_r: UnitarySpec, plan: SamplingPlan,
                      noise: nz.NoiseBudget | None = None, rng=None) -> Estimate:
    """tr(U_L^dag U_R)/d from Hadamard tests on uniformly drawn basis states."""
    _check_pair(u_l, u_r)
    g = as_generator(rng)
    d = u_l.dim
    ps = range(d) if plan.exhaustive else g.integers(d, size=plan.m_b)
    vals, truth, var, var_true = [], [], 0.0, 0.0
    for p in ps:
        re = hadamard_test(u_l, u_r, int(p), "real", plan.m_s, noise, g)
        im = hadamard_test(u_l, u_r, int(p), "imag", plan.m_s, noise, g)
        vals.append(re.value + 1j * im.value)
        truth.append(re.oracle + 1j * im.oracle)
        var += re.stderr**2 + im.stderr**2
        var_true += re.exact_stderr**2 + im.exact_stderr**2
    vals = np.array(vals)
    k = len(vals)
    return Estimate(complex(vals.mean()), float(np.sqrt(var) / k), 2 * plan.m_s * k,
                    oracle=complex(np.mean(truth)), samples=vals,
                    exact_stderr=float(np.sqrt(var_true) / k))


def _entangled_circuit(u_l: UnitarySpec, u_r: UnitarySpec, part: str) -> StateVector:
    n = u_l.num_qubits
    anc = 2 * n
    gates = []
    for i in range(n):
        gates += [Gate("H", (i,)), Gate("CNOT", (i, n + i))]
    gates.append(Gate("H", (anc,)))
    if part == "imag":
        gates.append(Gate("SDAG", (anc,)))
    gates += [gt.controlled(anc, 0) for gt in u_l.gates]
    gates += [gt.remap(lambda q: q + n).controlled(anc, 1) for gt in u_r.gates]
    gates.append(Gate("H", (anc,)))
    return apply_gates(new_zero_state(2 * n + 1), gates)


def m2_entangled_hadamard(u_l: UnitarySpec, u_r: UnitarySpec, shots: int = 1024,
                          noise: nz.NoiseBudget | None = None, rng=None) -> Estimate:
    """Estimate tr(U_L^* U_R)/d with the registers sharing |Phi+>^n.

    ``abs(value)**2`` equals 1 iff U_L = U_R^T up to phase.
    """
    _check_pair(u_l, u_r)
    g = as_generator(rng)
    n = u_l.num_qubits
    if 2 * n + 1 > 26:
        raise QubitRangeError("entangled Hadamard test exceeds the qubit cap")
    parts, truth, var = [], [], 0.0
    for part in ("real", "imag"):
        state = _entangled_circuit(u_l, u_r, part)
        truth.append((2 * _p0(state, 2 * n) - 1))
        if noise is None or noise.is_ideal:
            bits = sample(state, [2 * n], shots, g)[:, 0]
        else:
            st = nz.pauli_twirl(state.expand(shots), tuple(range(2 * n + 1)), 1 - noise.f_gate, g)
            raw, _ = measure(st, [2 * n], g)
            bits = nz.flip_readout(raw[:, 0], noise.f_readout, g)
        val, se = _pass_rate_to_f(int(np.sum(bits == 0)), shots)
        parts.append(val)
        var += se**2
    return Estimate(complex(parts[0], parts[1]), float(np.sqrt(var)), 2 * shots,
                    oracle=complex(truth[0], truth[1]))


# ---- M2 (iii): computational-basis sampling ----

def m2_fsq(u_l: UnitarySpec, u_r: UnitarySpec, plan: SamplingPlan, test: str = "swap",
           noise: nz.NoiseBudget | None = None, rng=None) -> Estimate:
    """F_sq from overlap tests on U_L|p> vs U_R|p> for sampled basis states p."""
    _check_pair(u_l, u_r)
    g = as_generator(rng)
    run, exact = _runner(test)
    n, d = u_l.num_qubits, u_l.dim
    ps = range(d) if plan.exhaustive else g.integers(d, size=plan.m_b)
    f_hat, f_true, var, var_true = [], [], 0.0, 0.0
    for p in ps:
        a, b = _pair_states(u_l, u_r, _basis_prep(int(p), n))
        batch = run(a, b, plan.m_s, noise, g)
        f, se = _pass_rate_to_f(batch.pass_count, plan.m_s)
        q = exact(a, b)
        f_hat.append(f)
        f_true.append(2 * q - 1)
        var += se**2
        var_true += _f_stderr(q, plan.m_s) ** 2
    k = len(f_hat)
    return Estimate(float(np.mean(f_hat)), float(np.sqrt(var) / k), plan.m_s * k,
                    oracle=float(np.mean(f_true)), samples=np.array(f_hat),
                    exact_stderr=float(np.sqrt(var_true) / k))


# ---- M3: CHSH ----

# measurement angle theta: observable cos(theta) Z + sin(theta) X
CHSH_ANGLES = {"A0": -np.pi / 4, "A1": np.pi / 4, "B0": 0.0, "B1": np.pi / 2}
CHSH_TERMS = ((("A0", "B0"), 1), (("A0", "B1"), -1), (("A1", "B0"), 1), (("A1", "B1"), 1))


def _chsh_state(u_l: UnitarySpec, u_r: UnitarySpec) -> StateVector:
    if u_l.num_qubits != 1 or u_r.num_qubits != 1:
        raise ValueError("the CHSH comparison is defined for single-qubit unitaries")
    st = apply_gates(new_zero_state(2), [Gate("H", (0,)), Gate("CNOT", (0, 1))])
    st = apply_gates(st, u_l.gates)
    return apply_gates(st, [gt.remap({0: 1}) for gt in u_r.gates])


def _rotated(state: StateVector, a: str, b: str) -> StateVector:
    return apply_gates(state, [Gate("RY", (0,), (-CHSH_ANGLES[a],)),
                               Gate("RY", (1,), (-CHSH_ANGLES[b],))])


def chsh_exact(u_l: UnitarySpec, u_r: UnitarySpec) -> float:
    st = _chsh_state(u_l, u_r)
    parity = np.array([1, -1, -1, 1])
    return float(sum(s * np.dot(parity, np.abs(_rotated(st, a, b).amplitudes) ** 2)
                     for (a, b), s in CHSH_TERMS))


def m3_chsh(u_l: UnitarySpec, u_r: UnitarySpec, shots_per_setting: int = 1024,
            noise: nz.NoiseBudget | None = None, rng=None) -> Estimate:
    """<S> from the four correlators; equals 2 sqrt(2) F_p for these settings."""
    g = as_generator(rng)
    st = _chsh_state(u_l, u_r)
    parity = np.array([1, -1, -1, 1])
    total, var, var_true = 0.0, 0.0, 0.0
    for (a, b), s in CHSH_TERMS:
        rot = _rotated(st, a, b)
        bits = sample(rot, [0, 1], shots_per_setting, g)
        if noise is not None and noise.f_readout < 1:
            bits = nz.flip_readout(bits, np.sqrt(noise.f_readout), g)
        e = float(np.mean(1 - 2 * (bits[:, 0] ^ bits[:, 1])))
        e_true = float(np.dot(parity, np.abs(rot.amplitudes) ** 2))
        total += s * e
        var += (1 - e**2) / shots_per_setting
        var_true += max(1 - e_true**2, 0.0) / shots_per_setting
    return Estimate(total, float(np.sqrt(var)), 4 * shots_per_setting, oracle=chsh_exact(u_l, u_r),
                    exact_stderr=float(np.sqrt(var_true)))
