import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qnetverify.simcore import (
    Circuit,
    Gate,
    PauliObservable,
    QubitRangeError,
    RandomSource,
    StateVector,
    apply_gate,
    apply_gates,
    circuit_unitary,
    expectation,
    from_amplitudes,
    measure,
    new_zero_state,
    overlap,
    random_state,
    sample,
    tensor,
)

SQ2 = 1 / np.sqrt(2)
ONE_Q = ["H", "X", "Y", "Z", "S", "SDAG"]


def five_sigma(p, m):
    return 5 * np.sqrt(p * (1 - p) / m) + 1e-12


def test_zero_state():
    assert np.array_equal(new_zero_state(1).amplitudes, [1, 0])
    assert np.array_equal(new_zero_state(2).amplitudes, [1, 0, 0, 0])
    with pytest.raises(QubitRangeError):
        new_zero_state(27)
    with pytest.raises(QubitRangeError):
        new_zero_state(0)


def test_basic_gates():
    plus = apply_gate(new_zero_state(1), Gate("H", (0,)))
    assert np.allclose(plus.amplitudes, [SQ2, SQ2])
    one = apply_gate(new_zero_state(1), Gate("X", (0,)))
    phi = 0.7
    out = apply_gate(one, Gate("P", (0,), (phi,)))
    assert np.allclose(out.amplitudes, [0, np.exp(1j * phi)])
    # control qubit 0 set, target qubit 1 clear: index 1 -> index 3
    s = apply_gate(new_zero_state(2), Gate("X", (0,)))
    s = apply_gate(s, Gate("CNOT", (0, 1)))
    assert np.allclose(s.amplitudes, [0, 0, 0, 1])


def test_little_endian_order():
    s = apply_gate(new_zero_state(3), Gate("X", (1,)))
    assert np.argmax(np.abs(s.amplitudes)) == 2


def test_gate_validation():
    with pytest.raises(ValueError):
        Gate("CNOT", (1, 1))
    with pytest.raises(ValueError):
        Gate("U", (0,), matrix=np.array([[1, 1], [0, 1]]))
    with pytest.raises(ValueError):
        Gate("U", (0, 1, 2, 3), matrix=np.eye(16))
    with pytest.raises(QubitRangeError):
        apply_gate(new_zero_state(2), Gate("H", (2,)))


def test_toffoli_and_cswap_tables():
    u = Gate("TOFFOLI", (0, 1, 2)).unitary()
    expect = np.eye(8)
    expect[[3, 7]] = expect[[7, 3]]
    assert np.allclose(u, expect)
    u = Gate("CSWAP", (0, 1, 2)).unitary()
    expect = np.eye(8)
    expect[[3, 5]] = expect[[5, 3]]
    assert np.allclose(u, expect)


def _random_gate(g, n):
    kind = g.integers(6)
    qs = [int(q) for q in g.permutation(n)[:3]]
    if kind == 0:
        return Gate(ONE_Q[g.integers(len(ONE_Q))], (qs[0],))
    if kind == 1:
        return Gate(["P", "RX", "RY", "RZ"][g.integers(4)], (qs[0],), (g.uniform(-np.pi, np.pi),))
    if kind == 2:
        return Gate(["CNOT", "CZ", "SWAP"][g.integers(3)], tuple(qs[:2]))
    if kind == 3:
        return Gate(["CSWAP", "TOFFOLI"][g.integers(2)], tuple(qs[:3]))
    if kind == 4:
        return Gate("CPHASE", tuple(qs[:2]), (g.uniform(0, 2 * np.pi),))
    m = np.linalg.qr(g.normal(size=(4, 4)) + 1j * g.normal(size=(4, 4)))[0]
    return Gate("U", tuple(qs[:2]), matrix=m)


def test_norm_and_inverse_on_random_states():
    g = np.random.default_rng(0)
    for _ in range(100):
        psi = random_state(3, g)
        gate = _random_gate(g, 3)
        out = apply_gate(psi, gate)
        assert abs(np.linalg.norm(out.amplitudes) - 1) < 1e-10
        back = apply_gate(out, gate.inverse())
        assert np.max(np.abs(back.amplitudes - psi.amplitudes)) < 1e-10


def test_engine_matches_dense_kron():
    g = np.random.default_rng(1)
    gates = [_random_gate(g, 4) for _ in range(30)]
    psi = random_state(4, g)
    u = circuit_unitary(gates, 4)
    assert np.allclose(apply_gates(psi, gates).amplitudes, u @ psi.amplitudes)
    # independent check of one gate with explicit Kronecker products (qubit 0 rightmost)
    h, i2 = Gate("H", (0,)).unitary(), np.eye(2)
    full = np.kron(i2, np.kron(h, np.kron(i2, i2)))
    assert np.allclose(apply_gate(psi, Gate("H", (2,))).amplitudes, full @ psi.amplitudes)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 5))
def test_property_unitarity(seed, n):
    g = np.random.default_rng(seed)
    psi = random_state(n, g)
    gates = [_random_gate(g, max(n, 3)) for _ in range(5)] if n >= 3 else [
        Gate(ONE_Q[g.integers(6)], (int(g.integers(n)),)) for _ in range(5)]
    out = apply_gates(psi, gates)
    assert abs(np.linalg.norm(out.amplitudes) - 1) < 1e-10
    back = apply_gates(out, [gt.inverse() for gt in reversed(gates)])
    assert np.allclose(back.amplitudes, psi.amplitudes, atol=1e-10)


def test_measure_deterministic_and_bell():
    g = np.random.default_rng(2)
    bits, post = measure(new_zero_state(1), [0], g)
    assert bits.tolist() == [0]
    bell = apply_gates(new_zero_state(2), [Gate("H", (0,)), Gate("CNOT", (0, 1))])
    b, post = measure(bell.expand(2000), [0, 1], g)
    assert np.all(b[:, 0] == b[:, 1])
    assert 0 < b[:, 0].mean() < 1
    # collapsed rows are normalized basis states
    assert np.allclose(post.norms(), 1)


def test_measure_plus_born_rule():
    g = np.random.default_rng(3)
    m = 10**4
    plus = apply_gate(new_zero_state(1), Gate("H", (0,)))
    b, _ = measure(plus.expand(m), [0], g)
    assert abs(b.mean() - 0.5) < five_sigma(0.5, m)


def test_born_rule_sampling_many_outcomes():
    g = np.random.default_rng(4)
    psi = random_state(3, g)
    m = 10**5
    bits = sample(psi, [0, 1, 2], m, g)
    idx = bits[:, 0] + 2 * bits[:, 1] + 4 * bits[:, 2]
    freq = np.bincount(idx, minlength=8) / m
    p = np.abs(psi.amplitudes) ** 2
    assert np.all(np.abs(freq - p) < five_sigma(p, m))


def test_measure_collapse_matches_projection():
    g = np.random.default_rng(5)
    psi = random_state(2, g)
    bits, post = measure(psi, [1], g)
    keep = ((np.arange(4) >> 1) & 1) == bits[0]
    v = np.where(keep, psi.amplitudes, 0)
    assert np.allclose(post.amplitudes, v / np.linalg.norm(v))


def test_expectation_values():
    assert expectation(new_zero_state(1), PauliObservable([(1, "Z")])) == pytest.approx(1)
    a0 = PauliObservable([(SQ2, "Z"), (-SQ2, "X")])
    a1 = PauliObservable([(SQ2, "X"), (SQ2, "Z")])
    b0, b1 = PauliObservable([(1, "Z")]), PauliObservable([(1, "X")])
    s = a0.tensor(b0) + (-1) * a0.tensor(b1) + a1.tensor(b0) + a1.tensor(b1)
    bell = apply_gates(new_zero_state(2), [Gate("H", (0,)), Gate("CNOT", (0, 1))])
    assert expectation(bell, s) == pytest.approx(2 * np.sqrt(2), abs=1e-12)
    phi = np.pi / 2
    st_ = apply_gates(bell, [Gate("H", (0,)), Gate("H", (1,)), Gate("P", (1,), (phi,))])
    assert expectation(st_, s) == pytest.approx(np.sqrt(2) * (1 + np.cos(phi)), abs=1e-12)
    with pytest.raises(ValueError):
        expectation(bell, PauliObservable([(1, "Z")]))


def test_expectation_matches_sampling():
    g = np.random.default_rng(6)
    psi = random_state(2, g)
    m = 10**5
    for label, pre in (("ZI", []), ("IX", [Gate("H", (1,))])):
        ev = expectation(psi, PauliObservable([(1, label)]))
        q = label.index(label.replace("I", ""))
        bits = sample(apply_gates(psi, pre), [q], m, g)[:, 0]
        mean = np.mean(1 - 2 * bits.astype(float))
        sd = np.sqrt(max(1 - ev**2, 1e-12) / m)
        assert abs(mean - ev) < 5 * sd + 1e-9


def test_overlap_examples():
    zero = new_zero_state(1)
    plus = apply_gate(zero, Gate("H", (0,)))
    minus = apply_gates(zero, [Gate("X", (0,)), Gate("H", (0,))])
    assert overlap(zero, zero) == pytest.approx(1)
    assert abs(overlap(plus, minus)) < 1e-12
    for phi in np.linspace(0, 2 * np.pi, 7):
        tilde = from_amplitudes([np.cos(np.pi / 4), np.sin(np.pi / 4) * np.exp(1j * phi)])
        assert abs(overlap(plus, tilde)) ** 2 == pytest.approx((1 + np.cos(phi)) / 2)
    with pytest.raises(ValueError):
        overlap(zero, new_zero_state(2))


def test_tensor_order():
    one = apply_gate(new_zero_state(1), Gate("X", (0,)))
    s = tensor(one, new_zero_state(1))
    assert np.argmax(np.abs(s.amplitudes)) == 1


def test_random_source_streams():
    a = RandomSource(7, 3).generator().random(5)
    b = RandomSource(7, 3).generator().random(5)
    c = RandomSource(7, 4).generator().random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_compressed_batch_matches_explicit_rows():
    g = np.random.default_rng(8)
    psi = random_state(2, g)
    batch = psi.expand(50)
    assert batch.num_rows == 1 and batch.batch_size == 50
    b, post = measure(batch, [0], g)
    assert post.num_rows <= 2
    rows = post.shot_rows()
    for k in range(50):
        keep = (np.arange(4) & 1) == b[k, 0]
        v = np.where(keep, psi.amplitudes, 0)
        assert np.allclose(rows[k], v / np.linalg.norm(v))


def test_circuit_helpers():
    c = Circuit(2, [Gate("H", (0,)), Gate("CNOT", (0, 1))])
    u = c.unitary()
    assert np.allclose(u @ c.inverse().unitary(), np.eye(4))
    assert isinstance(StateVector(np.array([1, 0]), 1).dim, int)
