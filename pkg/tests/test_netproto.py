import numpy as np
import pytest
from scipy.stats import chi2_contingency

from qnetverify import model
from qnetverify import netproto as npt
from qnetverify.noise import NoiseBudget
from qnetverify.simcore import (
    Circuit,
    Gate,
    apply_gates,
    fidelity,
    from_amplitudes,
    new_zero_state,
    random_state,
    tensor,
)

M = 10**4


def plus_prep(n):
    return Circuit(n, [Gate("H", (q,)) for q in range(n)])


def minus_prep(n):
    return Circuit(n, [g for q in range(n) for g in (Gate("X", (q,)), Gate("H", (q,)))])


def within(rate, p, m, k=5):
    return abs(rate - p) <= k * np.sqrt(p * (1 - p) / m) + 1e-12


def joint_within(r1, r2, m, k=5):
    p = (r1 + r2) / 2
    return abs(r1 - r2) <= k * np.sqrt(2 * p * (1 - p) / m) + 1e-12


def bitstring_table(*batches):
    rows = []
    for bt in batches:
        keys = (bt.b_bits.astype(int) @ (1 << np.arange(bt.b_bits.shape[1]))) * 2**bt.c_bits.shape[1]
        keys = keys + bt.c_bits.astype(int) @ (1 << np.arange(bt.c_bits.shape[1]))
        rows.append(np.bincount(keys, minlength=4**bt.b_bits.shape[1]))
    table = np.array(rows)
    return table[:, table.sum(axis=0) > 0]


def test_transmit_moves_amplitudes():
    alpha, beta = 0.6, 0.8j
    state = tensor(from_amplitudes([alpha, beta]), new_zero_state(1))
    ledger = npt.ChannelLedger()
    out = npt.transmit(state, 0, 1, ledger)
    assert np.allclose(out.amplitudes, [alpha, 0, beta, 0])
    assert ledger.uses == 1
    out = npt.transmit(out, 1, 0, ledger, NoiseBudget(f_transfer=1.0), 0)
    assert np.allclose(out.amplitudes, state.amplitudes)
    assert ledger.uses == 2
    assert [u for _, u in ledger.history] == [1, 2]


def test_transmit_rejects_occupied_destination():
    state = apply_gates(new_zero_state(2), [Gate("H", (1,))])
    with pytest.raises(npt.ProtocolError):
        npt.transmit(state, 0, 1, npt.ChannelLedger())


def test_node_pair_ancillas():
    assert npt.NodePair(3, "S1").num_qubits == 8
    assert npt.NodePair(3, "S2").num_qubits == 7
    assert npt.NodePair(3, "S3").num_qubits == 6
    with pytest.raises(ValueError):
        npt.NodePair(0, "S1")
    with pytest.raises(ValueError):
        npt.NodePair(2, "S5")


def test_s1_identical_and_channel_counts():
    prep = plus_prep(3)
    batch = npt.run_s1(prep, prep, 3, 200, rng=1)
    assert batch.pass_count == 200
    assert all(r.channel_uses == 6 for r in batch)
    batch = npt.run_s1(prep, prep, 3, 50, rng=1, return_qubits=False)
    assert batch.channel_uses == 3
    assert batch.pass_count == 50


def test_s1_orthogonal_products():
    batch = npt.run_s1(plus_prep(2), minus_prep(2), 2, M, rng=2)
    assert within(batch.pass_rate(), 0.5, M)


def test_s2_identical_and_channel_count():
    prep = random_state(2, 3)
    batch = npt.run_s2(prep, prep, 2, 200, rng=3)
    assert batch.pass_count == 200
    assert batch.channel_uses == 2


def test_s2_symmetric_pair_never_gives_singlet_branch():
    psi = random_state(1, 4)
    batch = npt.run_s2(psi, psi, 1, M, rng=4)
    both = (batch.b_bits[:, 0] == 1) & (batch.c_bits[:, 0] == 1)
    assert not both.any()


def test_s2_matches_s1_on_random_pair():
    g = np.random.default_rng(5)
    a, b = random_state(2, g), random_state(2, g)
    r1 = npt.run_s1(a, b, 2, M, rng=g).pass_rate()
    r2 = npt.run_s2(a, b, 2, M, rng=g).pass_rate()
    assert joint_within(r1, r2, M)


def test_s3_identical_orthogonal_and_counts():
    prep = plus_prep(2)
    batch = npt.run_s3(prep, prep, 2, 200, rng=6)
    assert batch.pass_count == 200
    assert batch.channel_uses == 4
    batch = npt.run_s3(plus_prep(1), minus_prep(1), 1, M, rng=6)
    assert within(batch.pass_rate(), 0.5, M)


def test_s3_bitstrings_match_s2():
    g = np.random.default_rng(7)
    a, b = random_state(2, g), random_state(2, g)
    s2 = npt.run_s2(a, b, 2, M, rng=g)
    s3 = npt.run_s3(a, b, 2, M, rng=g)
    _, pval, _, _ = chi2_contingency(bitstring_table(s2, s3))
    assert pval > 0.001


def test_executors_reproduce_local_law():
    g = np.random.default_rng(8)
    for n in (1, 2, 3):
        a, b = random_state(n, g), random_state(n, g)
        p = (1 + fidelity(a, b)) / 2
        for run in npt.RUNNERS.values():
            assert within(run(a, b, n, M, rng=g).pass_rate(), p, M)


def test_register_mismatch():
    with pytest.raises(ValueError):
        npt.run_s2(plus_prep(2), plus_prep(3), 2, 10)
    with pytest.raises(TypeError):
        npt.run_s1("zero", plus_prep(1), 1, 10)


@pytest.mark.parametrize("n", [1, 3])
def test_noisy_success_tracks_model(n):
    budget = NoiseBudget(0.99, 5e-3, 1.0, 0.97, 0.995, decay="transit")
    one = Circuit(n, [Gate("X", (q,)) for q in range(n)])
    g = np.random.default_rng(9 + n)
    for scheme, oracle in (("S1", model.p_s1), ("S2", model.p_s2)):
        batch = npt.RUNNERS[scheme](one, one, n, M, budget, rng=g)
        p = oracle(n, budget)
        assert within(batch.success.mean(), p, M, k=3)


def test_noise_lowers_pass_rate():
    prep = plus_prep(2)
    budget = NoiseBudget(0.95, 0.02, 1.0, 0.95, 0.99)
    for run in npt.RUNNERS.values():
        assert run(prep, prep, 2, 2000, budget, rng=10).pass_rate() < 1


def test_ledger_is_monotone():
    ledger = npt.ChannelLedger()
    for k in range(5):
        ledger.record(str(k))
    uses = [u for _, u in ledger.history]
    assert uses == sorted(uses) and ledger.uses == 5


def test_expected_channel_uses():
    assert npt.expected_channel_uses("S1", 4) == 8
    assert npt.expected_channel_uses("S1", 4, False) == 4
    assert npt.expected_channel_uses("S2", 4) == 4
    assert npt.expected_channel_uses("S3", 4) == 8
    assert npt.expected_channel_uses("S4", 4) == 4
