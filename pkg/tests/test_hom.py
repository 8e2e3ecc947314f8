import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chi2_contingency

from qnetverify import hom
from qnetverify.netproto import run_s2
from qnetverify.noise import NoiseBudget
from qnetverify.simcore import Circuit, Gate, fidelity, random_state

M = 10**4


def within(rate, p, m, k=5):
    return abs(rate - p) <= k * np.sqrt(p * (1 - p) / m) + 1e-12


def test_mode_normalization_checked():
    for shape in hom.SHAPES:
        hom.ModeFunction(shape, 1.3, 0.2)
    with pytest.raises(ValueError):
        hom.ModeFunction("triangle", 1.0)
    with pytest.raises(ValueError):
        hom.ModeFunction("gaussian", 0.0)


def test_identical_modes_overlap_one():
    for shape in hom.SHAPES:
        m = hom.ModeFunction(shape, 0.8, 0.3)
        assert abs(hom.mode_overlap(m, m, "quad")) == pytest.approx(1, abs=1e-8)
        assert hom.coincidence_probability(m, m) == pytest.approx(0, abs=1e-12)


def test_gaussian_half_visibility_delay():
    sigma = 0.7
    pair = hom.mode_pair("gaussian", sigma, sigma * np.sqrt(2 * np.log(2)))
    assert hom.visibility(*pair, "quad") == pytest.approx(0.5, abs=1e-8)
    assert hom.coincidence_probability(*pair) == pytest.approx(0.25, abs=1e-12)


def test_timebins_are_orthogonal():
    early = hom.ModeFunction("timebin", 1.0, bin_index=0)
    late = hom.ModeFunction("timebin", 1.0, bin_index=1)
    assert hom.mode_overlap(early, late, "quad") == 0
    assert hom.mode_overlap(early, late) == 0
    assert hom.coincidence_probability(early, late) == pytest.approx(0.5)


@pytest.mark.parametrize("shape,law", [
    ("gaussian", lambda w, d: np.exp(-(d**2) / (2 * w**2))),
    ("lorentzian", lambda w, d: np.exp(-2 * w * d)),
])
def test_quadrature_matches_analytic(shape, law):
    w = 1.2
    for d in np.linspace(0, 5, 50):
        v = hom.visibility(*hom.mode_pair(shape, w, d), "quad")
        assert abs(v - law(w, d)) < 1e-6


def test_sech_and_timebin_closed_forms_agree_with_quadrature():
    for shape in ("sech", "timebin"):
        for d in np.linspace(0, 3, 13):
            pair = hom.mode_pair(shape, 1.0, d)
            assert abs(hom.mode_overlap(*pair, "quad") - hom.mode_overlap(*pair, "closed")) < 1e-7


def test_mixed_shapes_use_quadrature():
    a = hom.ModeFunction("gaussian", 1.0)
    b = hom.ModeFunction("sech", 1.5)
    assert hom.closed_form_overlap(a, b) is None
    with pytest.raises(ValueError):
        hom.mode_overlap(a, b, "closed")
    assert 0 < abs(hom.mode_overlap(a, b)) < 1


@settings(max_examples=40, deadline=None)
@given(shape=st.sampled_from(hom.SHAPES), d1=st.floats(0, 4), d2=st.floats(0, 4))
def test_coincidence_bounded_and_monotone(shape, d1, d2):
    p1 = hom.coincidence_probability(*hom.mode_pair(shape, 1.0, d1))
    p2 = hom.coincidence_probability(*hom.mode_pair(shape, 1.0, d2))
    assert 0 <= p1 <= 0.5 and 0 <= p2 <= 0.5
    v1 = hom.visibility(*hom.mode_pair(shape, 1.0, d1))
    v2 = hom.visibility(*hom.mode_pair(shape, 1.0, d2))
    if v1 >= v2:
        assert p1 <= p2 + 1e-15


def test_hom_shot_statistics():
    g = np.random.default_rng(1)
    pair = hom.mode_pair("gaussian", 1.0, 1.0)
    pc = hom.coincidence_probability(*pair)
    shots = [hom.hom_shot(*pair, rng=g) for _ in range(4000)]
    assert all(s.coincidence != s.passed for s in shots)
    rate = np.mean([s.coincidence for s in shots])
    assert within(rate, pc, 4000)


def test_printed_formulas_differ_from_overlap_law():
    # the printed closed forms break the identical-photon limit
    assert hom.printed_coincidence("gaussian", 1.0, 0.0) == pytest.approx(1.0)
    assert hom.printed_coincidence("lorentzian", 1.0, 0.0) == pytest.approx(1.0)
    assert hom.printed_coincidence("sech", 1.0, 0.5) < 0
    rows = hom.comparison_report(1.0, np.linspace(0, 4, 9))
    assert {r["shape"] for r in rows} == {"gaussian", "lorentzian", "sech"}
    zero = [r for r in rows if r["delta"] == 0 and r["shape"] == "gaussian"][0]
    assert zero["p_c_overlap_law"] == pytest.approx(0, abs=1e-10)
    assert zero["difference"] == pytest.approx(1.0, abs=1e-10)


def test_s4_ideal_identical_pass():
    prep = Circuit(2, [Gate("H", (0,)), Gate("CNOT", (0, 1))])
    batch = hom.run_s4(prep, prep, 2, 300, rng=2)
    assert batch.pass_count == 300
    assert batch.channel_uses == 2


def test_s4_zero_visibility_is_coin_per_pair():
    g = np.random.default_rng(3)
    psi = random_state(2, g)
    batch = hom.run_s4(psi, psi, 2, M, visibility_params=0.0, rng=g)
    # independent fair coincidence flags; the run passes on an even number of them
    assert within(batch.pass_rate(), 0.5, M)
    flags = batch.b_bits
    assert np.all(np.abs(flags.mean(axis=0) - 0.5) < 5 * 0.5 / np.sqrt(M))


def test_s4_orthogonal_matches_s2():
    g = np.random.default_rng(4)
    plus = Circuit(1, [Gate("H", (0,))])
    minus = Circuit(1, [Gate("X", (0,)), Gate("H", (0,))])
    r4 = hom.run_s4(plus, minus, 1, M, rng=g).pass_rate()
    r2 = run_s2(plus, minus, 1, M, rng=g).pass_rate()
    assert within(r4, 0.5, M)
    assert abs(r4 - r2) < 5 * np.sqrt(2 * 0.25 / M)


def test_s4_distribution_matches_s2():
    g = np.random.default_rng(5)
    for n in (1, 2, 3):
        a, b = random_state(n, g), random_state(n, g)
        p = (1 + fidelity(a, b)) / 2
        r4 = hom.run_s4(a, b, n, M, rng=g)
        r2 = run_s2(a, b, n, M, rng=g)
        table = np.array([[r4.pass_count, M - r4.pass_count], [r2.pass_count, M - r2.pass_count]])
        assert chi2_contingency(table)[1] > 0.001
        assert within(r4.pass_rate(), p, M)


def test_s4_visibility_from_mode_pairs():
    pair = hom.mode_pair("gaussian", 1.0, np.sqrt(2 * np.log(2)))
    vis = hom._pair_visibilities([pair, 1.0], 2)
    assert vis == pytest.approx([0.5, 1.0])
    with pytest.raises(ValueError):
        hom._pair_visibilities([0.5], 2)
    with pytest.raises(ValueError):
        hom._pair_visibilities([1.5, 0.2], 2)


def test_s4_noise_reduces_success():
    prep = Circuit(1, [Gate("H", (0,))])
    batch = hom.run_s4(prep, prep, 1, 4000, noise=NoiseBudget(0.95, 0, 1, 1, 0.95), rng=6)
    assert batch.success.mean() < 1
