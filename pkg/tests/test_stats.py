import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import beta, norm

from qnetverify import stats
from qnetverify.overlap import TrialRecord

P_FIG = (1 + math.cos(math.pi / 4)) / 2
DECADES = [10**k for k in range(2, 7)]


# ---- Hoeffding ----

def test_hoeffding_samples_examples():
    assert stats.hoeffding_samples(0.05, 0.05) == 2952
    assert stats.hoeffding_samples(1.0, 2 * math.exp(-1)) == 2
    for bad in ((0, 0.05), (1.5, 0.05), (0.1, 0), (0.1, 1)):
        with pytest.raises(ValueError):
            stats.hoeffding_samples(*bad)


def test_hoeffding_quadruples_when_epsilon_halves():
    for alpha in (0.1, 0.05, 0.01):
        raw = lambda e: 2 * math.log(2 / alpha) / e**2  # noqa: E731
        assert raw(0.01) / raw(0.02) == pytest.approx(4, rel=1e-14)
        m1, m2 = stats.hoeffding_samples(0.02, alpha), stats.hoeffding_samples(0.01, alpha)
        assert 4 * m1 - 4 <= m2 <= 4 * m1


def test_hoeffding_epsilon_examples():
    alpha = 0.05
    assert stats.hoeffding_epsilon(2 * math.log(2 / alpha), alpha) == pytest.approx(1)
    assert stats.hoeffding_epsilon(10**4, alpha) == pytest.approx(0.02716, abs=5e-6)
    for eps in (0.3, 0.05, 0.011):
        m = stats.hoeffding_samples(eps, alpha)
        assert stats.hoeffding_epsilon(m, alpha) <= eps


def test_hoeffding_interval_half_width():
    ci = stats.fidelity_interval_from_counts(80, 100, 0.05, "hoeffding")
    eps = stats.hoeffding_epsilon(100, 0.05)
    assert ci.estimate == pytest.approx(0.6)
    # F = 2p - 1 doubles the p-scale half-width eps/2
    assert ci.upper - ci.estimate == pytest.approx(2 * (eps / 2), abs=1e-15)
    assert ci.estimate - ci.lower == pytest.approx(2 * (eps / 2), abs=1e-15)


# ---- Clopper-Pearson ----

def test_cp_all_pass():
    ci = stats.clopper_pearson(100, 100, 0.05)
    assert ci.lower == pytest.approx(0.025**0.01, abs=1e-12)
    assert ci.lower == pytest.approx(0.96380, abs=1e-4)
    assert ci.upper == 1.0


def test_cp_none_pass():
    ci = stats.clopper_pearson(0, 100, 0.05)
    assert ci.lower == 0.0
    assert ci.upper == pytest.approx(1 - 0.025**0.01, abs=1e-12)


def test_cp_matches_beta_quantiles():
    g = np.random.default_rng(0)
    for _ in range(200):
        m = int(g.integers(1, 5000))
        k = int(g.integers(0, m + 1))
        alpha = float(g.uniform(0.001, 0.3))
        ci = stats.clopper_pearson(k, m, alpha)
        lo = 0.0 if k == 0 else beta.ppf(alpha / 2, k, m - k + 1)
        hi = 1.0 if k == m else beta.ppf(1 - alpha / 2, k + 1, m - k)
        assert ci.lower == pytest.approx(lo, abs=1e-10)
        assert ci.upper == pytest.approx(hi, abs=1e-10)


@settings(max_examples=1000, deadline=None)
@given(m=st.integers(1, 10**5), frac=st.floats(0, 1), alpha=st.floats(1e-4, 0.5))
def test_cp_contains_point_estimate(m, frac, alpha):
    k = int(round(frac * m))
    ci = stats.clopper_pearson(k, m, alpha)
    assert ci.lower <= k / m <= ci.upper
    assert 0 <= ci.lower and ci.upper <= 1


def test_cp_root_residuals():
    alpha = 0.05
    for m, k in ((50, 13), (1000, 850), (10**5, 85355), (10**6, 3)):
        lo, hi = stats.cp_bounds(np.array([k]), np.array([m]), alpha)
        assert abs(stats.binom_cdf(k, m, hi[0]) - alpha / 2) < 1e-10
        assert abs(stats.binom_sf(k, m, lo[0]) - alpha / 2) < 1e-10


def test_binomial_tails_against_scipy():
    from scipy.stats import binom
    for m, k, p in ((10, 3, 0.4), (1000, 850, 0.85), (10**6, 853553, P_FIG)):
        assert stats.binom_cdf(k, m, p) == pytest.approx(binom.cdf(k, m, p), rel=1e-9)
        # binom_sf counts the tail from k inclusive
        assert stats.binom_sf(k, m, p) == pytest.approx(binom.sf(k - 1, m, p), rel=1e-9)


def test_invalid_counts():
    for bad in ((-1, 10), (11, 10), (0, 0)):
        with pytest.raises(ValueError):
            stats.clopper_pearson(*bad, 0.05)


# ---- expected widths ----

def test_expected_cp_width_single_trial():
    assert stats.expected_cp_width(1, 1.0, 0.05) == pytest.approx(0.975, abs=1e-12)


def test_expected_cp_width_matches_direct_sum():
    from scipy.stats import binom
    m, p, alpha = 60, 0.7, 0.05
    k = np.arange(m + 1)
    lo = np.where(k == 0, 0.0, beta.ppf(alpha / 2, np.maximum(k, 1), m - k + 1))
    hi = np.where(k == m, 1.0, beta.ppf(1 - alpha / 2, k + 1, np.maximum(m - k, 1)))
    direct = float(np.sum(binom.pmf(k, m, p) * (hi - lo)))
    assert stats.expected_cp_width(m, p, alpha) == pytest.approx(direct, abs=1e-10)


def test_fig7_ordering_and_shrinking():
    for alpha in (0.1, 0.05, 0.01):
        cp = [stats.expected_cp_width(m, P_FIG, alpha) for m in DECADES]
        wald = [stats.expected_wald_width(m, P_FIG, alpha) for m in DECADES]
        hoef = [stats.hoeffding_epsilon(m, alpha) for m in DECADES]
        assert all(c < h for c, h in zip(cp, hoef))
        assert all(np.diff(cp) < 0) and all(np.diff(wald) < 0) and all(np.diff(hoef) < 0)
        assert all(w <= c for w, c, m in zip(wald, cp, DECADES) if m >= 10**3)


# ---- Wald and normal quantile ----

def test_normal_quantile_table():
    table = {0.5: 0.0, 0.9: 1.2815515655446004, 0.95: 1.6448536269514722,
             0.975: 1.959963984540054, 0.995: 2.5758293035489004, 0.999: 3.090232306167813,
             0.01: -2.3263478740408408, 1e-6: -4.753424308822899}
    for q, z in table.items():
        assert abs(stats.normal_quantile(q) - z) < 1e-9
    for q in np.linspace(1e-8, 1 - 1e-8, 101):
        assert abs(stats.normal_quantile(q) - norm.ppf(q)) < 1e-9


def test_wald_examples():
    ci = stats.wald_interval(50, 100, 0.05)
    assert ci.upper - ci.estimate == pytest.approx(0.09800, abs=5e-6)
    full = stats.wald_interval(100, 100, 0.05)
    assert full.width == 0 and full.estimate == 1
    for m in (10**3, 10**4):
        k = int(0.85 * m)
        assert stats.wald_interval(k, m, 0.05).width <= stats.clopper_pearson(k, m, 0.05).width


# ---- bootstrap ----

def test_bootstrap_examples():
    assert stats.bootstrap_stderr([0.3] * 10, 200, 1) == 0
    vals = [0, 1] * 500
    se = stats.bootstrap_stderr(vals, 10**4, 2)
    assert abs(se - math.sqrt(0.25 / 1000)) < 0.1 * math.sqrt(0.25 / 1000)
    shuffled = np.random.default_rng(3).permutation(vals)
    assert stats.bootstrap_stderr(shuffled, 500, 4) == stats.bootstrap_stderr(sorted(vals), 500, 4)
    with pytest.raises(ValueError):
        stats.bootstrap_stderr([1.0], 200)
    with pytest.raises(ValueError):
        stats.bootstrap_stderr([1.0, 2.0], 10)


# ---- fidelity intervals ----

def test_fidelity_interval_all_pass():
    recs = [TrialRecord("pass")] * 100
    ci = stats.fidelity_interval(recs, 0.05)
    assert ci.lower == pytest.approx(2 * 0.025**0.01 - 1, abs=1e-12)
    assert ci.lower == pytest.approx(0.92760, abs=2e-4)
    assert ci.upper == 1.0 and ci.estimate == 1.0
    with pytest.raises(ValueError):
        stats.fidelity_interval([])
    with pytest.raises(ValueError):
        stats.fidelity_interval(recs, 0.05, "bayes")


def test_wald_fidelity_interval_is_affine_image():
    p_ci = stats.wald_interval(70, 100, 0.1)
    f_ci = stats.fidelity_interval_from_counts(70, 100, 0.1, "wald")
    assert f_ci.lower == pytest.approx(2 * p_ci.lower - 1)
    assert f_ci.upper == pytest.approx(2 * p_ci.upper - 1)


def test_coverage_at_half_fidelity():
    # F = 0.5 means p = 0.75
    cov, se = stats.cp_coverage(0.75, 1000, 0.05, 1000, rng=5)
    assert cov >= 0.95 - 3 * se


@pytest.mark.parametrize("p", [0.1, 0.5, 0.85, 0.99])
@pytest.mark.parametrize("m", [10**2, 10**3, 10**4])
def test_cp_coverage_grid(p, m):
    cov, se = stats.cp_coverage(p, m, 0.05, 2000, rng=int(p * 100) + m)
    assert cov >= 0.95 - 3 * se


def test_interval_type_invariants():
    with pytest.raises(ValueError):
        stats.ConfidenceInterval(0.5, 0.6, 0.7, 0.95, "wald")
    with pytest.raises(ValueError):
        stats.ConfidenceInterval(0.5, 0.4, 0.7, 1.0, "wald")
    ci = stats.ConfidenceInterval(0.5, 0.4, 0.7, 0.95, "wald")
    assert ci.contains(0.6) and not ci.contains(0.8)
    assert ci.width == pytest.approx(0.3)
