import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nseb import presets
from nseb.acceptance import gn_variance_exact
from nseb.analysis import (aep_cover, divergence_as_printed, entropy_ceiling_report, hamming_ball_count,
                           hamming_ball_rate, hellinger_affinity, hellinger_series, lag_independence,
                           largest_block_length, plug_in_entropy, required_length, shannon_gn, tv_distance,
                           tv_to_uniform, wl_average)
from nseb.errors import CapacityError, DomainError, InsufficientDataError
from nseb.source import Alphabet, MarginalSchedule, dissipative_schedule, sample_window

BIN = Alphabet((0, 1))


def test_constant_sequence_has_zero_entropy():
    assert plug_in_entropy(np.zeros(1000, dtype=int), 2, alphabet_size=2).plug_in_rate == 0


def test_fair_coin_entropy():
    x = sample_window(presets.fair_coin(), 0, 10 ** 6 - 1, 3).symbols
    r = plug_in_entropy(x, 1)
    assert abs(r.plug_in_rate - 1) < 0.01
    assert r.ci[0] <= r.plug_in_rate <= r.ci[1] + 1e-12


def test_period_two_sequence():
    assert plug_in_entropy(np.tile([0, 1], 500), 2).plug_in_rate == pytest.approx(0.5)


def test_insufficient_data_names_length():
    with pytest.raises(InsufficientDataError, match="needs 400"):
        plug_in_entropy(np.zeros(100, dtype=int), 2, alphabet_size=2)


def test_block_length_helpers():
    assert required_length(3, 2) == 800
    assert largest_block_length(10 ** 5, 2) == 9
    assert largest_block_length(10, 4) == 1


@pytest.mark.parametrize("q1,q2,d", [((0.3, 0.7), (0.3, 0.7), 0), ((1, 0), (0, 1), 2), ((0.5, 0.5), (0.25, 0.75), 0.5)])
def test_tv_examples(q1, q2, d):
    assert tv_distance(q1, q2) == pytest.approx(d)


def test_tv_mismatch():
    with pytest.raises(DomainError):
        tv_distance((1, 0), (1, 0, 0))


@settings(max_examples=300)
@given(st.integers(2, 6).flatmap(lambda a: st.lists(
    st.lists(st.floats(0.01, 1), min_size=a, max_size=a), min_size=3, max_size=3)))
def test_tv_triangle_inequality(rows):
    a, b, c = (np.array(r) / sum(r) for r in rows)
    assert tv_distance(a, c) <= tv_distance(a, b) + tv_distance(b, c) + 1e-12
    assert tv_distance(a, b) == pytest.approx(tv_distance(b, a))


def test_divergence_as_printed():
    assert divergence_as_printed((0.5, 0.5), (0.5, 0.5)) == 0
    assert divergence_as_printed((0.25, 0.75), (0.5, 0.5)) == pytest.approx(0.5 + 0.5 * math.log2(2 / 3))
    assert divergence_as_printed((0.25, 0.75), (0.5, 0.5)) == pytest.approx(0.2075, abs=1e-4)
    assert divergence_as_printed((1, 0), (0.5, 0.5)) == math.inf


def test_tv_to_uniform_and_lags():
    x = sample_window(presets.skewed4_stationary(), 0, 99_999, 1).symbols
    assert tv_to_uniform(np.arange(1000) % 4, 4) == 0
    assert tv_to_uniform(x, 4) > 0.5
    for row in lag_independence(x, 4):
        assert row["p_value"] > 0.001
    y = np.repeat(np.arange(50_000) % 2, 2)
    # 0 0 1 1 0 0 ...: lag 1 pairs are balanced, lag 2 always flips
    lag1, lag2 = lag_independence(y, 2, lags=(1, 2))
    assert lag1["p_value"] > 0.5 and lag2["p_value"] < 1e-6


def test_gn_fair_coin_is_zero():
    assert shannon_gn(presets.fair_coin(), 5, 1000) == pytest.approx(0, abs=1e-12)


@pytest.mark.parametrize("sched", [MarginalSchedule.stationary(BIN, [0.75, 0.25]), presets.fair_power_decay()])
def test_gn_concentrates(sched):
    g = np.array([shannon_gn(sched, s, 10 ** 4) for s in range(200)])
    assert (np.abs(g) <= 0.05).mean() >= 0.9


def test_gn_variance_halves_when_stationary():
    s = MarginalSchedule.stationary(BIN, [0.75, 0.25])
    v = [np.var([shannon_gn(s, seed, n) for seed in range(2000)]) for n in (1000, 2000)]
    assert 1.6 <= v[0] / v[1] <= 2.4
    assert gn_variance_exact(s, 1000) / gn_variance_exact(s, 2000) == pytest.approx(2)


def test_gn_variance_power_decay_fair_limit():
    # fair limit: log rho_k(x_k) has variance ~ a_k^2 ~ 1/k, so var(g_n) ~ log n / n^2
    s = presets.fair_power_decay()
    ratio = gn_variance_exact(s, 1000) / gn_variance_exact(s, 2000)
    assert 3.3 < ratio < 3.8


def test_gn_rejects_bad_n():
    with pytest.raises(DomainError):
        shannon_gn(presets.fair_coin(), 0, 0)


def test_aep_fair_coin_everything_qualifies():
    r = aep_cover(presets.fair_coin(), 12, 0.1)
    assert r.cover_size == 2 ** 12 and r.mass == pytest.approx(1) and r.within_bound


def test_aep_biased_exact():
    r = aep_cover(MarginalSchedule.stationary(BIN, [0.9, 0.1]), 16, 0.3)
    assert r.mass >= 0.9 and r.within_bound
    assert r.cover_size == sum(math.comb(16, j) for j in range(17)
                               if 0.9 ** (16 - j) * 0.1 ** j > 2 ** (-16 * (0.469 + 0.3) + 1e-3 * 0))


def test_aep_degenerate():
    r = aep_cover(MarginalSchedule.stationary(BIN, [1.0, 0.0]), 10, 0.1)
    assert r.cover_size == 1 and r.mass == 1


def test_aep_margins_and_capacity():
    r = aep_cover(presets.fair_power_decay(), 10, 0.2, M=2)
    # coordinates 1-M .. n+M
    assert r.length == 14 and r.within_bound
    with pytest.raises(CapacityError):
        aep_cover(presets.fair_coin(), 30, 0.1)


def test_aep_montecarlo_close_to_exact():
    s = MarginalSchedule.stationary(BIN, [0.9, 0.1])
    exact = aep_cover(s, 16, 0.3)
    mc = aep_cover(s, 16, 0.3, method="montecarlo", samples=400_000, seed=1)
    assert mc.mass == pytest.approx(exact.mass, abs=0.005)
    assert mc.cover_size == pytest.approx(exact.cover_size, rel=0.1)


@pytest.mark.parametrize("n,eps,b,count", [(10, 0.05, 2, 1), (10, 0.2, 2, 180)])
def test_hamming_counts(n, eps, b, count):
    assert hamming_ball_count(n, eps, b) == count


def test_hamming_rate_near_asymptote():
    rate, asym = hamming_ball_rate(200, 0.1, 4)
    assert asym == pytest.approx(0.669, abs=1e-3)
    assert abs(rate - asym) < 0.05


def test_hamming_domain():
    with pytest.raises(DomainError):
        hamming_ball_count(10, 1.0, 2)


@pytest.mark.parametrize("cyl", [[0], [1, 0], [0, 0, 1]])
def test_wl_average(cyl):
    got, mean = wl_average(presets.fair_power_decay(), cyl, 10 ** 5, seed=8)
    assert abs(got - mean) < 0.02


def test_single_coordinate_affinity():
    a = hellinger_affinity(0.5, 0.3)
    assert a == pytest.approx(0.9789, abs=1e-4) and a <= 1 - 0.02


def test_affinity_quadratic_bound():
    rng = np.random.default_rng(0)
    a, b = rng.random(10 ** 4), rng.random(10 ** 4)
    aff = hellinger_affinity(a, b)
    assert np.all(aff <= 1 - (b - a) ** 2 / 2 + 1e-12)
    assert np.all((aff > 0) & (aff <= 1 + 1e-12))
    assert np.allclose(hellinger_affinity(a, a), 1)


def test_hellinger_stationary_is_one():
    r = hellinger_series(presets.fair_coin(), 20, 200)
    np.testing.assert_allclose(r.affinity, 1.0)
    assert r.tail_bound == 0 and r.partial_sums[-1] == pytest.approx(21)


def test_hellinger_dissipative_summable():
    r = hellinger_series(dissipative_schedule(), 300, 3000, fit_range=(100, 300))
    assert r.affinity[0] == 1
    assert r.loglog_slope <= -1.4
    assert np.all(r.affinity[100:] <= (np.arange(100, 301) + 1.0) ** -1.5)


def test_hellinger_preconditions():
    with pytest.raises(DomainError):
        hellinger_series(presets.skewed4_stationary(), 10, 100)
    with pytest.raises(DomainError):
        hellinger_series(presets.fair_coin(), 10, 50)


def test_ceiling_report():
    rng = np.random.default_rng(0)
    p = (0.6, 0.2, 0.1, 0.1)
    assert entropy_ceiling_report(np.zeros(200_000, dtype=int), p, alphabet_size=2).rate == 0
    hot = rng.integers(0, 4, 200_000)
    r = entropy_ceiling_report(hot, p, L=2)
    assert not r.passed and r.rate > 1.9
    ok = rng.integers(0, 2, 200_000)
    assert entropy_ceiling_report(ok, p, L=4).passed
    with pytest.raises(InsufficientDataError):
        entropy_ceiling_report(ok[:10], p)
