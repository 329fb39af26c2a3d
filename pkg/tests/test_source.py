import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chisquare

from nseb import presets
from nseb.errors import CapacityError, ConfigError, DomainError
from nseb.source import (Alphabet, CountableSchedule, MarginalSchedule, Window, block_uniforms, dissipative_schedule,
                         kakutani_divergence, load_schedule, marginal_at, prob_vector, sample_window,
                         schedule_from_json, shift_nonsingularity_sum, truncate_alphabet)

BIN = Alphabet((0, 1))


def test_alphabet_invariants():
    with pytest.raises(DomainError):
        Alphabet((0,))
    with pytest.raises(DomainError):
        Alphabet((0, 0))
    with pytest.raises(DomainError):
        Alphabet((0, 1), marker_a=0, marker_b=0)
    with pytest.raises(DomainError):
        Alphabet(("a", "b"), marker_a="c")
    ab = Alphabet(("a", "b"))
    assert ab.a == 0 and ab.b == 1
    assert ab.encode("b a a").tolist() == [1, 0, 0]


def test_prob_vector_modes():
    from fractions import Fraction
    assert prob_vector([Fraction(1, 3), Fraction(2, 3)], rational=True)[0] == Fraction(1, 3)
    with pytest.raises(DomainError):
        prob_vector([0.5, 0.6])
    with pytest.raises(DomainError):
        prob_vector(["1/3", "1/3"], rational=True)


def test_stationary_marginal():
    s = MarginalSchedule.stationary(BIN, [0.5, 0.5])
    assert marginal_at(s, 7).tolist() == [0.5, 0.5]


def test_power_decay_before_clipping():
    s = MarginalSchedule.power_decay(BIN, [0.5, 0.5], exponent=0.5, scale=0.5, clip=0.1)
    np.testing.assert_allclose(s.marginal_at(4), [0.25, 0.75])
    np.testing.assert_allclose(s.marginal_at(-4), [0.25, 0.75])


def test_power_decay_clipped_near_origin():
    s = presets.fair_power_decay()
    np.testing.assert_allclose(s.marginal_at(1), [1e-3, 1 - 1e-3])
    np.testing.assert_allclose(s.marginal_at(4), [1e-3, 1 - 1e-3])


def test_dissipative_schedule_at_98():
    s = dissipative_schedule()
    np.testing.assert_allclose(s.marginal_at(98), [1 - 1e-3, 1e-3])
    np.testing.assert_allclose(s.marginal_at(398), [0.5, 0.5])
    assert s.doeblin_only_one_sided


@pytest.mark.parametrize("sched", [presets.fair_power_decay(), presets.skewed4_power_decay(),
                                   dissipative_schedule(), presets.skewed4_table()])
def test_marginals_are_probabilities(sched):
    m = sched.marginals(np.arange(-5000, 5000))
    np.testing.assert_allclose(m.sum(axis=1), 1.0, atol=1e-12)
    assert m.min() >= 0
    if not sched.doeblin_only_one_sided:
        assert m.min() >= sched.doeblin_floor - 1e-15


@pytest.mark.parametrize("sched", [presets.fair_power_decay(), presets.skewed4_power_decay()])
def test_marginals_converge_to_limit(sched):
    tv = [np.abs(sched.marginal_at(i) - sched.limiting).sum() for i in (10 ** 3, 10 ** 6)]
    assert tv[1] < tv[0] < 0.25
    # amplitude scale * 10^-3 spread over the direction's L1 norm
    q = sched.params
    assert tv[1] == pytest.approx(q["scale"] * 1e-3 * np.abs(q["direction"]).sum(), rel=1e-6)


def test_degenerate_window_all_first_symbol():
    s = MarginalSchedule.stationary(BIN, [1.0, 0.0])
    assert not sample_window(s, -50, 50, 3).symbols.any()


def test_fair_coin_frequency():
    w = sample_window(presets.fair_coin(), 0, 10 ** 6 - 1, 12)
    assert abs((w.symbols == 0).mean() - 0.5) < 0.002


def test_position_stability_and_replay():
    s = presets.skewed4_power_decay()
    a = sample_window(s, 0, 9, 5)
    b = sample_window(s, -5, 14, 5)
    assert np.array_equal(a.symbols, b.slice(0, 9).symbols)
    assert np.array_equal(sample_window(s, -70000, 70000, 5).symbols, sample_window(s, -70000, 70000, 5).symbols)
    assert not np.array_equal(sample_window(s, 0, 999, 5).symbols, sample_window(s, 0, 999, 6).symbols)


@settings(max_examples=30, deadline=None)
@given(st.integers(-300_000, 300_000), st.integers(0, 140_000), st.integers(0, 5000), st.integers(0, 2 ** 64 - 1))
def test_position_stability_property(m, length, inner, seed):
    s = presets.fair_power_decay()
    outer = sample_window(s, m, m + length, seed)
    lo = m + min(inner, length)
    hi = min(m + length, lo + 3000)
    assert np.array_equal(outer.slice(lo, hi).symbols, sample_window(s, lo, hi, seed).symbols)


def test_capacity_error():
    with pytest.raises(CapacityError):
        sample_window(presets.fair_coin(), 0, 10 ** 6, 0, max_length=1000)


@pytest.mark.slow
@pytest.mark.parametrize("pos", [-7, 0, 3, 40, 5000])
def test_sampled_marginals_goodness_of_fit(pos):
    # 10^5 replicates come from 10^5 seeds at a fixed position
    s = presets.skewed4_power_decay()
    x = np.array([sample_window(s, pos, pos, seed).symbols[0] for seed in range(100_000)])
    obs = np.bincount(x, minlength=4)
    exp = s.marginal_at(pos) * x.size
    keep = exp > 0
    assert chisquare(obs[keep], exp[keep] * obs[keep].sum() / exp[keep].sum()).pvalue > 0.001


def test_kakutani_identical():
    r = kakutani_divergence(presets.fair_coin(), presets.fair_coin(), 1000)
    assert r.partial_sum == 0 and r.verdict == "equivalent"


def test_kakutani_symmetric_and_zero_iff_equal():
    a, b = presets.fair_power_decay(0.5), presets.fair_power_decay(0.7)
    assert kakutani_divergence(a, b, 500).partial_sum == pytest.approx(kakutani_divergence(b, a, 500).partial_sum)
    assert kakutani_divergence(a, b, 500).partial_sum > 0


def test_kakutani_verdicts():
    fair = presets.fair_coin()
    sing = kakutani_divergence(presets.fair_power_decay(0.5), fair, 10 ** 5)
    assert sing.verdict == "singular"
    # 2 sum over |n| of 1/|n| ~ 4 log N for the |n|^-1/2 perturbation
    assert sing.partial_sum == pytest.approx(4 * math.log(10 ** 5), rel=0.05)
    eq = kakutani_divergence(presets.fair_power_decay(1.0), fair, 10 ** 5)
    assert eq.verdict == "equivalent" and eq.last_decade_increment < 1e-6


def test_kakutani_alphabet_mismatch():
    with pytest.raises(DomainError):
        kakutani_divergence(presets.fair_coin(), presets.skewed4_stationary(), 100)


def test_shift_sum_stationary_zero():
    assert float(shift_nonsingularity_sum(presets.fair_coin(), 100)) == 0


def test_shift_sum_dissipative_converges():
    r = shift_nonsingularity_sum(dissipative_schedule(), 10 ** 5)
    assert r.verdict == "convergent"
    # fourth-root telescoping: sum_a |sqrt u - sqrt v|^2 <= |u - v| summed over n
    assert r.partial_sum < 2 * 2


def test_shift_sum_alternating_diverges():
    alt = MarginalSchedule.from_function(BIN, [0.5, 0.5], lambda i: np.where((i % 2 == 0)[:, None],
                                         [0.25, 0.75], [0.75, 0.25]), 0.25)
    term = 2 * (math.sqrt(0.75) - math.sqrt(0.25)) ** 2
    r = shift_nonsingularity_sum(alt, 100)
    assert r.partial_sum == pytest.approx(term * 201)
    assert r.verdict == "divergent"


def test_truncate_geometric():
    g = CountableSchedule.geometric(0.5)
    np.testing.assert_allclose(truncate_alphabet(g, 1).limiting, [0.5, 0.5])
    np.testing.assert_allclose(truncate_alphabet(g, 3).limiting, [0.5, 0.25, 0.125, 0.125])
    assert abs(truncate_alphabet(g, 10).params["entropy_bits"] - 2.0) < 0.03


def test_truncate_non_summable():
    with pytest.raises(DomainError):
        truncate_alphabet(CountableSchedule(lambda a: 1.0 / (np.asarray(a) + 1.0)), 3)


def test_truncate_index_dependent():
    src = CountableSchedule(CountableSchedule.geometric(0.5).weights,
                            perturb=lambda i, a: (1 - 0.25) * 0.25 ** np.asarray(a, float) if i == 0
                            else 0.5 * 0.5 ** np.asarray(a, float))
    s = truncate_alphabet(src, 2)
    np.testing.assert_allclose(s.marginal_at(0), [0.75, 0.1875, 0.0625])
    np.testing.assert_allclose(s.marginal_at(1), [0.5, 0.25, 0.25])


def test_schedule_file_roundtrip(tmp_path):
    s = presets.skewed4_power_decay()
    path = tmp_path / "s.json"
    path.write_text(json.dumps(s.to_dict()))
    t = load_schedule(path)
    np.testing.assert_array_equal(t.marginals(np.arange(-50, 50)), s.marginals(np.arange(-50, 50)))
    assert t.digest() == s.digest()


def test_schedule_file_errors():
    with pytest.raises(ConfigError, match="line 2, column"):
        schedule_from_json('{"alphabet": [0, 1],\n "kind": "stationary" "p": [1, 0]}')
    with pytest.raises(ConfigError, match="unknown key 'colour'"):
        schedule_from_json('{"alphabet": [0, 1], "kind": "stationary", "p": [0.5, 0.5], "colour": 1}')
    with pytest.raises(ConfigError):
        schedule_from_json('{"alphabet": [0, 1], "kind": "stationary", "p": [0.5, 0.6]}')


def test_table_exceptions():
    s = MarginalSchedule.table(BIN, [0.5, 0.5], {0: [1.0, 0.0], 3: [0.4, 0.6]}, exceptions=[0])
    assert s.doeblin_floor == 0.4
    assert s.exceptions == {0}
    np.testing.assert_allclose(s.marginal_at(3), [0.4, 0.6])


def test_window_helpers():
    w = Window.from_tokens("a b b", Alphabet(("a", "b")), start=10)
    assert w.end == 12 and w.at(11) == 1
    assert w.relocated(-4).start == -4
    assert w.tokens() == ["a", "b", "b"]


@pytest.mark.parametrize("lo,hi", [(0, 0), (1, 9), (3, 4), (4, 4), (77, 4000), (65535, 65535)])
def test_block_uniform_jump_matches_full_block(lo, hi):
    full = block_uniforms(3, -2)
    np.testing.assert_array_equal(block_uniforms(3, -2, lo, hi), full[lo:hi + 1])
