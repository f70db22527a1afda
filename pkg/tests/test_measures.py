"""Sequence-space measure models: masses, entropy, approximation, Gibbs states."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fractdim.errors import EstimationError, PreconditionError
from fractdim.measures import (
    BernoulliMeasure,
    GibbsMeasure,
    LocallyConstantPotential,
    MarkovMeasure,
    decode_word,
    encode_word,
    gibbs_from_potential,
    is_ergodic,
    markov_approximation,
    markov_from_word,
    rational_kernel_approximation,
    relative_entropy,
    sample_word,
)
from fractdim.runtime import substream


def two_state_chain(a=0.9, b=0.9):
    """Order-1 chain staying put with prob a resp. b."""
    kernel = np.array([[a, 1 - a], [1 - b, b]])
    return MarkovMeasure.from_kernel(kernel, order=1)


prob2 = st.floats(min_value=0.05, max_value=0.95)


def random_markov(order, m, rng):
    kernel = rng.dirichlet(np.ones(m), size=m**order)
    return MarkovMeasure.from_kernel(kernel, order=order)


class TestEncoding:
    def test_round_trip(self):
        for word in itertools.product(range(3), repeat=4):
            assert decode_word(encode_word(word, 3), 3, 4) == word


class TestBernoulli:
    def test_cylinder_mass(self):
        mu = BernoulliMeasure([0.5, 0.5])
        assert mu.cylinder_mass((0, 1, 1)) == pytest.approx(0.125, abs=1e-15)
        assert mu.cylinder_mass(()) == 1.0

    def test_zero_weight_supported(self):
        mu = BernoulliMeasure([1.0, 0.0])
        assert mu.cylinder_mass((0, 0)) == 1.0
        assert mu.cylinder_mass((0, 1)) == 0.0
        assert mu.entropy() == 0.0

    def test_entropy(self):
        mu = BernoulliMeasure([0.25, 0.75])
        expect = -(0.25 * math.log(0.25) + 0.75 * math.log(0.75))
        assert mu.entropy() == pytest.approx(expect, abs=1e-14)

    def test_marginal_sums_to_one(self):
        mu = BernoulliMeasure([0.2, 0.3, 0.5])
        for n in range(5):
            table = mu.marginal(n)
            assert table.size == 3**n
            assert table.sum() == pytest.approx(1.0, abs=1e-12 * 3**n)

    @given(prob2, st.lists(st.integers(0, 1), min_size=0, max_size=6).map(tuple))
    def test_extension_never_increases_mass(self, p, word):
        mu = BernoulliMeasure([p, 1 - p])
        m0 = mu.cylinder_mass(word)
        for s in (0, 1):
            assert mu.cylinder_mass(word + (s,)) <= m0 + 1e-15


class TestMarkov:
    def test_uniform_symmetric_chain_mass(self):
        nu = two_state_chain(0.9, 0.9)
        assert nu.stationary == pytest.approx([0.5, 0.5], abs=1e-12)
        assert nu.cylinder_mass((0, 1)) == pytest.approx(0.05, abs=1e-12)

    def test_entropy_of_symmetric_chain(self):
        nu = two_state_chain(0.9, 0.9)
        expect = -(0.9 * math.log(0.9) + 0.1 * math.log(0.1))
        assert nu.entropy() == pytest.approx(expect, abs=1e-12)
        assert nu.entropy() == pytest.approx(0.3250829733914482, abs=1e-12)

    def test_deterministic_cycle_entropy_zero(self):
        kernel = np.array([[0.0, 1.0], [1.0, 0.0]])
        nu = MarkovMeasure.from_kernel(kernel, order=1)
        assert nu.entropy() == pytest.approx(0.0, abs=1e-14)
        assert nu.stationary == pytest.approx([0.5, 0.5], abs=1e-12)

    def test_marginals_consistent_with_masses(self):
        rng = substream(7, 0)
        nu = random_markov(2, 2, rng)
        table = nu.marginal(4)
        for code, mass in enumerate(table):
            word = decode_word(code, 2, 4)
            assert mass == pytest.approx(nu.cylinder_mass(word), abs=1e-13)
        assert table.sum() == pytest.approx(1.0, abs=1e-12 * 16)

    def test_short_word_mass_marginalizes(self):
        rng = substream(11, 0)
        nu = random_markov(3, 2, rng)
        # mass of [0] equals the sum over completions to length 3
        total = sum(
            nu.cylinder_mass((0,) + tail)
            for tail in itertools.product(range(2), repeat=2)
        )
        assert nu.cylinder_mass((0,)) == pytest.approx(total, abs=1e-13)

    def test_bad_stationary_rejected(self):
        kernel = np.array([[0.5, 0.5], [0.5, 0.5]])
        with pytest.raises(PreconditionError):
            MarkovMeasure(order=1, stationary=[0.9, 0.1], kernel=kernel)

    def test_non_normalized_row_rejected(self):
        kernel = np.array([[0.5, 0.4], [0.5, 0.5]])
        with pytest.raises(PreconditionError):
            MarkovMeasure(order=1, stationary=[0.5, 0.5], kernel=kernel)

    def test_from_kernel_requires_strong_connectivity(self):
        with pytest.raises(PreconditionError):
            MarkovMeasure.from_kernel(np.eye(2), order=1)


class TestErgodicity:
    def test_mixing_chain_is_ergodic(self):
        assert is_ergodic(two_state_chain(0.9, 0.9))

    def test_identity_kernel_not_ergodic(self):
        nu = MarkovMeasure(order=1, stationary=[0.5, 0.5], kernel=np.eye(2))
        assert not is_ergodic(nu)

    def test_zero_mass_states_ignored(self):
        kernel = np.array(
            [[0.9, 0.1, 0.0], [0.1, 0.9, 0.0], [0.0, 0.0, 1.0]]
        )
        nu = MarkovMeasure(order=1, stationary=[0.5, 0.5, 0.0], kernel=kernel)
        assert is_ergodic(nu)

    def test_dirac_fixed_point_is_ergodic(self):
        nu = MarkovMeasure(order=1, stationary=[1.0, 0.0], kernel=np.eye(2))
        assert is_ergodic(nu)


class TestRelativeEntropy:
    def test_bernoulli_vs_fair_coin(self):
        mu = BernoulliMeasure([0.45, 0.55])
        nu = BernoulliMeasure([0.5, 0.5])
        expect = 0.45 * math.log(0.9) + 0.55 * math.log(1.1)
        assert relative_entropy(mu, nu) == pytest.approx(expect, abs=1e-12)

    def test_skewed_bernoulli_kl(self):
        mu = BernoulliMeasure([0.25, 0.75])
        nu = BernoulliMeasure([0.5, 0.5])
        expect = 0.25 * math.log(0.5) + 0.75 * math.log(1.5)
        assert relative_entropy(mu, nu) == pytest.approx(expect, abs=1e-12)
        assert relative_entropy(mu, nu) == pytest.approx(0.13081203594113697, abs=1e-12)

    def test_self_distance_zero(self):
        nu = two_state_chain(0.8, 0.6)
        assert relative_entropy(nu, nu) == 0.0

    def test_support_failure_is_infinite(self):
        mu = BernoulliMeasure([0.5, 0.5])
        nu = BernoulliMeasure([1.0, 0.0])
        assert relative_entropy(mu, nu) == math.inf

    @given(prob2, prob2, prob2, prob2)
    @settings(max_examples=100)
    def test_nonnegative_and_zero_iff_equal_blocks(self, p, q, a, b):
        mu = two_state_chain(p, q)
        nu = two_state_chain(a, b)
        val = relative_entropy(mu, nu)
        assert val >= 0.0
        gap = np.max(np.abs(mu.marginal(2) - nu.marginal(2)))
        if val < 1e-12:
            assert gap < 1e-5
        if gap == 0.0:
            assert val < 1e-12


class TestMarkovApproximation:
    def test_bernoulli_fixed_point(self):
        mu = BernoulliMeasure([0.3, 0.7])
        approx = markov_approximation(mu, 1)
        assert approx.stationary == pytest.approx(mu.p, abs=1e-14)
        assert np.allclose(approx.kernel, np.tile(mu.p, (2, 1)), atol=1e-14)
        assert relative_entropy(mu, approx) == pytest.approx(0.0, abs=1e-14)

    def test_markov_fixed_point_at_own_order(self):
        nu = two_state_chain(0.85, 0.55)
        again = markov_approximation(nu, 1)
        assert np.allclose(again.kernel, nu.kernel, atol=1e-13)
        assert relative_entropy(nu, again) == pytest.approx(0.0, abs=1e-13)

    def test_entropy_gap_identity(self):
        rng = substream(3, 0)
        mu = random_markov(2, 2, rng)
        nu = markov_approximation(mu, 1)
        gap = relative_entropy(mu, nu)
        assert gap == pytest.approx(nu.entropy() - mu.entropy(), abs=1e-12)
        assert gap > 0  # generic order-2 chain is not order-1

    def test_distance_non_increasing_in_order(self):
        rng = substream(5, 0)
        mu = random_markov(3, 2, rng)
        dists = [relative_entropy(mu, markov_approximation(mu, k)) for k in (1, 2, 3, 4)]
        for lo, hi in zip(dists[1:], dists[:-1]):
            assert lo <= hi + 1e-12
        # at and beyond the true order the approximation is exact
        assert dists[2] == pytest.approx(0.0, abs=1e-12)
        assert dists[3] == pytest.approx(0.0, abs=1e-12)

    def test_marginal_absolute_continuity(self):
        rng = substream(9, 0)
        mu = random_markov(2, 2, rng)
        nu = markov_approximation(mu, 1)
        for n in range(1, 9):
            mu_n = mu.marginal(n)
            nu_n = nu.marginal(n)
            assert not np.any((mu_n > 0) & (nu_n == 0))


class TestRationalKernel:
    def test_exactly_representable_rows_unchanged(self):
        nu = two_state_chain(0.9, 0.5)
        rat = rational_kernel_approximation(nu, 10)
        assert np.allclose(rat.kernel, nu.kernel, atol=1e-15)

    def test_small_entry_floor(self):
        nu = two_state_chain(0.85, 0.85)
        rat = rational_kernel_approximation(nu, 3)
        assert np.allclose(rat.kernel, [[2 / 3, 1 / 3], [1 / 3, 2 / 3]], atol=1e-15)
        assert is_ergodic(rat)

    def test_zero_pattern_preserved(self):
        kernel = np.array([[0.5, 0.5, 0.0], [0.25, 0.5, 0.25], [1.0, 0.0, 0.0]])
        nu = MarkovMeasure.from_kernel(kernel, order=1)
        rat = rational_kernel_approximation(nu, 7)
        assert np.all((rat.kernel == 0) == (kernel == 0))
        assert np.allclose(rat.kernel.sum(axis=1), 1.0, atol=1e-15)

    def test_denominator_too_small_rejected(self):
        kernel = np.array(
            [[0.25, 0.25, 0.25, 0.25]] * 4
        )
        nu = MarkovMeasure.from_kernel(kernel, order=1)
        with pytest.raises(PreconditionError):
            rational_kernel_approximation(nu, 3)

    def test_distance_shrinks_with_denominator(self):
        nu = two_state_chain(0.715, 0.343)
        dists = [
            relative_entropy(nu, rational_kernel_approximation(nu, D))
            for D in (3, 30, 300, 3000)
        ]
        assert dists[-1] < dists[0]
        assert dists[-1] < 1e-6
        assert all(np.isfinite(dists))


class TestSampling:
    def test_deterministic_in_seed(self):
        mu = BernoulliMeasure([0.3, 0.7])
        w1 = sample_word(mu, 1000, seed=42)
        w2 = sample_word(mu, 1000, seed=42)
        assert np.array_equal(w1, w2)
        assert not np.array_equal(w1, sample_word(mu, 1000, seed=43))

    def test_constant_word_from_dirac_chain(self):
        nu = MarkovMeasure(order=1, stationary=[1.0, 0.0], kernel=np.eye(2))
        word = sample_word(nu, 64, seed=0)
        assert np.all(word == 0)

    def test_bernoulli_frequencies(self):
        mu = BernoulliMeasure([0.3, 0.7])
        n = 100_000
        bound = 4 * math.sqrt(0.3 * 0.7 / n)
        for seed in range(20):
            word = sample_word(mu, n, seed=seed)
            assert abs(word.mean() - 0.7) < bound

    def test_markov_block_frequencies(self):
        nu = two_state_chain(0.8, 0.6)
        word = sample_word(nu, 200_000, seed=1)
        emp = markov_from_word(word, order=1, m=2)
        assert np.max(np.abs(emp.kernel - nu.kernel)) < 0.01
        assert np.max(np.abs(emp.stationary - nu.stationary)) < 0.01

    def test_batch_matches_marginal(self):
        nu = two_state_chain(0.9, 0.9)
        rng = substream(12, 0)
        batch = nu.sample_batch(50_000, 2, rng)
        codes = batch[:, 0] * 2 + batch[:, 1]
        freq = np.bincount(codes, minlength=4) / 50_000
        assert np.max(np.abs(freq - nu.marginal(2))) < 0.01

    def test_empirical_model_requires_enough_symbols(self):
        with pytest.raises(PreconditionError):
            markov_from_word([0, 1], order=2, m=2)


def brute_birkhoff_bounds(pot, word):
    """Exact min/max of the length-n Birkhoff sum over the cylinder [word]."""
    n, d, m = len(word), pot.depth, pot.m
    best_lo, best_hi = math.inf, -math.inf
    for tail in itertools.product(range(m), repeat=d - 1):
        full = word + tail
        s = 0.0
        ok = True
        for j in range(n):
            v = pot.table[encode_word(full[j : j + d], m)]
            if v == -math.inf:
                ok = False
                break
            s += v
        if ok:
            best_lo, best_hi = min(best_lo, s), max(best_hi, s)
    return best_lo, best_hi


class TestGibbs:
    def test_depth_one_recovers_bernoulli(self):
        p = np.array([0.2, 0.5, 0.3])
        pot = LocallyConstantPotential(depth=1, m=3, table=np.log(p))
        gm = gibbs_from_potential(pot)
        assert gm.pressure == pytest.approx(0.0, abs=1e-12)
        assert gm.markov.stationary == pytest.approx(p, abs=1e-12)
        assert gm.constant == 1.0

    def test_constant_potential_uniform(self):
        c = -0.35
        pot = LocallyConstantPotential(depth=1, m=2, table=[c, c])
        gm = gibbs_from_potential(pot)
        assert gm.pressure == pytest.approx(math.log(2) + c, abs=1e-12)
        assert gm.markov.stationary == pytest.approx([0.5, 0.5], abs=1e-12)

    def test_golden_mean_shift(self):
        # forbid the word 11; pressure of the zero potential on the
        # remaining subshift is the log of the golden ratio
        table = np.array([0.0, 0.0, 0.0, -math.inf])
        pot = LocallyConstantPotential(depth=2, m=2, table=table)
        gm = gibbs_from_potential(pot)
        golden = (1 + math.sqrt(5)) / 2
        assert gm.pressure == pytest.approx(math.log(golden), abs=1e-10)
        # measure of maximal entropy: entropy equals pressure
        assert gm.entropy() == pytest.approx(gm.pressure, abs=1e-9)
        assert gm.cylinder_mass((1, 1)) == 0.0

    def test_non_irreducible_rejected(self):
        table = np.array([0.0, -math.inf, -math.inf, 0.0])
        pot = LocallyConstantPotential(depth=2, m=2, table=table)
        with pytest.raises(PreconditionError):
            gibbs_from_potential(pot)

    def test_pressure_lipschitz_in_potential(self):
        rng = substream(21, 0)
        for _ in range(25):
            t1 = rng.normal(size=8)
            t2 = t1 + rng.normal(scale=0.3, size=8)
            p1 = gibbs_from_potential(LocallyConstantPotential(3, 2, t1)).pressure
            p2 = gibbs_from_potential(LocallyConstantPotential(3, 2, t2)).pressure
            assert abs(p1 - p2) <= np.max(np.abs(t1 - t2)) + 1e-12

    def test_mass_comparison_with_explicit_constant(self):
        rng = substream(22, 0)
        table = rng.normal(scale=0.8, size=8)
        pot = LocallyConstantPotential(depth=3, m=2, table=table)
        gm = gibbs_from_potential(pot)
        C = gm.constant
        for n in range(1, 11):
            for word in itertools.product(range(2), repeat=n):
                mass = gm.cylinder_mass(word)
                if mass == 0:
                    continue
                s_lo, s_hi = brute_birkhoff_bounds(pot, word)
                ratio_hi = mass * math.exp(n * gm.pressure - s_lo)
                ratio_lo = mass * math.exp(n * gm.pressure - s_hi)
                assert ratio_hi <= C * (1 + 1e-9)
                assert ratio_lo >= (1 / C) * (1 - 1e-9)

    def test_depth_two_markov_matches_direct_mass(self):
        rng = substream(23, 0)
        table = rng.normal(scale=0.5, size=4)
        pot = LocallyConstantPotential(depth=2, m=2, table=table)
        gm = gibbs_from_potential(pot)
        # cylinder masses are shift invariant and sum to 1 per level
        for n in range(1, 7):
            tbl = gm.marginal(n)
            assert tbl.sum() == pytest.approx(1.0, abs=1e-11)

    def test_overflowing_potential_rejected(self):
        pot = LocallyConstantPotential(depth=2, m=2, table=[800.0, 0.0, 0.0, 0.0])
        with pytest.raises(PreconditionError):
            gibbs_from_potential(pot)
