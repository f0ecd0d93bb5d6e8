import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rankgas.plackett_luce import (
    Ranking,
    evaluate_many,
    fisher_information,
    log_pmf,
    sample,
    sample_many,
    score,
)

from conftest import all_orderings, fd_gradient, ref_pmf, ref_score

worths = st.lists(st.floats(-5, 5, allow_nan=False), min_size=2, max_size=6)


class TestRanking:
    def test_rank_lookup(self):
        r = Ranking(4, [2, 0])
        assert r.rank(2) == 1
        assert r.rank(0) == 2
        assert r.rank(3) is None
        assert not r.is_complete
        assert Ranking(2, [1, 0]).is_complete

    @pytest.mark.parametrize("n, ordering", [
        (3, [0, 0, 1]),   # duplicate
        (3, [0, 3]),      # out of range
        (3, []),          # empty
        (2, [0, 1, 1]),   # too long
    ])
    def test_rejects_invalid(self, n, ordering):
        with pytest.raises(ValueError):
            Ranking(n, ordering)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            log_pmf(Ranking(3, [0, 1, 2]), [0.0, 1.0])

    def test_non_finite_worth(self):
        with pytest.raises(ValueError, match="non-finite"):
            score(Ranking(2, [0, 1]), [np.nan, 0.0])


class TestLogPmf:
    def test_uniform_complete(self):
        assert log_pmf(Ranking(3, [0, 1, 2]), [0, 0, 0]) == pytest.approx(math.log(1 / 6), abs=1e-15)

    def test_two_items(self):
        assert log_pmf(Ranking(2, [0, 1]), [math.log(3), 0]) == pytest.approx(math.log(0.75))

    def test_partial_first_place(self):
        assert log_pmf(Ranking(3, [1]), [0, 0, 0]) == pytest.approx(math.log(1 / 3))

    def test_matches_extended_precision_product(self):
        f = np.array([0.5, -0.2, 1.1, 0.0, -1.4])
        for ordering in all_orderings(5):
            expected = float(mpmath_log(ref_pmf(ordering, f)))
            assert log_pmf(Ranking(5, ordering), f) == pytest.approx(expected, abs=1e-12)

    def test_partial_matches_product(self, rng):
        f = rng.normal(size=6)
        for ordering in [(3,), (5, 0), (1, 2, 4), (0, 1, 2, 3, 4)]:
            expected = float(mpmath_log(ref_pmf(ordering, f)))
            assert log_pmf(Ranking(6, ordering), f) == pytest.approx(expected, abs=1e-12)

    def test_large_worths_do_not_overflow(self):
        f = np.array([700.0, -700.0, 650.0])
        val = log_pmf(Ranking(3, [1, 0, 2]), f)
        # stage 1: -700 - logsumexp(700, -700, 650) ; stage 2: 700 - logaddexp(700, 650)
        expected = (-700 - (700 + math.log1p(math.exp(-50))))
        expected += 700 - (700 + math.log1p(math.exp(-50)))
        assert val == pytest.approx(expected, rel=1e-12)
        assert np.all(np.isfinite(score(Ranking(3, [1, 0, 2]), f)))

    @pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
    def test_normalization(self, n, rng):
        f = rng.normal(scale=1.5, size=n)
        total = sum(math.exp(log_pmf(Ranking(n, o), f)) for o in all_orderings(n))
        assert total == pytest.approx(1.0, abs=1e-10)

    @settings(max_examples=50, deadline=None)
    @given(worths, st.floats(-50, 50))
    def test_shift_invariance(self, f, c):
        n = len(f)
        r = Ranking(n, list(range(n))[::-1])
        shifted = np.array(f) + c
        assert log_pmf(r, shifted) == pytest.approx(log_pmf(r, f), abs=1e-10)

    @pytest.mark.parametrize("n", [3, 4, 5])
    def test_marginalization(self, n, rng):
        f = rng.normal(size=n)
        for top in range(1, n):
            prefix = tuple(rng.permutation(n)[:top])
            total = sum(
                math.exp(log_pmf(Ranking(n, o), f))
                for o in all_orderings(n) if o[:top] == prefix
            )
            assert math.exp(log_pmf(Ranking(n, prefix), f)) == pytest.approx(total, abs=1e-10)


class TestScore:
    def test_two_items(self):
        np.testing.assert_allclose(score(Ranking(2, [0, 1]), [0, 0]), [0.5, -0.5], atol=1e-15)

    def test_three_equal(self):
        np.testing.assert_allclose(
            score(Ranking(3, [0, 1, 2]), [0, 0, 0]), [2 / 3, 1 / 6, -5 / 6], atol=1e-15
        )

    def test_partial_one_stage(self):
        np.testing.assert_allclose(
            score(Ranking(3, [0]), [0, 0, 0]), [2 / 3, -1 / 3, -1 / 3], atol=1e-15
        )

    def test_matches_stagewise_formula(self, rng):
        f = rng.normal(size=6)
        for ordering in [(0, 1, 2, 3, 4, 5), (5, 3, 1), (2,)]:
            np.testing.assert_allclose(
                score(Ranking(6, ordering), f), ref_score(ordering, f), atol=1e-13
            )

    @pytest.mark.parametrize("top", [1, 3, 6])
    def test_finite_difference_gradient(self, top, rng):
        f = rng.normal(size=6)
        r = Ranking(6, rng.permutation(6)[:top])
        g = fd_gradient(lambda x: log_pmf(r, x), f, step=1e-6)
        np.testing.assert_allclose(score(r, f), g, atol=1e-6)

    @settings(max_examples=100, deadline=None)
    @given(worths, st.integers(1, 6), st.randoms(use_true_random=False))
    def test_zero_sum(self, f, top, rnd):
        n = len(f)
        order = list(range(n))
        rnd.shuffle(order)
        s = score(Ranking(n, order[: min(top, n)]), f)
        assert abs(s.sum()) <= 1e-12 * n

    @pytest.mark.parametrize("n", [2, 3, 4, 5])
    def test_zero_mean(self, n, rng):
        f = rng.normal(size=n)
        orders = np.array(all_orderings(n))
        logp, scores = evaluate_many(f, orders)
        np.testing.assert_allclose(np.exp(logp) @ scores, 0.0, atol=1e-10)


class TestSample:
    def test_single_item(self, rng):
        assert sample([0.3], rng=rng).ordering == (0,)

    def test_invalid_top(self):
        with pytest.raises(ValueError):
            sample([0.0, 1.0], top=3)
        with pytest.raises(ValueError):
            sample([0.0, 1.0], top=0)

    def test_partial_length(self, rng):
        r = sample(np.zeros(5), top=2, rng=rng)
        assert r.n_ranked == 2 and r.universe_size == 5

    def test_uniform_frequencies(self, rng):
        draws = sample_many(np.zeros(3), 60_000, rng=rng)
        codes = draws @ np.array([9, 3, 1])
        _, counts = np.unique(codes, return_counts=True)
        assert counts.size == 6
        np.testing.assert_allclose(counts / 60_000, 1 / 6, atol=0.01)

    def test_matches_pmf(self, rng):
        f = np.array([1.0, 0.0, -1.0, 0.0])
        n_draws = 200_000
        draws = sample_many(f, n_draws, rng=rng)
        for ordering in all_orderings(4):
            p = math.exp(log_pmf(Ranking(4, ordering), f))
            freq = np.mean(np.all(draws == ordering, axis=1))
            assert abs(freq - p) <= 3 * math.sqrt(p * (1 - p) / n_draws)

    def test_restricted_pool(self, rng):
        draws = sample_many(np.zeros(5), 1000, top=2, rng=rng, available=[1, 0, 1, 1, 0])
        assert set(np.unique(draws)) <= {0, 2, 3}

    def test_extreme_worths(self, rng):
        draws = sample_many(np.array([800.0, -800.0, 0.0]), 100, rng=rng)
        assert np.all(draws == [0, 2, 1])


class TestFisher:
    def test_two_items(self):
        np.testing.assert_allclose(
            fisher_information([0.0, 0.0]), [[0.25, -0.25], [-0.25, 0.25]], atol=1e-15
        )

    @pytest.mark.parametrize("n", [2, 3, 4, 5])
    def test_row_sums_and_psd(self, n, rng):
        info = fisher_information(rng.normal(size=n))
        np.testing.assert_allclose(info.sum(axis=1), 0.0, atol=1e-12)
        np.testing.assert_allclose(info, info.T, atol=0)
        assert np.linalg.eigvalsh(info).min() > -1e-12

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_equals_enumerated_score_covariance(self, n, rng):
        f = rng.normal(size=n)
        expected = np.zeros((n, n))
        for o in all_orderings(n):
            p = float(ref_pmf(o, f))
            s = ref_score(o, f)
            expected += p * np.outer(s, s)
        np.testing.assert_allclose(fisher_information(f), expected, atol=1e-10)

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_equals_negative_expected_hessian(self, n, rng):
        f = rng.normal(size=n)
        probs = [math.exp(log_pmf(Ranking(n, o), f)) for o in all_orderings(n)]
        # E_p0[log p(y; f)] has Hessian at f equal to E[Hessian of log p]
        def expected_loglik(x):
            return sum(p * log_pmf(Ranking(n, o), x) for p, o in zip(probs, all_orderings(n)))
        h = 1e-4
        hess = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                def shifted(a, b):
                    x = f.copy()
                    x[i] += a
                    x[j] += b
                    return expected_loglik(x)
                hess[i, j] = (shifted(h, h) - shifted(h, -h) - shifted(-h, h) + shifted(-h, -h)) / (4 * h * h)
        np.testing.assert_allclose(fisher_information(f), -hess, atol=1e-6)

    def test_refuses_large_universe(self):
        with pytest.raises(ValueError, match="refused"):
            fisher_information(np.zeros(9))


def mpmath_log(x):
    import mpmath

    with mpmath.workdps(50):
        return mpmath.log(x)
