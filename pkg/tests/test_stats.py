import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from phantomcal.stats import (
    bh_adjust,
    mann_whitney_u,
    median_iqr,
    shapiro_wilk,
    summarize,
    wilcoxon_signed_rank,
)

finite_floats = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)


class TestShapiroWilk:
    def test_n3_is_exact_closed_form(self):
        # closed form for n=3: W = (sqrt(1/2) * (x(3) - x(1)))^2 / SS
        assert abs(shapiro_wilk([1.0, 2.0, 3.0]).statistic - 1.0) <= 1e-9
        rng = np.random.default_rng(5)
        for _ in range(100):
            x = rng.normal(0, 4, 3)
            while len(set(x.tolist())) < 3:
                x = rng.normal(0, 4, 3)
            xs = np.sort(x)
            w_closed = (math.sqrt(0.5) * (xs[2] - xs[0])) ** 2 / ((x - x.mean()) ** 2).sum()
            assert abs(shapiro_wilk(x).statistic - w_closed) <= 1e-9

    def test_zero_variance_rejected(self):
        with pytest.raises(ValueError, match="variance"):
            shapiro_wilk([2.0, 2.0, 2.0])

    @pytest.mark.parametrize("n", [2, 5001])
    def test_size_range(self, n):
        with pytest.raises(ValueError, match="size"):
            shapiro_wilk(list(range(n)))


class TestMannWhitney:
    def test_hand_example(self):
        res = mann_whitney_u([1, 2], [3, 4])
        assert res.statistic == 0.0
        assert res.method == "exact"
        assert abs(res.p_two_sided - 2.0 / 6.0) <= 1e-12

    def test_identical_multisets_give_p_one(self):
        res = mann_whitney_u([1, 2, 3], [1, 2, 3])
        assert res.p_two_sided == 1.0

    def test_swap_symmetry(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            xs = rng.normal(0, 1, int(rng.integers(1, 9))).tolist()
            ys = rng.normal(0.5, 1, int(rng.integers(1, 9))).tolist()
            a = mann_whitney_u(xs, ys)
            b = mann_whitney_u(ys, xs)
            assert abs(a.p_two_sided - b.p_two_sided) <= 1e-12
            assert abs(a.statistic + b.statistic - len(xs) * len(ys)) <= 1e-9

    def test_empty_sample_rejected(self):
        with pytest.raises(ValueError):
            mann_whitney_u([], [1.0])

    def test_exact_matches_enumeration_small_sizes(self):
        # p for tie-free data depends only on the rank pattern, so checking
        # one representative per achievable U per size pair covers all inputs
        for n1 in range(1, 9):
            for n2 in range(1, 9):
                hist = oracles.mwu_u_histogram(n1, n2)
                total = sum(c for _, c in hist)
                seen = set()
                import itertools

                for subset in itertools.combinations(range(1, n1 + n2 + 1), n1):
                    u = sum(subset) - n1 * (n1 + 1) / 2.0
                    if u in seen:
                        continue
                    seen.add(u)
                    xs = [float(r) for r in subset]
                    ys = [float(r) for r in range(1, n1 + n2 + 1) if r not in subset]
                    res = mann_whitney_u(xs, ys)
                    assert res.method == "exact"
                    p_le = sum(c for uu, c in hist if uu <= u + 1e-9) / total
                    p_ge = sum(c for uu, c in hist if uu >= u - 1e-9) / total
                    expected = min(1.0, 2.0 * min(p_le, p_ge))
                    assert abs(res.p_two_sided - expected) <= 1e-12, (n1, n2, u)

    def test_large_samples_use_approximation(self):
        rng = np.random.default_rng(1)
        res = mann_whitney_u(rng.normal(0, 1, 30).tolist(), rng.normal(1, 1, 25).tolist())
        assert res.method == "normal-approximation"
        assert 0.0 <= res.p_two_sided <= 1.0

    @given(
        st.lists(st.integers(0, 50), min_size=1, max_size=8),
        st.lists(st.integers(0, 50), min_size=1, max_size=8),
    )
    @settings(max_examples=200, deadline=None)
    def test_u_sum_property(self, xs, ys):
        a = mann_whitney_u([float(v) for v in xs], [float(v) for v in ys])
        b = mann_whitney_u([float(v) for v in ys], [float(v) for v in xs])
        assert abs(a.statistic + b.statistic - len(xs) * len(ys)) <= 1e-9
        assert 0.0 <= a.p_two_sided <= 1.0

    def test_permutation_invariance(self):
        xs = [3.0, 1.0, 4.0, 1.5]
        ys = [2.0, 5.0, 0.5]
        base = mann_whitney_u(xs, ys)
        shuffled = mann_whitney_u(list(reversed(xs)), [5.0, 0.5, 2.0])
        assert base == shuffled


class TestWilcoxon:
    def test_hand_examples(self):
        res = wilcoxon_signed_rank([(1, 0), (2, 0), (3, 0)])
        assert res.p_two_sided == pytest.approx(0.25, abs=1e-12)
        res = wilcoxon_signed_rank([(5, 0)])
        assert res.p_two_sided == 1.0

    def test_sign_symmetry(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            d = rng.normal(0.3, 1, int(rng.integers(1, 11)))
            d = d[d != 0]
            if len(d) == 0:
                continue
            pos = wilcoxon_signed_rank([(x, 0.0) for x in d])
            neg = wilcoxon_signed_rank([(-x, 0.0) for x in d])
            assert abs(pos.p_two_sided - neg.p_two_sided) <= 1e-12
            assert pos.statistic == neg.statistic

    def test_all_zero_differences_rejected(self):
        with pytest.raises(ValueError, match="zero"):
            wilcoxon_signed_rank([(1.0, 1.0), (2.0, 2.0)])

    def test_zero_differences_dropped(self):
        with_zeros = wilcoxon_signed_rank([(1, 0), (2, 0), (3, 0), (4, 4)])
        without = wilcoxon_signed_rank([(1, 0), (2, 0), (3, 0)])
        assert with_zeros == without

    def test_exact_matches_enumeration(self):
        rng = np.random.default_rng(3)
        for n in range(1, 11):
            for _ in range(30):
                magnitudes = rng.integers(1, 6, n).astype(float)  # ties likely
                signs = rng.choice([-1.0, 1.0], n)
                d = magnitudes * signs
                res = wilcoxon_signed_rank([(x, 0.0) for x in d])
                w_oracle, p_oracle = oracles.wilcoxon_exact_p(d.tolist())
                assert res.method == "exact"
                assert res.statistic == pytest.approx(w_oracle, abs=1e-9)
                assert res.p_two_sided == pytest.approx(p_oracle, abs=1e-12)

    def test_exhaustive_sign_patterns_small_n(self):
        import itertools

        magnitudes = [1.0, 2.0, 2.0, 4.0, 5.5]
        for signs in itertools.product((-1.0, 1.0), repeat=len(magnitudes)):
            d = [m * s for m, s in zip(magnitudes, signs)]
            res = wilcoxon_signed_rank([(x, 0.0) for x in d])
            _, p_oracle = oracles.wilcoxon_exact_p(d)
            assert res.p_two_sided == pytest.approx(p_oracle, abs=1e-12)

    def test_large_n_uses_approximation(self):
        rng = np.random.default_rng(4)
        d = rng.normal(0.5, 1, 40)
        res = wilcoxon_signed_rank([(x, 0.0) for x in d])
        assert res.method == "normal-approximation"
        assert 0.0 <= res.p_two_sided <= 1.0


class TestBHAdjust:
    def test_hand_example(self):
        assert bh_adjust([0.01, 0.02, 0.04]) == pytest.approx([0.03, 0.03, 0.04], abs=1e-12)

    def test_single_p_unchanged(self):
        assert bh_adjust([0.2]) == [0.2]

    def test_all_equal_stay_equal(self):
        assert bh_adjust([0.3, 0.3, 0.3, 0.3]) == pytest.approx([0.3] * 4, abs=1e-12)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            bh_adjust([0.5, 1.2])

    @given(st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=1, max_size=40))
    @settings(max_examples=300, deadline=None)
    def test_matches_stepup_definition(self, ps):
        adj = bh_adjust(ps)
        oracle = oracles.bh_stepup(ps)
        assert adj == pytest.approx(oracle, abs=1e-12)
        assert all(a >= p - 1e-12 for a, p in zip(adj, ps))

    def test_monotone_in_raw_order(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            ps = rng.random(int(rng.integers(1, 60))).tolist()
            adj = bh_adjust(ps)
            pairs = sorted(zip(ps, adj))
            for (_, a1), (_, a2) in zip(pairs, pairs[1:]):
                assert a1 <= a2 + 1e-12


class TestSummarize:
    def test_normal_sample_uses_mean_sd(self):
        rng = np.random.default_rng(42)
        text = summarize(rng.normal(10, 2, 50).tolist())
        assert "±" in text

    def test_skewed_sample_uses_median_iqr(self):
        text = summarize([1.0, 1.0, 1.0, 1.0, 100.0])
        assert "(" in text and "±" not in text

    def test_too_small_rejected(self):
        with pytest.raises(ValueError):
            summarize([1.0, 2.0])

    def test_median_iqr_values(self):
        med, iqr = median_iqr([1.0, 2.0, 3.0, 4.0])
        assert med == 2.5
        assert iqr == pytest.approx(1.5, abs=1e-12)
