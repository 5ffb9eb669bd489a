import math
from fractions import Fraction
from itertools import product

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from labeltree.objective import (
    SplitDistribution,
    affinity_from_stats,
    balancedness,
    boosting_exponent,
    boosting_node_bound,
    gradient_from_stats,
    gradient_logp,
    gradient_p,
    objective_max,
    objective_value,
    purity,
    split_quality,
)
from oracles import (
    balanced_pure_split,
    balanced_split,
    objective_fraction,
    own_term,
    pure_split,
    random_split,
    rel_error,
)


def split(q, P):
    return SplitDistribution(np.asarray(q, float), np.asarray(P, float))


@st.composite
def splits(draw, max_k=8):
    M = draw(st.integers(2, 6))
    K = draw(st.integers(1, max_k))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    q, P = random_split(rng, K, M)
    return split(q, P)


class TestObjectiveValue:
    def test_pure_balanced_binary(self):
        assert objective_value(split([0.5, 0.5], [[1, 0], [0, 1]])) == pytest.approx(1.0, abs=1e-15)

    def test_identical_rows_give_zero(self):
        P = np.tile([0.2, 0.3, 0.5], (4, 1))
        assert objective_value(split([0.1, 0.2, 0.3, 0.4], P)) == pytest.approx(0.0, abs=1e-15)

    def test_pure_unbalanced_three_way(self):
        q = [Fraction(1, 2), Fraction(3, 10), Fraction(1, 5)]
        exact = objective_fraction(q, np.eye(3, dtype=int).tolist())
        assert float(exact) == pytest.approx(0.826667, abs=1e-6)
        got = objective_value(split([0.5, 0.3, 0.2], np.eye(3)))
        assert got == pytest.approx(float(exact), abs=1e-15)
        assert got < objective_max(3)

    def test_matches_rational_oracle_on_random_rationals(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            K, M = rng.integers(1, 7), rng.integers(2, 5)
            wq = rng.integers(1, 20, size=K)
            wP = rng.integers(0, 10, size=(K, M))
            wP[:, 0] += 1
            q = [Fraction(int(a), int(wq.sum())) for a in wq]
            P = [[Fraction(int(a), int(row.sum())) for a in row] for row in wP]
            exact = objective_fraction(q, P)
            got = objective_value(split([float(x) for x in q], [[float(x) for x in r] for r in P]))
            assert got == pytest.approx(float(exact), abs=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            split([0.5, 0.5], [[1.0, 0.0]])

    @given(splits(), st.data())
    @settings(max_examples=200, deadline=None)
    def test_permutation_invariance(self, s, data):
        K, M = s.P_cond.shape
        cols = np.array(data.draw(st.permutations(range(M))))
        rows = np.array(data.draw(st.permutations(range(K))))
        base = objective_value(s)
        assert objective_value(split(s.q, s.P_cond[:, cols])) == pytest.approx(base, abs=1e-12)
        assert objective_value(split(s.q[rows], s.P_cond[rows])) == pytest.approx(base, abs=1e-12)

    @given(splits())
    @settings(max_examples=300, deadline=None)
    def test_within_bounds(self, s):
        J = objective_value(s)
        assert -1e-12 <= J <= objective_max(s.arity) + 1e-12


class TestObjectiveMax:
    def test_values(self):
        assert objective_max(2) == 1.0
        assert objective_max(5) == pytest.approx(0.64)

    def test_decreasing(self):
        vals = [objective_max(M) for M in range(2, 200)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_rejects_unary(self):
        with pytest.raises(ValueError):
            objective_max(1)


class TestSplitQualityBounds:
    """Scaled-down runs of the split-quality bounds (the full sweep is an acceptance test)."""

    def test_balanced_pure_attains_max(self):
        rng = np.random.default_rng(0)
        for M in (2, 3, 5):
            for K in range(M, 11):
                q, P = balanced_pure_split(rng, K, M)
                s = split(q, P)
                assert balancedness(s) == pytest.approx(1 / M, abs=1e-15)
                assert purity(s) == 0.0
                assert abs(objective_value(s) - objective_max(M)) <= 1e-12

    def test_imperfect_splits_fall_short(self):
        rng = np.random.default_rng(1)
        seen = 0
        for _ in range(2000):
            M, K = rng.choice([2, 3, 5]), rng.integers(2, 11)
            s = split(*random_split(rng, K, M))
            if purity(s) > 0.01 or abs(balancedness(s) - 1 / M) > 0.01:
                seen += 1
                assert objective_value(s) < objective_max(M) - 1e-12
        assert seen > 1000

    def test_pure_splits_balance_bound(self):
        rng = np.random.default_rng(2)
        for _ in range(2000):
            M, K = rng.choice([2, 3, 5]), rng.integers(2, 11)
            s = split(*pure_split(rng, K, M))
            gap = objective_max(M) - objective_value(s)
            assert balancedness(s) >= 1 / M - math.sqrt(M * max(gap, 0.0)) / 2 - 1e-9

    def test_balanced_binary_splits_purity_bound(self):
        rng = np.random.default_rng(3)
        for _ in range(2000):
            s = split(*balanced_split(rng, int(rng.integers(2, 11)), 2))
            assert np.allclose(s.p, 0.5, atol=1e-12)
            assert purity(s) <= (objective_max(2) - objective_value(s)) / 2 + 1e-9

    def test_balanced_splits_purity_with_wide_rows(self):
        # For M >= 3 a label spreading at least 1/M over several children
        # loosens the bound by (1/M)(1 - 2/M) per extra such child.
        rng = np.random.default_rng(3)
        for _ in range(2000):
            M, K = int(rng.choice([2, 3, 5])), int(rng.integers(2, 11))
            s = split(*balanced_split(rng, K, M))
            wide = (s.P_cond >= 1 / M).sum(axis=1) - 1
            slack = (1 / M) * (1 - 2 / M) * float(s.q @ wide)
            assert purity(s) <= (objective_max(M) - objective_value(s)) / 2 + slack + 1e-9

    def test_balanced_three_way_counterexample(self):
        q = [0.5, 0.5]
        P = [[0.5, 0.0, 0.5], [1 / 6, 2 / 3, 1 / 6]]
        s = split(q, P)
        np.testing.assert_allclose(s.p, 1 / 3, atol=1e-15)
        assert purity(s) > (objective_max(3) - objective_value(s)) / 2


class TestGradients:
    def test_binary_entry(self):
        # q_i = 0.25 and a pure row against a balanced marginal
        s = split([0.25, 0.25, 0.5], [[1, 0], [1, 0], [0, 1]])
        assert s.p[0] == pytest.approx(0.5)
        assert gradient_p(s)[0, 0] == pytest.approx(0.1875)
        assert gradient_logp(s)[0, 0] == pytest.approx(0.1875)

    def test_log_entry(self):
        s = split([0.25, 0.75], [[0.8, 0.2], [0.4, 0.6]])
        assert s.p[0] == pytest.approx(0.5)
        assert gradient_logp(s)[0, 0] == pytest.approx(0.15)

    def test_degenerate_q_rows_vanish(self):
        s = split([1.0, 0.0], [[0.3, 0.7], [0.9, 0.1]])
        assert np.all(gradient_p(s) == 0)

    def test_sign_zero_at_marginal(self):
        P = np.tile([0.3, 0.7], (3, 1))
        assert np.all(gradient_p(split([0.2, 0.3, 0.5], P)) == 0)

    @given(splits())
    @settings(max_examples=200, deadline=None)
    def test_log_gradient_identity(self, s):
        np.testing.assert_allclose(gradient_logp(s), gradient_p(s) * s.P_cond, rtol=0, atol=1e-15)

    def _check_fd(self, rng, log_space):
        """Differentiate each label's own term, with p recomputed, away from kinks."""
        checked = 0
        while checked < 100:
            M, K = int(rng.integers(2, 6)), int(rng.integers(2, 9))
            q, P = random_split(rng, K, M, concentration=2.0)
            s = split(q, P)
            G = gradient_logp(s) if log_space else gradient_p(s)
            i, j = int(rng.integers(K)), int(rng.integers(M))
            if abs(P[i, j] - s.p[j]) < 1e-3:
                continue

            def f(x):
                P2 = P.copy()
                P2[i, j] = math.exp(x) if log_space else x
                return own_term(q, P2, i, M)

            x0 = math.log(P[i, j]) if log_space else P[i, j]
            h = 1e-5
            fd = (f(x0 + h) - f(x0 - h)) / (2 * h)
            assert rel_error(G[i, j], fd) <= 1e-4, (G[i, j], fd)
            checked += 1

    def test_probability_gradient_finite_difference(self):
        self._check_fd(np.random.default_rng(4), log_space=False)

    def test_log_gradient_finite_difference(self):
        self._check_fd(np.random.default_rng(5), log_space=True)


class TestFromStats:
    def test_matches_split_gradient(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            K, M = rng.integers(1, 8), rng.integers(2, 5)
            counts = rng.integers(1, 50, size=K).astype(float)
            P = rng.dirichlet(np.ones(M), size=K)
            sums = P * counts[:, None]
            s = split(counts / counts.sum(), P)
            np.testing.assert_allclose(gradient_from_stats(sums, counts), gradient_p(s), atol=1e-12)
            np.testing.assert_allclose(gradient_from_stats(sums, counts, log_space=True), gradient_logp(s),
                                       atol=1e-12)

    def test_cold_labels_have_zero_rows(self):
        sums = np.array([[3.0, 1.0], [0.0, 0.0]])
        counts = np.array([4.0, 0.0])
        g = gradient_from_stats(sums, counts)
        assert np.all(g[1] == 0)
        assert np.all(affinity_from_stats(sums, counts)[1] == 0)

    def test_empty_node(self):
        z = np.zeros((3, 2))
        assert np.all(gradient_from_stats(z, np.zeros(3)) == 0)
        assert np.all(affinity_from_stats(z, np.zeros(3)) == 0)

    def test_affinity(self):
        sums = np.array([[3.0, 1.0], [1.0, 3.0]])
        counts = np.array([4.0, 4.0])
        np.testing.assert_allclose(affinity_from_stats(sums, counts), [[0.25, -0.25], [-0.25, 0.25]])


class TestQuality:
    def test_balancedness_examples(self):
        assert balancedness(split([0.5, 0.5], [[1, 0], [0, 1]])) == 0.5
        assert balancedness(split([0.9, 0.1], [[1, 0], [0, 1]])) == pytest.approx(0.1)

    def test_purity_examples(self):
        assert purity(split([0.5, 0.5], [[1, 0], [0, 1]])) == 0.0
        assert purity(split([1.0], [[0.5, 0.5]])) == pytest.approx(0.5)

    @given(splits())
    @settings(max_examples=200, deadline=None)
    def test_recomputed_independently(self, s):
        K, M = s.P_cond.shape
        p = [sum(s.q[i] * s.P_cond[i, j] for i in range(K)) for j in range(M)]
        alpha = sum(s.q[i] * min(s.P_cond[i, j], 1 - s.P_cond[i, j]) for i in range(K) for j in range(M)) / M
        assert balancedness(s) == pytest.approx(min(p), abs=1e-12)
        assert purity(s) == pytest.approx(alpha, abs=1e-12)
        sq = split_quality(s)
        assert (sq.J_star, sq.beta) == (objective_max(M), balancedness(s))


class TestBound:
    def test_reference_point(self):
        mpmath.mp.dps = 50
        M, g, K, kappa = 2, mpmath.mpf("0.5"), 2, mpmath.mpf("0.5")
        e = 16 * (M - 1) * mpmath.log(K) / (mpmath.log(mpmath.e, 2) * M * M * g * g)
        ref = (1 / kappa) ** e
        assert boosting_exponent(0.5, 2, 2, balanced=True) == pytest.approx(7.687, abs=1e-3)
        got = boosting_node_bound(0.5, 0.5, 2, 2, balanced=True)
        assert got == pytest.approx(206.1, rel=1e-3)
        assert abs(got - float(ref)) / float(ref) <= 1e-3

    def test_general_matches_high_precision(self):
        mpmath.mp.dps = 50
        for M, g, K, kappa in [(2, 0.3, 10, 0.5), (5, 0.1, 100, 0.9), (3, 0.2, 1000, 0.99)]:
            gm, km = mpmath.mpf(g), mpmath.mpf(kappa)
            e = 16 * (M * (1 - 2 * gm) + 2 * gm) * (M - 1) * mpmath.log(K) / (mpmath.log(mpmath.e, 2) * M * M * gm * gm)
            ref = mpmath.log(1 / km) * e
            got = math.log(boosting_node_bound(kappa, g, M, K))
            assert got == pytest.approx(float(ref), rel=1e-12)

    def test_kappa_one(self):
        assert boosting_node_bound(1.0, 0.3, 4, 50) == 1.0
        assert boosting_node_bound(1.0, 0.3, 4, 50, balanced=True) == 1.0

    def test_overflow_is_inf(self):
        assert boosting_node_bound(1e-300, 0.01, 2, 10**6) == math.inf

    def test_monotone_on_grid(self):
        gammas = np.linspace(0.05, 0.5, 10)
        kappas = np.linspace(0.95, 0.05, 10)
        for M, K, bal in product((2, 3, 5), (2, 10, 1000), (False, True)):
            for kappa in kappas:
                vals = [boosting_node_bound(kappa, g, M, K, bal) for g in gammas]
                assert all(a >= b for a, b in zip(vals, vals[1:]))
            for g in gammas:
                vals = [boosting_node_bound(k, g, M, K, bal) for k in kappas]
                assert all(a <= b for a, b in zip(vals, vals[1:]))

    @pytest.mark.parametrize("kw", [dict(kappa=0.0), dict(kappa=1.5), dict(gamma=0.0), dict(gamma=-1.0)])
    def test_domain_errors(self, kw):
        args = dict(kappa=0.5, gamma=0.3, M=3, K=10) | kw
        with pytest.raises(ValueError):
            boosting_node_bound(**args)

    def test_gamma_outside_interval(self):
        with pytest.raises(ValueError):
            boosting_node_bound(0.5, 5.0, 3, 10)
