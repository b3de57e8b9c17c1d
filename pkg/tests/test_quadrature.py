import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aniso_uq.errors import DomainError, ResourceError, ValidationError
from aniso_uq.quadrature import (
    combination_coeffs,
    gauss_legendre_1d,
    halton_rule,
    mc_rule,
    mc_sample_count,
    points_per_index,
    qmc_sample_count,
    sg_index_set,
    sg_level_schedule,
    sg_rule,
    sg_weights,
)


def radical_inverse(i, base):
    out, f = 0.0, 1.0 / base
    while i:
        i, d = divmod(i, base)
        out += d * f
        f /= base
    return out


def brute_coeff(q, w, alpha):
    w = np.asarray(w)
    return sum(
        (-1) ** sum(beta) for beta in itertools.product((0, 1), repeat=len(w)) if np.dot(np.add(alpha, beta), w) <= q + 1e-12
    )


def brute_index_set(q, w, amax):
    w = np.asarray(w)
    return {
        alpha
        for alpha in itertools.product(range(amax + 1), repeat=len(w))
        if q - w.sum() - 1e-12 <= np.dot(alpha, w) <= q + 1e-12
    }


class TestMonteCarlo:
    def test_deterministic(self):
        a, b = mc_rule(3, 20, 7), mc_rule(3, 20, 7)
        np.testing.assert_array_equal(a.nodes, b.nodes)

    def test_component_means(self):
        rule = mc_rule(4, 100_000, 0)
        assert np.all(np.abs(rule.nodes.mean(axis=0)) <= 0.02)
        assert np.all(np.abs(rule.nodes) <= 1)

    def test_single_point(self):
        rule = mc_rule(2, 1, 0)
        assert rule.N == 1 and rule.weights[0] == 1.0

    def test_counts(self):
        assert [mc_sample_count(l) for l in range(4)] == [1, 4, 16, 64]


class TestHalton:
    def test_base2(self):
        np.testing.assert_allclose(halton_rule(1, 3).nodes[:, 0], [0.0, -0.5, 0.5])

    def test_two_dims(self):
        np.testing.assert_allclose(halton_rule(2, 1).nodes[0], [0.0, -1 / 3], atol=1e-15)

    def test_weights(self):
        rule = halton_rule(5, 17)
        np.testing.assert_array_equal(rule.weights, 1 / 17)
        assert rule.weights.sum() == pytest.approx(1.0)

    def test_van_der_corput(self):
        nodes = np.sort(halton_rule(1, 7).nodes[:, 0])
        expected = np.sort(2 * np.array([1, 1, 3, 1, 5, 3, 7]) / np.array([2, 4, 4, 8, 8, 8, 8]) - 1)
        np.testing.assert_allclose(nodes, expected, atol=1e-15)

    def test_radical_inverse_oracle(self):
        primes = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29]
        rule = halton_rule(10, 50)
        expected = np.array([[radical_inverse(i, p) for p in primes] for i in range(1, 51)])
        np.testing.assert_allclose(rule.nodes, 2 * expected - 1, atol=1e-14)

    def test_dimension_cap(self):
        with pytest.raises(ResourceError):
            halton_rule(500, 4)


class TestSchedules:
    def test_qmc(self):
        assert qmc_sample_count(0) == 10
        assert qmc_sample_count(3) == 135
        assert qmc_sample_count(5) == 762
        assert [qmc_sample_count(l, 0.2) for l in range(6)] == [10, 24, 57, 135, 320, 762]

    def test_qmc_invalid(self):
        with pytest.raises(ValidationError):
            qmc_sample_count(1, 1.0)

    def test_sg_level(self):
        assert [sg_level_schedule(l) for l in (0, 3, 5)] == [2, 8, 12]

    def test_weights(self):
        np.testing.assert_allclose(sg_weights([1.0, 0.1, 100.0]), [math.log(1 + math.sqrt(2)), math.log(10 + math.sqrt(101)), 0.0099998], rtol=1e-5)
        assert sg_weights([1.0])[0] == pytest.approx(0.881374, abs=1e-6)
        with pytest.raises(DomainError):
            sg_weights([0.0])


class TestIndexSet:
    def test_isotropic(self):
        assert set(sg_index_set(2, 2, [1, 1])) == {(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)}

    def test_one_dim(self):
        assert set(sg_index_set(2, 1, [1])) == {(1,), (2,)}

    def test_small_q(self):
        assert set(sg_index_set(0.5, 3, [1, 2, 3])) == {(0, 0, 0)}

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 4), st.floats(0, 5), st.integers(0, 10_000))
    def test_brute_force(self, M, q, seed):
        w = np.random.default_rng(seed).uniform(0.5, 2.0, M)
        assert set(sg_index_set(q, M, w)) == brute_index_set(q, w, int(q / 0.5) + 1)

    def test_cap(self):
        with pytest.raises(ResourceError):
            sg_index_set(20, 6, np.full(6, 0.5), cap=100)


class TestCombination:
    def test_one_dim(self):
        assert combination_coeffs(2, 1, [1], (1,)) == 0
        assert combination_coeffs(2, 1, [1], (2,)) == 1

    def test_two_dim(self):
        expected = {(0, 0): 0, (1, 0): -1, (0, 1): -1, (2, 0): 1, (0, 2): 1, (1, 1): 1}
        for alpha, c in expected.items():
            assert combination_coeffs(2, 2, [1, 1], alpha) == c
        assert sum(expected.values()) == 1

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 6), st.floats(0, 6), st.integers(0, 10_000))
    def test_brute_force(self, M, q, seed):
        rng = np.random.default_rng(seed)
        w = rng.uniform(0.3, 2.0, M)
        for alpha in sg_index_set(q, M, w):
            assert combination_coeffs(q, M, w, alpha) == brute_coeff(q, w, alpha)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 5), st.integers(0, 10_000))
    def test_deep_interior_vanishes(self, M, seed):
        rng = np.random.default_rng(seed)
        w = rng.uniform(0.3, 1.5, M)
        q = float(w.sum() + rng.uniform(0, 2))
        alpha = np.zeros(M, dtype=int)
        assert np.dot(alpha + 1, w) <= q
        assert combination_coeffs(q, M, w, alpha) == 0


class TestGaussLegendre:
    def test_small(self):
        x, w = gauss_legendre_1d(1)
        np.testing.assert_array_equal((x, w), ([0.0], [1.0]))
        x, w = gauss_legendre_1d(2)
        np.testing.assert_allclose(x, [-1 / math.sqrt(3), 1 / math.sqrt(3)])
        np.testing.assert_allclose(w, [0.5, 0.5])
        assert w @ x**2 == pytest.approx(1 / 3, rel=1e-15)

    @pytest.mark.parametrize("n", range(1, 12))
    def test_exactness(self, n):
        x, w = gauss_legendre_1d(n)
        for k in range(2 * n):
            exact = 0.0 if k % 2 else 1.0 / (k + 1)
            assert w @ x**k == pytest.approx(exact, abs=1e-14)

    def test_points_per_index(self):
        assert [points_per_index(a) for a in range(6)] == [1, 1, 2, 2, 3, 3]


class TestSparseRule:
    def test_single_node(self):
        rule = sg_rule(0.5, 3, [1.0, 1.0, 1.0])
        assert rule.N == 1
        np.testing.assert_array_equal(rule.nodes, 0.0)
        assert rule.weights[0] == 1.0

    def test_constant_and_odd(self):
        rule = sg_rule(2, 2, [1, 1])
        assert rule.weights.sum() == pytest.approx(1.0, abs=1e-14)
        assert abs(rule.integrate(lambda y: y[:, 0])) <= 1e-15

    def test_monomials(self):
        rule = sg_rule(4, 2, [1, 1])
        for a in range(3):
            for b in range(3 - a):
                exact = (0 if a % 2 else 1 / (a + 1)) * (0 if b % 2 else 1 / (b + 1))
                assert rule.integrate(lambda y: y[:, 0] ** a * y[:, 1] ** b) == pytest.approx(exact, abs=1e-12)

    def test_signed_weights_kept(self):
        assert np.any(sg_rule(4, 2, [1, 1]).weights < 0)

    def test_nodes_unique(self):
        rule = sg_rule(6, 3, [1.0, 1.3, 2.0])
        assert len(np.unique(rule.nodes, axis=0)) == rule.N

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 5), st.floats(0, 6), st.integers(0, 10_000))
    def test_merged_equals_unmerged(self, M, q, seed):
        # direct combination-technique sum over all tensor rules as oracle
        w = np.random.default_rng(seed).uniform(0.4, 2.0, M)
        c = np.random.default_rng(seed + 1).uniform(-0.5, 0.5, M)
        f = lambda y: np.exp(y @ c)
        total = 0.0
        for alpha in sg_index_set(q, M, w):
            coeff = combination_coeffs(q, M, w, alpha)
            rules = [gauss_legendre_1d(points_per_index(a)) for a in alpha]
            total += coeff * np.prod([wt @ np.exp(ck * x) for (x, wt), ck in zip(rules, c)])
        rule = sg_rule(q, M, w)
        assert rule.integrate(f) == pytest.approx(total, rel=1e-12, abs=1e-14)
        assert rule.weights.sum() == pytest.approx(1.0, abs=1e-12)

    def test_model_sizes(self):
        gamma = 1.0 / np.arange(1, 11) ** 2
        rule = sg_rule(6, 10, sg_weights(gamma))
        assert rule.weights.sum() == pytest.approx(1.0, abs=1e-12)


def smooth_integrand(M=10):
    gamma = 1.0 / np.arange(1, M + 1) ** 2
    return gamma, lambda y: np.exp(y @ gamma / 2)


class TestSmoothIntegrand:
    def test_tensor_reference(self):
        gamma, _ = smooth_integrand()
        x, w = gauss_legendre_1d(8)
        tensor = np.prod([w @ np.exp(g / 2 * x) for g in gamma])
        analytic = np.prod([math.sinh(g / 2) / (g / 2) for g in gamma])
        assert tensor == pytest.approx(analytic, rel=1e-14)

    def test_sparse_converges(self):
        gamma, f = smooth_integrand()
        exact = np.prod([math.sinh(g / 2) / (g / 2) for g in gamma])
        errs = [abs(sg_rule(q, 10, sg_weights(gamma)).integrate(f) - exact) for q in (2, 6, 10)]
        assert errs[0] > errs[1] > errs[2]
        assert errs[2] < 1e-4
