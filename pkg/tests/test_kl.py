import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aniso_uq.covariance import DEFAULT_MODEL
from aniso_uq.errors import DomainError, NotPSDError, ValidationError
from aniso_uq.kl import (
    KLExpansion,
    TruncationWarning,
    build_kl,
    decay_exponent,
    ellipticity_bounds,
    evaluate_V,
    kl_tolerance,
    pivoted_cholesky,
)
from aniso_uq.mesh import build_cube_mesh


def random_psd(rng, n, r):
    B = rng.standard_normal((r, n)) * rng.uniform(0.1, 2.0, (r, 1))
    return B.T @ B


def eig_truncation_error(A, rank):
    """Frobenius error of the best rank-``rank`` approximation (eigen oracle)."""
    lam = np.sort(np.linalg.eigvalsh(A))[::-1]
    return np.sqrt(np.sum(lam[rank:] ** 2))


@pytest.fixture(scope="module")
def kl0():
    return build_kl(build_cube_mesh(0), DEFAULT_MODEL)


class TestPivotedCholesky:
    def test_hand_example(self):
        f = pivoted_cholesky(np.array([[2.0, 1.0], [1.0, 1.0]]), 0.2, 10)
        assert f.rank == 1
        np.testing.assert_allclose(f.columns[0], [np.sqrt(2), 1 / np.sqrt(2)], rtol=1e-15)
        assert f.relative_residual == pytest.approx(0.5 / 3, rel=1e-14)
        assert f.pivot_order[0] == 0

    def test_rank_one(self):
        A = np.array([[4.0, 2.0], [2.0, 1.0]])
        f = pivoted_cholesky(A, 1e-12, 10)
        assert f.rank == 1
        np.testing.assert_allclose(f.reconstruct(), A, atol=1e-15)

    def test_identity(self):
        f = pivoted_cholesky(np.eye(3), 1e-15, 10)
        assert f.rank == 3
        np.testing.assert_array_equal(f.reconstruct(), np.eye(3))

    def test_tie_breaks_to_smallest_index(self):
        assert list(pivoted_cholesky(np.eye(4), 1e-15, 10).pivot_order) == [0, 1, 2, 3]

    def test_not_psd(self):
        with pytest.raises(NotPSDError):
            pivoted_cholesky(np.diag([1.0, -1.0]), 1e-6, 5)
        with pytest.raises(NotPSDError):
            pivoted_cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]), 1e-6, 5)

    def test_bad_arguments(self):
        with pytest.raises(ValidationError):
            pivoted_cholesky(np.eye(2), 0.0, 5)
        with pytest.raises(ValidationError):
            pivoted_cholesky(np.eye(2), 0.1, 0)

    def test_max_rank_warning(self):
        with pytest.warns(TruncationWarning):
            f = pivoted_cholesky(np.eye(5), 1e-12, 2)
        assert f.rank == 2 and not f.converged

    def test_zero_matrix(self):
        f = pivoted_cholesky(np.zeros((3, 3)), 1e-6, 5)
        assert f.rank == 0 and f.relative_residual == 0.0

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.integers(2, 60), st.integers(1, 20), st.sampled_from([1e-2, 1e-4, 1e-8]))
    def test_oracle_equivalence(self, seed, n, r, rel_tol):
        rng = np.random.default_rng(seed)
        A = random_psd(rng, n, min(r, n))
        f = pivoted_cholesky(A, rel_tol, n)
        assert f.converged
        err = np.linalg.norm(A - f.reconstruct())
        assert err <= 10 * rel_tol * np.linalg.norm(A)
        assert f.rank <= min(r, n)
        # cannot beat the optimal rank-m truncation
        assert err >= eig_truncation_error(A, f.rank) * (1 - 1e-8) - 1e-12
        assert np.all(np.diff(f.trace_history) <= 1e-12 * f.initial_trace)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000))
    def test_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        n = 12
        # distinct diagonal entries keep the pivot sequence free of ties
        A = random_psd(rng, n, 6) + np.diag(np.linspace(0.1, 0.2, n))
        perm = rng.permutation(n)
        f = pivoted_cholesky(A, 1e-6, n)
        g = pivoted_cholesky(A[np.ix_(perm, perm)], 1e-6, n)
        np.testing.assert_array_equal(perm[g.pivot_order], f.pivot_order)
        np.testing.assert_allclose(g.trace_history, f.trace_history, rtol=1e-10, atol=1e-14)

    def test_decay_exponent(self):
        hist = [1.0] + [k**-2.0 for k in range(1, 20)]
        assert decay_exponent(hist) == pytest.approx(2.0, rel=1e-12)


class TestBuildKL:
    def test_level0(self, kl0):
        assert kl0.M >= 1
        assert kl0.residual_rel_trace <= 1e-4
        assert kl0.modes.shape == (kl0.M + 1, 48, 3)

    @pytest.mark.parametrize("level", [0, 1, 2])
    def test_tolerance(self, level):
        kl = build_kl(build_cube_mesh(level), DEFAULT_MODEL)
        assert kl.residual_rel_trace <= kl_tolerance(level)

    def test_rank_nondecreasing(self):
        Ms = [build_kl(build_cube_mesh(l), DEFAULT_MODEL).M for l in range(3)]
        assert Ms == sorted(Ms)

    def test_kl_tolerance(self):
        assert kl_tolerance(0) == 1e-4
        assert kl_tolerance(2) == pytest.approx(1e-4 / 16)

    def test_gamma_is_max_mode_norm(self, kl0):
        np.testing.assert_allclose(kl0.gamma, np.linalg.norm(kl0.modes, axis=2).max(axis=1))
        assert kl0.gamma[0] == 1.0

    def test_reproduces_covariance(self, kl0):
        # E[V V^T] of the piecewise-constant field equals the truncated collocation matrix
        mesh = kl0.mesh
        C = kl0.factor.reconstruct()
        modes = kl0.modes[1:].reshape(kl0.M, -1)
        cov = modes.T @ modes / 3.0  # E[y_k^2] = 1/3
        scale = np.repeat(np.sqrt(mesh.volumes), 3)
        np.testing.assert_allclose(cov * np.outer(scale, scale), C, atol=1e-15)

    def test_level_mismatch(self):
        with pytest.raises(ValidationError):
            build_kl(build_cube_mesh(0), DEFAULT_MODEL, level=1)


class TestEvaluateV:
    def test_center(self, kl0):
        for t in (0, 17, 47):
            np.testing.assert_array_equal(evaluate_V(kl0, t, np.zeros(kl0.M)), [1, 0, 0])

    def test_linearity(self, kl0):
        e = np.zeros(kl0.M)
        e[0] = 1
        diff = (evaluate_V(kl0, 5, e) - evaluate_V(kl0, 5, -e)) / 2
        np.testing.assert_allclose(diff, kl0.modes[1, 5], atol=1e-15)

    def test_bounded_by_gamma_sum(self, kl0):
        rng = np.random.default_rng(0)
        bound = kl0.gamma.sum()
        for _ in range(100):
            assert np.linalg.norm(kl0.field(rng.uniform(-1, 1, kl0.M)), axis=1).max() <= bound

    def test_field_matches_pointwise(self, kl0):
        y = np.random.default_rng(1).uniform(-1, 1, kl0.M)
        np.testing.assert_allclose(kl0.field(y)[9], evaluate_V(kl0, 9, y))

    def test_domain(self, kl0):
        with pytest.raises(DomainError):
            evaluate_V(kl0, 0, np.zeros(kl0.M + 1))
        y = np.zeros(kl0.M)
        y[0] = 1.5
        with pytest.raises(DomainError):
            evaluate_V(kl0, 0, y)


class TestEllipticity:
    def test_deterministic(self, kl0):
        report = ellipticity_bounds(kl0.with_zero_modes(), 5)
        assert (report.b_min_est, report.b_max_est) == (1.0, 1.0)
        assert report.envelope_low == 1.0

    def test_model_level0(self, kl0):
        report = ellipticity_bounds(kl0, 50)
        assert report.b_min_est <= report.b_max_est
        assert report.envelope_low > 0
        assert report.envelope_low <= report.b_min_est
        assert report.b_max_est <= report.envelope_high

    def test_from_modes(self):
        mesh = build_cube_mesh(0)
        kl = KLExpansion.from_modes(mesh, [1, 0, 0], [[0, 0.5, 0]])
        assert kl.M == 1
        np.testing.assert_allclose(kl.gamma, [1, 0.5])
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            report = ellipticity_bounds(kl, 10)
        # |(1, 0.5 y, 0)| >= 1, and the projected bound is sharp here
        assert report.envelope_low == pytest.approx(1.0)
