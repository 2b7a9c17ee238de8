import numpy as np
import pytest

from sirreg.criteria import (
    closed_form_loadings,
    eval_G,
    eval_G_shifted,
    eval_G_tau,
    eval_H_tau,
    eval_H_tau_shifted,
    grad_G_tau,
    grad_G_tau_kron,
    key_identity_residual,
    key_identity_terms,
    vec,
    vec_kron_check,
)
from sirreg.exceptions import InputError, SingularCovarianceError
from sirreg.moments import Dataset, sliced_moments

from conftest import random_moments


def central_differences(fun, x, step=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = step
        g.flat[i] = (fun(x + e) - fun(x - e)) / (2 * step)
    return g


def draw(rng, m, d=None):
    d = d or int(rng.integers(1, min(5, m.p) + 1))
    return rng.standard_normal((m.p, d)), rng.standard_normal((d, m.h))


class TestObjectives:
    def test_G_at_zero_on_toy(self, toy):
        assert eval_G(toy, np.zeros((2, 1)), np.ones((1, 2))) == pytest.approx(1.0, abs=1e-15)

    def test_G_zero_when_slice_means_coincide(self, rng):
        X = rng.standard_normal((30, 3))
        m = sliced_moments(Dataset(X, np.zeros(30)), 1)
        assert eval_G(m, np.zeros((3, 1)), np.zeros((1, 1))) == 0.0

    def test_G_expansion(self, rng):
        for _ in range(20):
            m = random_moments(rng)
            A, C = draw(rng, m)
            lhs = eval_G(m, A, C) - eval_G(m, np.zeros_like(A), np.zeros_like(C))
            assert eval_G_shifted(m, A, C) == pytest.approx(lhs, rel=1e-10, abs=1e-12)

    def test_G_singular_sigma(self):
        m = sliced_moments(Dataset(np.ones((6, 2)), np.arange(6.0)), 2)
        with pytest.raises(SingularCovarianceError, match="not invertible"):
            eval_G(m, np.zeros((2, 1)), np.zeros((1, 2)))
        with pytest.raises(SingularCovarianceError):
            eval_H_tau(m, np.zeros((2, 1)), np.zeros((1, 2)), 1.0)
        # sigma = 0, deltas = 0: only the tau * ||A C_y||^2 term survives
        assert eval_H_tau_shifted(m, np.ones((2, 1)), np.ones((1, 2)), 1.0) == 2.0

    def test_G_tau_plateau_on_toy(self, toy, rng):
        for _ in range(5):
            assert eval_G_tau(toy, np.zeros((2, 1)), rng.standard_normal((1, 2)), 3.0) == 1.0

    def test_G_tau_equals_G_for_identity_sigma(self, toy, rng):
        A, C = rng.standard_normal((2, 1)), rng.standard_normal((1, 2))
        assert eval_G_tau(toy, A, C, 0.0) == pytest.approx(eval_G(toy, A, C), rel=1e-14)

    def test_G_tau_counterexample_value(self, toy):
        eps = 0.5 * np.sqrt(0.5)
        A = np.array([[0.0], [eps]])
        C = np.array([[-1 / eps, 0.0]])
        assert eval_G_tau(toy, A, C, 1.0) == pytest.approx(0.625, abs=1e-14)

    def test_G_tau_lower_bound(self, rng):
        for _ in range(30):
            m = random_moments(rng)
            A, C = draw(rng, m)
            tau = rng.uniform(0, 3)
            assert eval_G_tau(m, A, C, tau) >= tau * np.sum(A ** 2) >= 0

    def test_rescaling_toward_zero_lowers_ridge(self, rng):
        for _ in range(20):
            m = random_moments(rng)
            A, C = draw(rng, m)
            vals = [eval_G_tau(m, lam * A, C / lam, 0.7) for lam in (1.0, 0.5, 0.1)]
            assert vals[0] > vals[1] > vals[2]

    def test_H_shifted_at_zero(self, toy):
        assert eval_H_tau_shifted(toy, np.zeros((2, 1)), np.ones((1, 2)), 2.0) == 0.0

    def test_H_shifted_tau_zero_is_G_shifted(self, rng):
        m = random_moments(rng)
        A, C = draw(rng, m)
        lhs = eval_G(m, A, C) - eval_G(m, 0 * A, 0 * C)
        assert eval_H_tau_shifted(m, A, C, 0.0) == pytest.approx(lhs, rel=1e-10)

    def test_H_absolute_matches_shifted(self, rng):
        m = random_moments(rng)
        A, C = draw(rng, m)
        diff = eval_H_tau(m, A, C, 0.4) - eval_H_tau(m, 0 * A, 0 * C, 0.4)
        assert eval_H_tau_shifted(m, A, C, 0.4) == pytest.approx(diff, rel=1e-9)

    def test_H_invariance(self, rng):
        m = random_moments(rng, p=6, h=5)
        A, C = draw(rng, m, d=3)
        ref = eval_H_tau_shifted(m, A, C, 0.3)
        for _ in range(50):
            M = rng.standard_normal((3, 3)) + 2 * np.eye(3)
            val = eval_H_tau_shifted(m, A @ M, np.linalg.solve(M, C), 0.3)
            assert abs(val - ref) <= 1e-9 * abs(ref)

    def test_shape_errors(self, toy):
        with pytest.raises(InputError):
            eval_G_tau(toy, np.zeros((3, 1)), np.zeros((1, 2)), 1.0)
        with pytest.raises(InputError):
            eval_G_tau(toy, np.zeros((2, 1)), np.zeros((1, 3)), 1.0)
        with pytest.raises(InputError):
            eval_G_tau(toy, np.zeros((2, 1)), np.zeros((1, 2)), -1.0)


class TestGradients:
    def test_closed_form_C_is_stationary(self, rng):
        m = random_moments(rng)
        A, _ = draw(rng, m)
        g = grad_G_tau(m, A, closed_form_loadings(m, A), 1.3)
        assert np.max(np.abs(g.grad_c)) <= 1e-9 * max(1.0, np.linalg.norm(m.sigma) ** 2)

    def test_zero_point(self, toy):
        g = grad_G_tau(toy, np.zeros((2, 1)), np.zeros((1, 2)), 1.0)
        assert not g.grad_a.any() and not g.grad_c.any()

    def test_matrix_form_equals_kronecker_form(self, rng):
        for _ in range(10):
            m = random_moments(rng, p=int(rng.integers(2, 8)))
            A, C = draw(rng, m)
            g1, g2 = grad_G_tau(m, A, C, 0.9), grad_G_tau_kron(m, A, C, 0.9)
            np.testing.assert_allclose(g1.grad_a, g2.grad_a, rtol=1e-10, atol=1e-10)
            np.testing.assert_allclose(g1.grad_c, g2.grad_c, rtol=1e-10, atol=1e-10)

    def test_finite_differences(self, rng):
        for _ in range(10):
            m = random_moments(rng, p=int(rng.integers(2, 7)), h=int(rng.integers(2, 6)))
            A, C = draw(rng, m)
            tau = rng.uniform(0.01, 2)
            g = grad_G_tau(m, A, C, tau)
            fd_a = central_differences(lambda a: eval_G_tau(m, a.reshape(A.shape, order="F"), C, tau), vec(A))
            fd_c = central_differences(lambda c: eval_G_tau(m, A, c, tau), C)
            assert np.linalg.norm(fd_a - g.grad_a) <= 1e-5 * np.linalg.norm(g.grad_a)
            assert np.linalg.norm(fd_c - g.grad_c) <= 1e-5 * np.linalg.norm(g.grad_c)


class TestIdentities:
    def test_key_identity_random(self, rng):
        for _ in range(50):
            m = random_moments(rng)
            A, C = draw(rng, m)
            tau = rng.uniform(0, 5)
            terms = key_identity_terms(m, A, C, tau)
            assert key_identity_residual(m, A, C, tau) <= 1e-9 * (1 + max(map(abs, terms)))

    def test_key_identity_zero_basis(self, toy, rng):
        assert key_identity_residual(toy, np.zeros((2, 1)), rng.standard_normal((1, 2)), 2.0) == 0.0

    def test_key_identity_without_penalty(self, rng):
        m = random_moments(rng)
        A, C = draw(rng, m)
        lhs, rhs, pen = key_identity_terms(m, A, C, 0.0)
        assert pen == 0.0
        assert abs(lhs - rhs) <= 1e-9 * (1 + abs(lhs))

    def test_vec_kron_scalar_loading(self, rng):
        m = random_moments(rng, p=4, h=3)
        assert vec_kron_check(m, rng.standard_normal((4, 1)), rng.standard_normal((1, 3))) <= 1e-13

    def test_vec_kron_random(self, rng):
        m = random_moments(rng, p=5, h=4)
        A, C = rng.standard_normal((5, 3)), rng.standard_normal((3, 4))
        scale = np.linalg.norm(m.sigma) * np.linalg.norm(A) * np.linalg.norm(C)
        assert vec_kron_check(m, A, C) < 1e-12 * scale

    def test_vec_kron_column_selection(self, rng):
        m = random_moments(rng, p=5, h=4)
        assert vec_kron_check(m, np.eye(5)[:, :2], rng.standard_normal((2, 4))) <= 1e-13
