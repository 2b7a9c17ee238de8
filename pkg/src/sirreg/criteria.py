"""The three SIR objectives, the ridge-criterion gradients and the identities behind the degeneracy result.

Notation: ``A`` is p x d, ``C`` is d x h with column ``C[:, y]`` the loading of
slice ``y``; ``deltas`` is p x h with column ``y`` equal to the centered
slice mean. ``vec`` stacks columns (Fortran order).
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy import linalg

from .exceptions import InputError, SingularCovarianceError

#: Largest condition number of sigma for which the sigma-weighted SIR criterion is evaluated.
COND_LIMIT = 1e12


class GradientPair(NamedTuple):
    """Gradient of the ridge criterion w.r.t. ``vec(A)`` (length p*d) and ``C`` (d x h, column per slice)."""

    grad_a: np.ndarray
    grad_c: np.ndarray


def vec(A):
    return np.asarray(A).reshape(-1, order="F")


def unvec(a, p, d):
    return np.asarray(a).reshape((p, d), order="F")


def check_shapes(moments, A, C=None):
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2 or A.shape[0] != moments.p:
        raise InputError(f"basis must be {moments.p} x d, got shape {A.shape}")
    if A.shape[1] > moments.p:
        raise InputError(f"basis has d={A.shape[1]} > p={moments.p} columns")
    if not np.all(np.isfinite(A)):
        raise InputError("basis has non-finite entries")
    if C is None:
        return A
    C = np.asarray(C, dtype=float)
    if C.ndim == 1 and A.shape[1] == 1:
        C = C[None, :]
    if C.shape != (A.shape[1], moments.h):
        raise InputError(f"loadings must be {A.shape[1]} x {moments.h}, got shape {C.shape}")
    if not np.all(np.isfinite(C)):
        raise InputError("loadings have non-finite entries")
    return A, C


def _sigma_factor(moments, cond_limit=COND_LIMIT):
    eig = np.linalg.eigvalsh(moments.sigma)
    if eig[0] <= 0 or eig[-1] / eig[0] >= cond_limit:
        raise SingularCovarianceError("SIR criterion undefined: sigma is not invertible")
    return linalg.cho_factor(moments.sigma)


def eval_G(moments, A, C, cond_limit=COND_LIMIT):
    """Sigma^{-1}-weighted discrepancy between centered slice means and ``sigma A C``."""
    A, C = check_shapes(moments, A, C)
    factor = _sigma_factor(moments, cond_limit)
    R = moments.deltas - moments.sigma @ A @ C
    return float(np.sum(moments.f * np.sum(R * linalg.cho_solve(factor, R), axis=0)))


def eval_G_tau(moments, A, C, tau):
    """Ridge criterion: unweighted residual plus ``tau * ||vec(A)||^2``. Needs no inverse."""
    A, C = check_shapes(moments, A, C)
    if tau < 0:
        raise InputError("tau must be >= 0")
    R = moments.deltas - moments.sigma @ A @ C
    return float(np.sum(moments.f * np.sum(R * R, axis=0)) + tau * np.sum(A * A))


def eval_H_tau(moments, A, C, tau, cond_limit=COND_LIMIT):
    """``G(A, C) + tau * sum_y f_y ||A C_y||^2``; requires an invertible sigma."""
    A, C = check_shapes(moments, A, C)
    if tau < 0:
        raise InputError("tau must be >= 0")
    AC = A @ C
    return eval_G(moments, A, C, cond_limit) + tau * float(np.sum(moments.f * np.sum(AC * AC, axis=0)))


def eval_H_tau_shifted(moments, A, C, tau):
    """``H_tau(A, C) - H_tau(0, 0)``, written with ``sigma + tau I`` in place of an inverse.

    Well defined for singular sigma, which is the case regularization is for.
    """
    A, C = check_shapes(moments, A, C)
    if tau < 0:
        raise InputError("tau must be >= 0")
    AC = A @ C
    quad = np.sum(AC * (moments.sigma @ AC + tau * AC), axis=0)
    lin = np.sum(moments.deltas * AC, axis=0)
    return float(np.sum(moments.f * (quad - 2.0 * lin)))


def eval_G_shifted(moments, A, C):
    """Expanded form of ``G(A, C) - G(0, 0)``; equals the shifted H criterion at ``tau = 0``."""
    return eval_H_tau_shifted(moments, A, C, 0.0)


def grad_G_tau(moments, A, C, tau):
    """Analytic gradients of the ridge criterion.

    The ``vec(A)`` block uses the matrix form
    ``2 [sigma^2 A C W C^T - sigma D W C^T] + 2 tau A`` (W = diag(f)), which
    equals the Kronecker expression without forming any p*d x p*d operator.
    """
    A, C = check_shapes(moments, A, C)
    S, D, f = moments.sigma, moments.deltas, moments.f
    SA = S @ A
    R = D - SA @ C
    grad_A = -2.0 * S @ (R * f) @ C.T + 2.0 * tau * A
    grad_c = -2.0 * SA.T @ R * f
    return GradientPair(vec(grad_A), grad_c)


def grad_G_tau_kron(moments, A, C, tau):
    """Same gradients built literally from ``(C_y^T kron sigma)``; small sizes only."""
    A, C = check_shapes(moments, A, C)
    S, D, f = moments.sigma, moments.deltas, moments.f
    a = vec(A)
    grad_a = 2.0 * tau * a
    grad_c = np.empty_like(C)
    S2 = S @ S
    for y in range(moments.h):
        K = np.kron(C[:, y][None, :], S)
        grad_a += 2.0 * f[y] * (K.T @ (K @ a) - K.T @ D[:, y])
        grad_c[:, y] = 2.0 * f[y] * (A.T @ S2 @ A @ C[:, y] - A.T @ S @ D[:, y])
    return GradientPair(grad_a, grad_c)


def closed_form_loadings(moments, A):
    """Least-squares loadings ``C_y = (A^T sigma^2 A)^{-1} A^T sigma delta_y`` for fixed ``A``."""
    A = check_shapes(moments, A)
    SA = moments.sigma @ A
    return np.linalg.solve(SA.T @ SA, SA.T @ moments.deltas)


def key_identity_terms(moments, A, C, tau):
    """The three terms of ``vec(A)^T grad_a = sum_y C_y^T grad_c[y] + 2 tau ||vec(A)||^2``."""
    A, C = check_shapes(moments, A, C)
    g = grad_G_tau(moments, A, C, tau)
    lhs = float(vec(A) @ g.grad_a)
    rhs = float(np.sum(C * g.grad_c))
    pen = float(2.0 * tau * np.sum(A * A))
    return lhs, rhs, pen


def key_identity_residual(moments, A, C, tau):
    """Absolute residual of the identity; holds for every (A, C, tau), not only at stationary points."""
    lhs, rhs, pen = key_identity_terms(moments, A, C, tau)
    return abs(lhs - rhs - pen)


def vec_kron_check(moments, A, C):
    """``max_y ||sigma A C_y - (C_y^T kron sigma) vec(A)||`` with the Kronecker factor materialized."""
    A, C = check_shapes(moments, A, C)
    S = moments.sigma
    a = vec(A)
    worst = 0.0
    for y in range(moments.h):
        lhs = S @ A @ C[:, y]
        rhs = np.kron(C[:, y][None, :], S) @ a
        worst = max(worst, float(np.linalg.norm(lhs - rhs)))
    return worst
