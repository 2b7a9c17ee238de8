"""Synthetic index-model data and a span-recovery metric."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .exceptions import InputError
from .moments import Dataset


class Link(enum.Enum):
    LINEAR = "linear"
    CUBIC = "cubic"
    SINH = "sinh"
    # symmetric: SIR cannot recover it, kept for negative examples
    QUADRATIC = "quadratic"

    def __call__(self, t):
        if self is Link.LINEAR:
            return t
        if self is Link.CUBIC:
            return t ** 3
        if self is Link.SINH:
            return np.sinh(t)
        return t ** 2


def default_basis(p, d=1):
    """Orthonormal p x d basis; column ``j`` is ``(e_2j + e_2j+1) / sqrt(2)`` while ``2d <= p``, else ``e_j``."""
    if not 1 <= d <= p:
        raise InputError(f"need 1 <= d <= p, got d={d}, p={p}")
    B = np.zeros((p, d))
    if 2 * d <= p:
        for j in range(d):
            B[2 * j, j] = B[2 * j + 1, j] = 1 / np.sqrt(2)
    else:
        B[np.arange(d), np.arange(d)] = 1.0
    return B


@dataclass(frozen=True)
class SimSpec:
    n: int
    p: int
    true_basis: np.ndarray
    link: Link = Link.LINEAR
    noise_sd: float = 0.0
    predictor_correlation: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        B = np.asarray(self.true_basis, dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        object.__setattr__(self, "true_basis", B)
        object.__setattr__(self, "link", Link(self.link))
        if self.n < 2 or self.p < 1:
            raise InputError("need n >= 2 and p >= 1")
        if B.shape[0] != self.p:
            raise InputError(f"true_basis has {B.shape[0]} rows, expected p={self.p}")
        if not np.allclose(B.T @ B, np.eye(B.shape[1]), atol=1e-10, rtol=0):
            raise InputError("true_basis columns must be orthonormal")
        if self.noise_sd < 0:
            raise InputError("noise_sd must be >= 0")
        if not 0 <= self.predictor_correlation < 1:
            raise InputError("predictor_correlation must lie in [0, 1)")

    @property
    def d(self):
        return self.true_basis.shape[1]


def ar1_covariance(p, rho):
    return linalg.toeplitz(rho ** np.arange(p))


def simulate(spec):
    """Draw ``X ~ N(0, AR1(rho))`` and ``Y = sum_j link(a_j^T X) + noise``.

    Deterministic in ``spec.rng_seed``.
    """
    rng = np.random.default_rng(spec.rng_seed)
    Z = rng.standard_normal((spec.n, spec.p))
    if spec.predictor_correlation > 0:
        L = linalg.cholesky(ar1_covariance(spec.p, spec.predictor_correlation), lower=True)
        X = Z @ L.T
    else:
        X = Z
    index = X @ spec.true_basis
    Y = spec.link(index).sum(axis=1)
    if spec.noise_sd > 0:
        Y = Y + spec.noise_sd * rng.standard_normal(spec.n)
    return Dataset(X, Y)


def _projector(A, rtol=1e-10):
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[-1] <= rtol * s[0]:
        raise InputError("subspace distance needs full-column-rank bases")
    return U @ U.T


def subspace_distance(A, B):
    """``||P_A - P_B||_F / sqrt(2d)``: 0 for equal spans, 1 for orthogonal ones."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    A = A[:, None] if A.ndim == 1 else A
    B = B[:, None] if B.ndim == 1 else B
    if A.shape != B.shape:
        raise InputError(f"bases must share shape, got {A.shape} and {B.shape}")
    d = A.shape[1]
    dist = np.linalg.norm(_projector(A) - _projector(B)) / np.sqrt(2 * d)
    return float(min(dist, 1.0))
