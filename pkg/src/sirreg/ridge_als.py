"""Alternating least squares for the ridge SIR criterion and its degeneracy diagnostics.

For ``tau > 0`` the ridge criterion has no minimizer with a nonzero basis:
either no minimizer exists (some ``sigma delta_y != 0``) or the basis is
zero. The ALS iteration therefore drives ``||A||`` to zero while the
loadings blow up and the product ``sigma A C_y`` stays bounded. This module
runs the iteration, records that collapse, decides which case holds, and
builds an explicit pair that beats every ``(0, C)``.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .criteria import check_shapes, eval_G_tau
from .exceptions import InfeasibleError, InputError, SingularUpdateError

log = logging.getLogger(__name__)

KRON_LIMIT = 10_000
UPDATE_COND_LIMIT = 1e12


@dataclass(frozen=True)
class AlsConfig:
    tau: float
    d: int = 1
    max_iters: int = 200
    a_norm_tolerance: float = 1e-8
    rng_seed: int = 0
    init_scale: float = 1.0

    def __post_init__(self):
        if not self.tau > 0:
            raise InputError("ridge ALS requires tau > 0")
        if self.d < 1:
            raise InputError("d must be >= 1")
        if self.max_iters < 1:
            raise InputError("max_iters must be >= 1")
        if not self.a_norm_tolerance > 0:
            raise InputError("a_norm_tolerance must be > 0")
        if self.rng_seed < 0:
            raise InputError("rng_seed must be a non-negative integer")

    def initial_basis(self, p):
        rng = np.random.default_rng(self.rng_seed)
        return self.init_scale * rng.standard_normal((p, self.d))


# ---------------------------------------------------------------------------
# One ALS sweep
# ---------------------------------------------------------------------------

def update_loadings(moments, A, cond_limit=UPDATE_COND_LIMIT):
    """C-step: ``C_y = (A^T sigma^2 A)^{-1} A^T sigma delta_y``."""
    SA = moments.sigma @ A
    M = SA.T @ SA
    eig = np.linalg.eigvalsh(M)
    if not np.all(np.isfinite(eig)) or eig[-1] <= 0 or eig[0] <= eig[-1] / cond_limit:
        raise SingularUpdateError(
            "C-update singular: A has collapsed or sigma A is rank-deficient"
        )
    return np.linalg.solve(M, SA.T @ moments.deltas)


def update_basis(moments, C, tau, method="auto"):
    """A-step: solve ``(K kron sigma^2 + tau I) vec(A) = vec(sigma D W C^T)`` with ``K = C W C^T``.

    ``method="kron"`` forms the p*d system, ``"structured"`` diagonalizes
    ``sigma^2`` and ``K`` separately and solves entrywise. ``"auto"`` picks
    the Kronecker form only while ``p*d <= KRON_LIMIT``.
    """
    S, D, f = moments.sigma, moments.deltas, moments.f
    p, d = S.shape[0], C.shape[0]
    if method == "auto":
        method = "kron" if p * d <= KRON_LIMIT else "structured"
    B = S @ (D * f) @ C.T
    if method == "kron":
        lhs = tau * np.eye(p * d)
        rhs = np.zeros(p * d)
        for y in range(moments.h):
            Ky = np.kron(C[:, y][None, :], S)
            lhs += f[y] * Ky.T @ Ky
            rhs += f[y] * Ky.T @ D[:, y]
        return np.linalg.solve(lhs, rhs).reshape((p, d), order="F")
    if method == "structured":
        s, U = np.linalg.eigh(S)
        K = (C * f) @ C.T
        k, V = np.linalg.eigh(0.5 * (K + K.T))
        Bt = U.T @ B @ V
        At = Bt / (np.outer(s * s, k) + tau)
        return U @ At @ V.T
    raise InputError(f"unknown A-update method {method!r}")


def als_step(moments, A, tau, method="auto"):
    """One sweep of the iteration; returns ``(C_new, A_new)``."""
    A = check_shapes(moments, A)
    if not tau > 0:
        raise InputError("ridge ALS requires tau > 0")
    C = update_loadings(moments, A)
    return C, update_basis(moments, C, tau, method)


# ---------------------------------------------------------------------------
# Full run
# ---------------------------------------------------------------------------

TRACE_FIELDS = ("iter", "objective", "a_norm", "c_norm", "product_norm", "step_norm")


@dataclass
class AlsTrace:
    """Per-iteration record of an ALS run.

    Record ``k`` describes the iterate ``A^(k)`` paired with the loadings
    fitted to it, ``C^(k+1)``; ``objective`` is the ridge criterion at that
    pair, so it is the profiled criterion of ``A^(k)``. ``step_norm`` is
    ``||A^(k) - A^(k-1)||_F`` (NaN for ``k = 0``).
    """

    records: list = field(default_factory=list)
    stop_reason: str = ""
    tau: float = float("nan")
    initial_a_norm: float = float("nan")
    sweeps: int = 0
    final_basis: np.ndarray | None = None

    @property
    def objectives(self):
        return np.array([r["objective"] for r in self.records])

    @property
    def a_norms(self):
        return np.array([r["a_norm"] for r in self.records])

    @property
    def c_norms(self):
        return np.array([r["c_norm"] for r in self.records])

    @property
    def product_norms(self):
        return np.array([r["product_norm"] for r in self.records])

    @property
    def final_a_norm(self):
        return float(np.linalg.norm(self.final_basis)) if self.final_basis is not None else float("nan")

    def is_monotone(self, slack=1e-10):
        obj = self.objectives
        if obj.size < 2:
            return True
        return bool(np.all(np.diff(obj) <= slack * max(abs(obj[0]), 1.0)))

    def shrink_ratio(self):
        """``||A||`` at stop over ``||A^(0)||``."""
        return self.final_a_norm / self.initial_a_norm

    def to_jsonl(self, fh):
        for r in self.records:
            out = {k: (None if isinstance(v, float) and not np.isfinite(v) else v) for k, v in r.items()}
            fh.write(json.dumps(out) + "\n")

    def to_csv(self, fh):
        fh.write(",".join(TRACE_FIELDS) + "\n")
        for r in self.records:
            fh.write(",".join(repr(r[k]) if k != "iter" else str(r[k]) for k in TRACE_FIELDS) + "\n")


def run_als(moments, config, initial_basis=None, method="auto"):
    """Iterate :func:`als_step` until ``max_iters`` sweeps, ``||A|| < a_norm_tolerance`` or a singular C-step.

    A singular C-step is the natural end of the degenerate iteration and is
    reported as a stop reason, not raised.
    """
    if initial_basis is None:
        A = config.initial_basis(moments.p)
    else:
        A = check_shapes(moments, initial_basis).copy()
        if A.shape[1] != config.d:
            raise InputError(f"initial basis has {A.shape[1]} columns, config.d = {config.d}")
    rank = np.linalg.matrix_rank(moments.sigma)
    if config.d > rank:
        warnings.warn(f"d={config.d} exceeds rank(sigma)={rank}; C-updates will be singular", stacklevel=2)

    trace = AlsTrace(tau=config.tau, initial_a_norm=float(np.linalg.norm(A)))
    prev = None
    k = 0
    while True:
        a_norm = float(np.linalg.norm(A))
        if a_norm < config.a_norm_tolerance:
            trace.stop_reason = "a_norm_below_tolerance"
            break
        try:
            C = update_loadings(moments, A)
        except SingularUpdateError:
            trace.stop_reason = "c_update_singular"
            break
        prod = moments.sigma @ A @ C
        trace.records.append({
            "iter": k,
            "objective": eval_G_tau(moments, A, C, config.tau),
            "a_norm": a_norm,
            "c_norm": float(np.linalg.norm(C)),
            "product_norm": float(np.max(np.linalg.norm(prod, axis=0))),
            "step_norm": float(np.linalg.norm(A - prev)) if prev is not None else float("nan"),
        })
        if k >= config.max_iters:
            trace.stop_reason = "max_iters"
            break
        prev, A = A, update_basis(moments, C, config.tau, method)
        k += 1
    trace.final_basis = A
    trace.sweeps = k
    log.debug("ALS stopped after %d sweeps: %s", k, trace.stop_reason)
    return trace


# ---------------------------------------------------------------------------
# Existence of the ridge minimizer
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExistenceReport:
    exists: bool
    witnesses: tuple
    threshold: float
    minimum: float | None = None

    def to_dict(self):
        return {
            "exists": self.exists,
            "witnesses": list(self.witnesses),
            "threshold": self.threshold,
            "minimum": self.minimum,
        }


def default_existence_threshold(moments):
    """``1e-10 ||sigma|| max(max_y ||delta_y||, sqrt(||sigma||))``.

    The ``sqrt(||sigma||)`` floor keeps rounding residue in slice means that
    are equal in exact arithmetic from counting as a witness.
    """
    s = np.linalg.norm(moments.sigma, 2)
    spread = max(float(np.max(np.linalg.norm(moments.deltas, axis=0))), np.sqrt(s))
    return 1e-10 * s * spread


def check_existence(moments, threshold=None):
    """Decide whether the ridge criterion attains its infimum.

    It does exactly when ``sigma delta_y`` vanishes for every slice; then the
    minimizers are ``{0} x R^{d x h}`` and the minimum is
    ``sum_y f_y ||delta_y||^2``. Witnesses are the slices where it does not
    vanish.
    """
    if threshold is None:
        threshold = default_existence_threshold(moments)
    elif not threshold > 0:
        raise InputError("threshold must be > 0")
    norms = np.linalg.norm(moments.sigma @ moments.deltas, axis=0)
    witnesses = tuple(int(y) for y in np.flatnonzero(norms > threshold))
    exists = not witnesses
    minimum = float(np.sum(moments.f * np.sum(moments.deltas ** 2, axis=0))) if exists else None
    return ExistenceReport(exists, witnesses, float(threshold), minimum)


# ---------------------------------------------------------------------------
# Explicit counterexample
# ---------------------------------------------------------------------------

class Counterexample(NamedTuple):
    basis: np.ndarray
    loadings: np.ndarray
    gap: float
    epsilon: float
    slice_index: int
    eigenvalues: np.ndarray


def _positive_eigenpairs(sigma, rel_tol=1e-10):
    lam, Q = np.linalg.eigh(sigma)
    lam, Q = lam[::-1], Q[:, ::-1]
    keep = lam > rel_tol * max(lam[0], 0.0) if lam[0] > 0 else np.zeros_like(lam, dtype=bool)
    Q = Q[:, keep]
    # deterministic signs: largest-magnitude entry positive
    idx = np.argmax(np.abs(Q), axis=0)
    Q = Q * np.sign(Q[idx, np.arange(Q.shape[1])])
    return lam[keep], Q


def construct_counterexample(moments, tau, d, epsilon_fraction=0.5):
    """Build ``(A, C)`` with ``G_tau(A, C) < G_tau(0, C)``, proving no minimizer exists.

    Slice ``y0`` maximizes ``||sigma delta_y||``. The first column of ``A`` is
    ``eps * q*`` where ``q*`` is the positive-eigenvalue eigenvector of sigma
    most aligned with ``delta_y0``; the other ``d - 1`` columns are ``eps``
    times the next most aligned positive eigenvectors. ``C`` is zero except
    its ``y0`` column, the least-squares loading. ``eps`` is
    ``epsilon_fraction`` times ``sqrt(f_y0 / (tau d)) |delta_y0^T q*|``.

    Returns the pair together with the analytic gap
    ``-f_y0 sum_j (delta_y0^T q_j)^2 + tau d eps^2``.
    """
    if not tau > 0:
        raise InputError("tau must be > 0")
    if not 0 < epsilon_fraction < 1:
        raise InputError("epsilon_fraction must lie in (0, 1)")
    if d < 1 or d > moments.p:
        raise InputError(f"d must lie in 1..{moments.p}")
    report = check_existence(moments)
    if report.exists:
        raise InfeasibleError("minimizer exists; no counterexample")
    lam, Q = _positive_eigenpairs(moments.sigma)
    if lam.size < d:
        raise InfeasibleError(f"insufficient covariance rank: rank(sigma)={lam.size} < d={d}")

    S, D, f = moments.sigma, moments.deltas, moments.f
    y0 = int(np.argmax(np.linalg.norm(S @ D, axis=0)))
    proj = Q.T @ D[:, y0]
    order = np.argsort(-np.abs(proj), kind="stable")[:d]
    q_star = proj[order[0]]
    eps = epsilon_fraction * np.sqrt(f[y0] / (tau * d)) * abs(q_star)
    A = eps * Q[:, order]
    C = np.zeros((d, moments.h))
    C[:, y0] = proj[order] / (eps * lam[order])
    gap = -f[y0] * float(np.sum(proj[order] ** 2)) + tau * d * eps ** 2
    return Counterexample(A, C, float(gap), float(eps), y0, lam[order])


def direct_gap(moments, A, C, tau):
    """``G_tau(A, C) - G_tau(0, C)`` by two criterion evaluations."""
    return eval_G_tau(moments, A, C, tau) - eval_G_tau(moments, np.zeros_like(A), C, tau)
