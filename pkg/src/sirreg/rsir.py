"""Classical and regularized SIR estimators, the profiled criterion, and cross-validated tau.

Regularized SIR takes the ``d`` leading eigenvectors of
``(sigma + tau I)^{-1} gamma``. It minimizes the invariant criterion
``H_tau``, whose profile over the loadings depends on ``A`` only through
its span (:func:`profile_H`).
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .criteria import COND_LIMIT, check_shapes
from .exceptions import InputError, NumericalError, SingularCovarianceError
from .moments import compute_sliced_moments, slice_by_response

log = logging.getLogger(__name__)

TIE_RTOL = 1e-8


@dataclass(frozen=True)
class FitResult:
    basis: np.ndarray
    eigenvalues: np.ndarray
    tau: float
    method: str
    diagnostics: dict = field(default_factory=dict)

    @property
    def d(self):
        return self.basis.shape[1]

    def to_dict(self):
        return {
            "method": self.method,
            "tau": self.tau,
            "d": self.d,
            "p": self.basis.shape[0],
            "eigenvalues": self.eigenvalues.tolist(),
            "basis": self.basis.reshape(-1, order="F").tolist(),
            "diagnostics": self.diagnostics,
        }


def _sign_convention(V):
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def generalized_eigh(gamma, metric, d=None):
    """Leading eigenpairs of ``gamma v = lam metric v`` for symmetric ``gamma`` and SPD ``metric``.

    Whitens with the lower Cholesky factor ``L`` of ``metric``, solves the
    symmetric problem for ``L^{-1} gamma L^{-T}``, maps back with ``L^{-T}``
    and rescales each vector to unit Euclidean norm. Eigenvalues come out in
    decreasing order; equal eigenvalues keep the solver's order.
    """
    L = linalg.cholesky(metric, lower=True)
    tmp = linalg.solve_triangular(L, gamma, lower=True)
    W = linalg.solve_triangular(L, tmp.T, lower=True)
    W = 0.5 * (W + W.T)
    lam, U = np.linalg.eigh(W)
    order = np.argsort(-lam, kind="stable")
    lam, U = lam[order], U[:, order]
    V = linalg.solve_triangular(L.T, U, lower=False)
    V = V / np.linalg.norm(V, axis=0)
    V = _sign_convention(V)
    if d is not None:
        lam, V = lam[:d], V[:, :d]
    return lam, V


def _fit(moments, d, metric, tau, method, cond):
    if not 1 <= d <= moments.p:
        raise InputError(f"d must lie in 1..{moments.p}")
    lam_all, V = generalized_eigh(moments.gamma, metric)
    lam, V = lam_all[:d], V[:, :d]
    scale = max(abs(lam_all[0]), np.finfo(float).tiny)
    gaps_tie = d < lam_all.size and abs(lam_all[d - 1] - lam_all[d]) <= TIE_RTOL * scale
    diagnostics = {
        "condition_number": cond,
        "numerical_rank": int(np.linalg.matrix_rank(moments.sigma)),
        "uninformative": bool(np.all(np.abs(lam_all) <= 1e-12 * max(np.linalg.norm(metric, 2), 1.0))),
        "eigenvalue_tie": bool(gaps_tie),
    }
    if d > moments.h - 1:
        diagnostics["warning"] = f"d={d} exceeds h-1={moments.h - 1}; trailing directions are arbitrary"
    return FitResult(V, lam, float(tau), method, diagnostics)


def _condition(M):
    eig = np.linalg.eigvalsh(M)
    return float(eig[-1] / eig[0]) if eig[0] > 0 else float("inf")


def fit_sir(moments, d, cond_limit=COND_LIMIT):
    """Classical SIR: leading eigenvectors of ``sigma^{-1} gamma``."""
    cond = _condition(moments.sigma)
    if not cond < cond_limit:
        raise SingularCovarianceError(
            f"SIR needs an invertible covariance (condition number {cond:.3g}); "
            "use regularized SIR (fit_rsir / --method rsir) with tau > 0"
        )
    return _fit(moments, d, moments.sigma, 0.0, "sir", cond)


def fit_rsir(moments, d, tau):
    """Regularized SIR: leading eigenvectors of ``(sigma + tau I)^{-1} gamma``; valid for p > n."""
    if not tau > 0:
        raise InputError("regularized SIR requires tau > 0")
    metric = moments.sigma + tau * np.eye(moments.p)
    return _fit(moments, d, metric, tau, "rsir", _condition(metric))


# ---------------------------------------------------------------------------
# Profiled criterion
# ---------------------------------------------------------------------------

def profile_loadings(moments, A, tau, cond_limit=COND_LIMIT):
    """Minimizing loadings of the shifted H criterion: ``(A^T (sigma + tau I) A)^{-1} A^T delta_y``."""
    A = check_shapes(moments, A)
    MA = moments.sigma @ A + tau * A
    M = A.T @ MA
    M = 0.5 * (M + M.T)
    eig = np.linalg.eigvalsh(M)
    if eig[-1] <= 0 or eig[0] <= eig[-1] / cond_limit:
        raise NumericalError("profiled criterion needs a full-column-rank basis A")
    return np.linalg.solve(M, A.T @ moments.deltas)


def profile_H(moments, A, tau):
    """``min_C [H_tau(A, C) - H_tau(0, 0)]``; non-positive and invariant under ``A -> A M``."""
    A = check_shapes(moments, A)
    C = profile_loadings(moments, A, tau)
    proj = A.T @ moments.deltas
    return -float(np.sum(moments.f * np.sum(proj * C, axis=0)))


# ---------------------------------------------------------------------------
# Cross-validated tau
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TauSelection:
    grid: tuple
    scores: tuple
    chosen: float
    folds: int
    rng_seed: int
    fold_scores: tuple = ()

    def to_dict(self):
        def clean(v):
            return float(v) if np.isfinite(v) else None

        return {
            "grid": list(self.grid),
            "scores": [clean(s) for s in self.scores],
            "chosen": self.chosen,
            "folds": self.folds,
            "rng_seed": self.rng_seed,
        }


def stratified_folds(assignment, folds, rng_seed):
    """Fold id per observation: each slice is shuffled with its own child seed and dealt round-robin."""
    fold_of = np.empty(assignment.labels.shape[0], dtype=np.intp)
    seeds = np.random.SeedSequence(rng_seed).spawn(assignment.h)
    for y in range(assignment.h):
        rows = np.flatnonzero(assignment.labels == y)
        rows = np.random.default_rng(seeds[y]).permutation(rows)
        fold_of[rows] = np.arange(rows.size) % folds
    return fold_of


def holdout_score(train, valid, d, tau):
    """Unweighted reconstruction error of held-out centered slice means.

    ``+inf`` when ``tau = 0`` and the training covariance is singular.
    """
    try:
        fit = fit_sir(train, d) if tau == 0 else fit_rsir(train, d, tau)
    except SingularCovarianceError:
        return float("inf")
    A = fit.basis
    C = profile_loadings(train, A, tau)
    R = valid.deltas - train.sigma @ A @ C
    return float(np.sum(valid.f * np.sum(R * R, axis=0)))


def select_tau_cv(dataset, h, d, grid, folds=5, rng_seed=0, n_jobs=1):
    """Choose tau on ``grid`` by ``folds``-fold cross-validation of :func:`holdout_score`.

    Slices are formed once on the full data so each fold's slice ``y``
    matches the training slice ``y``. Ties go to the smaller tau. Results do
    not depend on ``n_jobs``.
    """
    grid = tuple(float(t) for t in grid)
    if not grid:
        raise InputError("tau grid is empty")
    if any(t < 0 for t in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        raise InputError("tau grid must be non-negative and strictly increasing")
    if folds < 2:
        raise InputError("need at least 2 folds")
    assignment = slice_by_response(dataset, h)
    if assignment.counts.min() < folds:
        raise InputError(
            f"smallest slice has {assignment.counts.min()} observations, fewer than {folds} folds"
        )
    fold_of = stratified_folds(assignment, folds, rng_seed)

    pairs = []
    for k in range(folds):
        tr, va = fold_of != k, fold_of == k
        if tr.sum() < h:
            raise InputError(f"training fold {k} has fewer than h={h} observations")
        pairs.append((
            compute_sliced_moments(dataset.subset(tr), assignment.subset(tr)),
            compute_sliced_moments(dataset.subset(va), assignment.subset(va)),
        ))

    jobs = [(t, k) for t in grid for k in range(folds)]

    def run(job):
        t, k = job
        return holdout_score(*pairs[k], d, t)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as ex:
            flat = list(ex.map(run, jobs))
    else:
        flat = [run(j) for j in jobs]
    per_fold = np.array(flat).reshape(len(grid), folds)
    scores = per_fold.mean(axis=1)
    if not np.any(np.isfinite(scores)):
        raise NumericalError("every tau on the grid failed (singular covariance)")
    chosen = grid[int(np.argmin(scores))]
    log.info("CV scores %s -> tau=%g", dict(zip(grid, scores)), chosen)
    return TauSelection(grid, tuple(float(s) for s in scores), chosen, folds, rng_seed,
                        tuple(tuple(r) for r in per_fold))
