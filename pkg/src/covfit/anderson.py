"""Anderson's scoring-type algorithm for linear covariance structures.

Each iteration solves a linear system ``A(Sigma) sigma_new = b(Sigma)`` in
the free entries of Sigma. Fixed points solve the likelihood equations,
but the iterates may leave the positive definite cone and the likelihood
may go down; both are recorded rather than raised.
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve

from .errors import DegenerateSystemError, InputError, ModelDataError, NumericalError
from .gaussian import (
    CovarianceMatrix,
    SampleSummary,
    cholesky,
    is_pd,
    likelihood_residual,
    log_likelihood,
)
from .graph import BidirectedGraph
from .icf import FitResult, _aligned

log = logging.getLogger(__name__)

__all__ = [
    "AndersonSystem",
    "AndersonRecord",
    "AndersonTrace",
    "AndersonResult",
    "build_system",
    "anderson_step",
    "fit_anderson",
]

STATUSES = ("converged", "max_iters_reached", "non_pd_iterate", "singular_system")


@dataclass(frozen=True)
class AndersonSystem:
    """The linear system of one Anderson iteration.

    Rows and columns follow ``index_set``: diagonal pairs in vertex order,
    then edges ``(i, j)``, ``i < j``, lexicographically. Each edge is one
    column carrying both mirrored entries, so ``a_matrix`` is in general
    *not* symmetric; see :meth:`is_symmetric`.
    """

    index_set: tuple[tuple[int, int], ...]
    a_matrix: np.ndarray
    b_vector: np.ndarray

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        a = self.a_matrix
        return bool(np.max(np.abs(a - a.T), initial=0.0) <= tol * max(1.0, np.max(np.abs(a))))

    def solve(self) -> np.ndarray:
        with warnings.catch_warnings():
            # exact singularity is reported below through the pivot ratio
            warnings.simplefilter("ignore", LinAlgWarning)
            lu, piv = lu_factor(self.a_matrix, check_finite=True)
        u = np.abs(np.diag(lu))
        ratio = float(u.min() / u.max()) if u.max() > 0 else 0.0
        threshold = 1e3 * np.finfo(float).eps * len(self.index_set)
        if ratio <= threshold:
            raise DegenerateSystemError(
                f"Anderson system is numerically singular (pivot ratio {ratio:.3g} <= {threshold:.3g})",
                pivot_ratio=ratio,
            )
        return lu_solve((lu, piv), self.b_vector)


@dataclass(frozen=True)
class AndersonRecord:
    sigma: np.ndarray
    pd: bool
    loglik: Optional[float]
    step_norm: float


@dataclass(frozen=True)
class AndersonTrace:
    """Chronological iterates; the first record is the first update from the start."""

    records: tuple[AndersonRecord, ...]

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def logliks(self) -> list[Optional[float]]:
        return [r.loglik for r in self.records]


@dataclass(frozen=True)
class AndersonResult:
    """Outcome of :func:`fit_anderson`.

    ``sigma_hat`` is the last iterate, possibly not positive definite.
    ``loglik`` and ``residual`` are ``None`` unless it is.
    """

    sigma_hat: np.ndarray
    labels: tuple[str, ...]
    status: str
    iterations: int
    loglik: Optional[float]
    residual: Optional[float]
    wall_time: float = 0.0
    algorithm: str = "anderson"

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def as_fit_result(self) -> FitResult:
        """View a converged positive definite result as a :class:`FitResult`."""
        if self.loglik is None:
            raise InputError(f"Anderson run ended with status {self.status!r}; no valid estimate")
        return FitResult(
            sigma_hat=CovarianceMatrix(self.sigma_hat, self.labels),
            loglik_trace=(self.loglik,),
            sweeps_used=self.iterations,
            converged=self.converged,
            residual=self.residual,
            status=self.status,
            loglik_initial=self.loglik,
            algorithm="anderson",
            wall_time=self.wall_time,
        )


def _free(g: BidirectedGraph) -> list[tuple[int, int]]:
    return g.free_pairs()


def _embed(values: np.ndarray, pairs, p: int) -> np.ndarray:
    out = np.zeros((p, p))
    for v, (i, j) in zip(values, pairs):
        out[i, j] = out[j, i] = v
    return out


def build_system(sigma, summary: SampleSummary, g: BidirectedGraph) -> AndersonSystem:
    """Assemble ``A(Sigma)`` and ``b(Sigma)`` with ``K = Sigma^-1``.

    ``A[(ij), (kk)] = K_ik K_jk``, ``A[(ij), (kl)] = K_ik K_jl + K_jk K_il``
    for edges ``k <-> l`` and ``b_ij = (K S K)_ij``.
    """
    summary = _aligned(summary, g)
    a = np.asarray(sigma, dtype=float)
    if a.shape != (g.p, g.p):
        raise InputError(f"sigma has shape {a.shape}, graph has {g.p} vertices")
    c = cholesky(a)
    k = np.linalg.solve(c.T, np.linalg.solve(c, np.eye(g.p)))
    k = (k + k.T) / 2
    pairs = _free(g)
    rows = np.array([i for i, _ in pairs])
    cols = np.array([j for _, j in pairs])
    amat = np.empty((len(pairs), len(pairs)))
    for col, (kk, ll) in enumerate(pairs):
        if kk == ll:
            amat[:, col] = k[rows, kk] * k[cols, kk]
        else:
            amat[:, col] = k[rows, kk] * k[cols, ll] + k[cols, kk] * k[rows, ll]
    ksk = k @ summary.S @ k
    b = ksk[rows, cols]
    return AndersonSystem(tuple(pairs), amat, b)


def anderson_step(sigma, summary: SampleSummary, g: BidirectedGraph) -> tuple[np.ndarray, bool]:
    """One Anderson update.

    Returns the new symmetric matrix (zeros at non-edges) and whether it is
    positive definite. A non-PD result is returned, not raised.
    """
    system = build_system(sigma, summary, g)
    values = system.solve()
    nxt = _embed(values, system.index_set, g.p)
    return nxt, is_pd(nxt)


def fit_anderson(
    summary: SampleSummary,
    g: BidirectedGraph,
    max_iters: int = 5000,
    tol: float = 1e-10,
) -> tuple[AndersonResult, AndersonTrace]:
    """Iterate :func:`anderson_step` from the identity.

    Stops when the largest entry change is at most ``tol * max|S|``, when an
    iterate is not positive definite (the next step needs its inverse), when
    the linear system is singular, or after ``max_iters`` iterations.
    """
    t0 = time.perf_counter()
    summary = _aligned(summary, g)
    try:
        cholesky(summary.S)
    except NumericalError as exc:
        raise ModelDataError(f"empirical covariance is not positive definite: {exc}") from None
    scale = float(np.max(np.abs(summary.S)))
    pairs = _free(g)
    rows, cols = (list(x) for x in zip(*pairs))
    sigma = np.eye(g.p)
    records: list[AndersonRecord] = []
    status = "max_iters_reached"
    for _ in range(max_iters):
        try:
            nxt, pd = anderson_step(sigma, summary, g)
        except DegenerateSystemError as exc:
            log.info("anderson: %s", exc)
            status = "singular_system"
            break
        step = float(np.max(np.abs(nxt - sigma)))
        ll = log_likelihood(nxt, summary) if pd else None
        records.append(AndersonRecord(nxt[rows, cols].copy(), pd, ll, step))
        log.debug("anderson iter %d: pd=%s loglik=%s step=%.3e", len(records), pd, ll, step)
        sigma = nxt
        if not pd:
            status = "non_pd_iterate"
            break
        if step <= tol * scale:
            status = "converged"
            break
    pd = is_pd(sigma)
    loglik = log_likelihood(sigma, summary) if pd else None
    residual = likelihood_residual(sigma, summary, g, tol=0.0) if pd else None
    log.info("anderson %s after %d iterations", status, len(records))
    result = AndersonResult(
        sigma_hat=sigma,
        labels=g.vertices,
        status=status,
        iterations=len(records),
        loglik=loglik,
        residual=residual,
        wall_time=time.perf_counter() - t0,
    )
    return result, AndersonTrace(tuple(records))
