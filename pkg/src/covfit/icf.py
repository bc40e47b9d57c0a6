"""Iterative conditional fitting for covariance graph models.

Each step holds ``Sigma[-i, -i]`` fixed and refits row ``i`` by regressing
variable ``i`` on pseudo-variables: the residuals of its spouses after
regression on its non-spouses. Because the zero constraints of row ``i``
pin the non-spouse coefficients to a linear function of the spouse
coefficients, this regression is unconstrained, the step maximizes the
likelihood over the section, and the iterates stay in the model.

All quantities are computed from the empirical covariance ``S``; the
pseudo-variables themselves are never formed.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .errors import InputError, ModelDataError, NumericalError
from .gaussian import (
    CovarianceMatrix,
    SampleSummary,
    cholesky,
    in_model,
    is_pd,
    likelihood_residual,
    log_likelihood,
)
from .graph import BidirectedGraph

log = logging.getLogger(__name__)

__all__ = [
    "IcfOptions",
    "RegressionEstimate",
    "FitResult",
    "pseudo_gram",
    "regression_estimate",
    "icf_step",
    "random_start",
    "fit",
]

StartSpec = Union[str, CovarianceMatrix, np.ndarray]


@dataclass(frozen=True)
class IcfOptions:
    """Stopping rule and starting point for :func:`fit`.

    ``tol_sigma`` is relative to the largest absolute entry of ``S``. A run
    stops when a full sweep changes no entry by more than that *and* the
    likelihood-equation residual is below ``tol_residual``.
    """

    max_sweeps: int = 5000
    tol_sigma: float = 1e-10
    tol_residual: float = 1e-8
    start: StartSpec = "identity"
    sweep_order: Optional[Sequence[str]] = None
    restarts: int = 0
    seed: Optional[int] = None

    def __post_init__(self):
        if self.max_sweeps < 1:
            raise InputError("max_sweeps must be positive")
        if self.tol_sigma < 0 or self.tol_residual < 0:
            raise InputError("tolerances must be non-negative")
        if self.restarts < 0:
            raise InputError("restarts must be non-negative")
        if isinstance(self.start, str) and self.start not in ("identity", "diag"):
            raise InputError(f"unknown start {self.start!r}; use 'identity', 'diag' or a matrix")


@dataclass(frozen=True)
class RegressionEstimate:
    """Result of the pseudo-variable regression for one vertex."""

    vertex: str
    spouses: tuple[str, ...]
    nonspouses: tuple[str, ...]
    spouse_coefficients: np.ndarray
    nonspouse_coefficients: np.ndarray
    lam: float
    gram_z: np.ndarray
    cross_yz: np.ndarray


@dataclass(frozen=True)
class FitResult:
    sigma_hat: CovarianceMatrix
    loglik_trace: tuple[float, ...]
    sweeps_used: int
    converged: bool
    residual: float
    status: str
    loglik_initial: float
    change_trace: tuple[float, ...] = ()
    restart_logliks: tuple[float, ...] = ()
    multimodal: bool = False
    algorithm: str = "icf"
    wall_time: float = 0.0

    @property
    def loglik(self) -> float:
        return self.loglik_trace[-1] if self.loglik_trace else self.loglik_initial


def _solve_pd(a: np.ndarray, b: np.ndarray, what: str) -> np.ndarray:
    try:
        return cho_solve(cho_factor(a, lower=True), b)
    except LinAlgError:
        raise NumericalError(f"{what} is not positive definite") from None


class _Plan:
    """Index arrays for every vertex, computed once per graph."""

    def __init__(self, g: BidirectedGraph):
        adj = g.adjacency_matrix()
        self.sp = []
        self.nsp = []
        for k in range(g.p):
            others = np.array([j for j in range(g.p) if j != k], dtype=int)
            self.sp.append(others[adj[k, others]])
            self.nsp.append(others[~adj[k, others]])


def _regress(s: np.ndarray, sigma: np.ndarray, k: int, sp: np.ndarray, nsp: np.ndarray):
    """Spouse/non-spouse coefficients, conditional variance and Gram blocks for row ``k``."""
    if nsp.size:
        # B = Sigma[sp, nsp] Sigma[nsp, nsp]^-1
        b = _solve_pd(sigma[np.ix_(nsp, nsp)], sigma[np.ix_(nsp, sp)], "Sigma[nsp, nsp]").T
        s_sn = s[np.ix_(sp, nsp)]
        bs_ns = b @ s_sn.T
        gram = s[np.ix_(sp, sp)] - bs_ns - bs_ns.T + b @ s[np.ix_(nsp, nsp)] @ b.T
        cross = s[k, sp] - s[k, nsp] @ b.T
    else:
        b = np.zeros((sp.size, 0))
        gram = s[np.ix_(sp, sp)].copy()
        cross = s[k, sp].copy()
    gram = (gram + gram.T) / 2
    coef_sp = _solve_pd(gram, cross, "pseudo-variable Gram matrix")
    lam = float(s[k, k] - cross @ coef_sp)
    if not lam > 0:
        raise NumericalError(f"non-positive conditional variance {lam:.3g} at vertex index {k}")
    coef_nsp = -coef_sp @ b
    return coef_sp, coef_nsp, lam, gram, cross, b


def _apply_step(s, sigma, k, sp, nsp):
    """Overwrite row/column ``k`` of ``sigma`` in place."""
    if sp.size == 0:
        sigma[k, :] = 0.0
        sigma[:, k] = 0.0
        sigma[k, k] = s[k, k]
        return
    coef_sp, coef_nsp, lam, *_ = _regress(s, sigma, k, sp, nsp)
    row_sp = coef_sp @ sigma[np.ix_(sp, sp)]
    if nsp.size:
        row_sp = row_sp + coef_nsp @ sigma[np.ix_(nsp, sp)]
    sigma[k, :] = 0.0
    sigma[:, k] = 0.0
    sigma[k, sp] = row_sp
    sigma[sp, k] = row_sp
    sigma[k, k] = lam + row_sp @ coef_sp


def _aligned(summary: SampleSummary, g: BidirectedGraph) -> SampleSummary:
    if summary.labels == g.vertices:
        return summary
    if sorted(summary.labels) != sorted(g.vertices):
        raise InputError(
            f"label mismatch: data have {list(summary.labels)}, graph has {list(g.vertices)}"
        )
    return SampleSummary(summary.cov.reorder(g.vertices), summary.n, summary.centered)


def _vertex_index(g, i) -> int:
    return g.index(i)


def pseudo_gram(summary: SampleSummary, sigma, g: BidirectedGraph, i):
    """Gram matrix of the pseudo-variables and their cross-product with ``Y_i``.

    Both are divided by ``n``, so they are expressed through ``S`` alone.
    """
    summary = _aligned(summary, g)
    k = _vertex_index(g, i)
    plan = _Plan(g)
    sp, nsp = plan.sp[k], plan.nsp[k]
    if sp.size == 0:
        raise InputError(f"vertex {g.vertices[k]!r} has no spouses; there is no pseudo-variable")
    a = np.asarray(sigma, dtype=float)
    _, _, _, gram, cross, _ = _regress(summary.S, a, k, sp, nsp)
    return gram, cross


def regression_estimate(summary: SampleSummary, sigma, g: BidirectedGraph, i) -> RegressionEstimate:
    summary = _aligned(summary, g)
    k = _vertex_index(g, i)
    plan = _Plan(g)
    sp, nsp = plan.sp[k], plan.nsp[k]
    names = g.vertices
    s = summary.S
    if sp.size == 0:
        return RegressionEstimate(
            names[k], (), tuple(names[j] for j in nsp), np.zeros(0), np.zeros(nsp.size),
            float(s[k, k]), np.zeros((0, 0)), np.zeros(0),
        )
    coef_sp, coef_nsp, lam, gram, cross, _ = _regress(s, np.asarray(sigma, dtype=float), k, sp, nsp)
    return RegressionEstimate(
        names[k],
        tuple(names[j] for j in sp),
        tuple(names[j] for j in nsp),
        coef_sp,
        coef_nsp,
        lam,
        gram,
        cross,
    )


def icf_step(summary: SampleSummary, sigma, g: BidirectedGraph, i) -> CovarianceMatrix:
    """One conditional update of row and column ``i``.

    Everything outside row/column ``i`` is copied unchanged; entries at
    non-spouses of ``i`` are set to exactly zero.
    """
    summary = _aligned(summary, g)
    k = _vertex_index(g, i)
    plan = _Plan(g)
    a = np.array(sigma, dtype=float)
    _apply_step(summary.S, a, k, plan.sp[k], plan.nsp[k])
    return CovarianceMatrix(a, g.vertices)


def random_start(summary: SampleSummary, g: BidirectedGraph, rng: np.random.Generator) -> np.ndarray:
    """Random positive definite point of the model, scaled like ``S``.

    Draws a random correlation matrix, zeroes its non-edges and halves the
    off-diagonal part until the result is positive definite.
    """
    p = g.p
    w = rng.standard_normal((p, p + 2))
    c = w @ w.T
    d = np.sqrt(np.diag(c))
    r = c / np.outer(d, d)
    r[~g.adjacency_matrix()] = 0.0
    np.fill_diagonal(r, 0.0)
    while not is_pd(np.eye(p) + r):
        r *= 0.5
    sd = np.sqrt(np.diag(summary.S))
    return (np.eye(p) + r) * np.outer(sd, sd)


def _start_matrix(start: StartSpec, summary: SampleSummary, g: BidirectedGraph) -> np.ndarray:
    if isinstance(start, str):
        if start == "identity":
            return np.eye(g.p)
        return np.diag(np.diag(summary.S))
    if isinstance(start, CovarianceMatrix):
        if start.labels != g.vertices:
            start = start.reorder(g.vertices)
        a = np.array(start.values)
    else:
        a = np.array(start, dtype=float)
    if a.shape != (g.p, g.p):
        raise InputError(f"start matrix has shape {a.shape}, expected {(g.p, g.p)}")
    if not in_model(a, g, 0.0):
        raise InputError("start matrix must be positive definite with exact zeros at non-edges")
    return a


def _order(g: BidirectedGraph, sweep_order) -> list[int]:
    if sweep_order is None:
        return list(range(g.p))
    idx = [g.index(v) for v in sweep_order]
    if sorted(idx) != list(range(g.p)):
        raise InputError("sweep_order must be a permutation of the graph's vertices")
    return idx


StepCallback = Callable[[int, str, np.ndarray], None]


def _run(
    summary: SampleSummary,
    g: BidirectedGraph,
    opts: IcfOptions,
    start: np.ndarray,
    callback: Optional[StepCallback],
) -> FitResult:
    s = summary.S
    plan = _Plan(g)
    order = _order(g, opts.sweep_order)
    scale = float(np.max(np.abs(s)))
    sigma = np.array(start, dtype=float)
    ll0 = log_likelihood(sigma, summary)
    trace: list[float] = []
    changes: list[float] = []
    residual = float("inf")
    converged = False
    for sweep in range(1, opts.max_sweeps + 1):
        prev = sigma.copy()
        for k in order:
            _apply_step(s, sigma, k, plan.sp[k], plan.nsp[k])
            if callback is not None:
                callback(sweep, g.vertices[k], sigma.copy())
        ll = log_likelihood(sigma, summary)
        change = float(np.max(np.abs(sigma - prev)))
        trace.append(ll)
        changes.append(change)
        log.debug("icf sweep %d: loglik=%.12g change=%.3e", sweep, ll, change)
        if change <= opts.tol_sigma * scale:
            residual = likelihood_residual(sigma, summary, g, tol=0.0)
            if residual <= opts.tol_residual:
                converged = True
                break
    if not converged:
        residual = likelihood_residual(sigma, summary, g, tol=0.0)
    status = "converged" if converged else "max_sweeps_reached"
    log.info("icf %s after %d sweeps: loglik=%.12g residual=%.3e", status, len(trace), trace[-1], residual)
    return FitResult(
        sigma_hat=CovarianceMatrix(sigma, g.vertices),
        loglik_trace=tuple(trace),
        sweeps_used=len(trace),
        converged=converged,
        residual=residual,
        status=status,
        loglik_initial=ll0,
        change_trace=tuple(changes),
    )


def fit(
    summary: SampleSummary,
    g: BidirectedGraph,
    opts: Optional[IcfOptions] = None,
    callback: Optional[StepCallback] = None,
) -> FitResult:
    """Maximum likelihood estimate of ``Sigma`` in the covariance graph model of ``g``.

    Parameters
    ----------
    summary : SampleSummary
        Empirical covariance and sample size. Its labels must be the
        vertices of ``g``, in any order.
    g : BidirectedGraph
    opts : IcfOptions, optional
    callback : callable, optional
        Called as ``callback(sweep, vertex, sigma)`` after every single-vertex
        update, with a copy of the current iterate.

    Returns
    -------
    FitResult
        With ``opts.restarts > 0`` the best of the initial run and the
        random restarts, by final log-likelihood. ``restart_logliks`` lists
        all final values and ``multimodal`` flags converged runs that
        disagree by more than 1e-6.
    """
    opts = opts or IcfOptions()
    t0 = time.perf_counter()
    summary = _aligned(summary, g)
    try:
        cholesky(summary.S)
    except NumericalError as exc:
        raise ModelDataError(f"empirical covariance is not positive definite: {exc}") from None
    best = _run(summary, g, opts, _start_matrix(opts.start, summary, g), callback)
    if opts.restarts:
        rng = np.random.default_rng(opts.seed)
        runs = [best]
        for _ in range(opts.restarts):
            runs.append(_run(summary, g, opts, random_start(summary, g, rng), callback))
        lls = tuple(r.loglik for r in runs)
        conv = [r.loglik for r in runs if r.converged]
        multimodal = bool(conv) and (max(conv) - min(conv) > 1e-6)
        best = max(runs, key=lambda r: (r.converged, r.loglik))
        best = replace(best, restart_logliks=lls, multimodal=multimodal)
    return replace(best, wall_time=time.perf_counter() - t0)
