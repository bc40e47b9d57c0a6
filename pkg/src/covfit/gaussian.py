"""Covariance matrices, sample summaries and the Gaussian log-likelihood.

Everything downstream of ingestion works from a :class:`SampleSummary`: the
empirical covariance and the sample size. Raw data never reach the fitting
routines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import cho_solve, lapack

from .errors import (
    DimensionError,
    InputError,
    ModelDataError,
    ModelMembershipError,
    NotPositiveDefiniteError,
)
from .graph import BidirectedGraph

DEFAULT_ZERO_TOL = 1e-12

__all__ = [
    "CovarianceMatrix",
    "SampleSummary",
    "ModelScore",
    "cholesky",
    "is_pd",
    "empirical_covariance",
    "from_correlation_table",
    "log_likelihood",
    "likelihood_residual",
    "score",
    "in_model",
    "zero_pattern_violations",
]


def cholesky(a: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of ``a``.

    Raises
    ------
    NotPositiveDefiniteError
        If a leading principal minor is not positive; ``pivot`` holds the
        0-based index of the failing pivot.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InputError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NotPositiveDefiniteError("matrix has non-finite entries", pivot=None)
    c, info = lapack.dpotrf(a, lower=1, clean=1)
    if info > 0:
        raise NotPositiveDefiniteError(
            f"matrix is not positive definite (factorization failed at pivot {info - 1})",
            pivot=info - 1,
        )
    if info < 0:  # pragma: no cover - argument error inside LAPACK
        raise NotPositiveDefiniteError(f"dpotrf argument error {info}")
    return c


def is_pd(a) -> bool:
    try:
        cholesky(_arr(a))
    except NotPositiveDefiniteError:
        return False
    return True


def _arr(x) -> np.ndarray:
    if isinstance(x, CovarianceMatrix):
        return x.values
    return np.asarray(x, dtype=float)


class CovarianceMatrix:
    """Symmetric matrix with vertex labels.

    The stored array is exactly symmetric and read-only. Positive
    definiteness is not enforced on construction; call :meth:`cholesky` or
    :meth:`is_pd` to check it.
    """

    __slots__ = ("_values", "_labels")

    def __init__(self, values, labels: Optional[Sequence] = None, *, sym_tol: float = 1e-10):
        a = np.array(values, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise InputError(f"covariance must be a non-empty square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise InputError("covariance matrix has non-finite entries")
        scale = max(1.0, float(np.max(np.abs(a))))
        asym = float(np.max(np.abs(a - a.T)))
        if asym > sym_tol * scale:
            raise InputError(f"covariance matrix is not symmetric (max asymmetry {asym:.3g})")
        a = np.tril(a) + np.tril(a, -1).T
        a.setflags(write=False)
        if labels is None:
            labels = [str(k + 1) for k in range(a.shape[0])]
        labels = tuple(str(v) for v in labels)
        if len(labels) != a.shape[0]:
            raise InputError(f"{len(labels)} labels for a {a.shape[0]}x{a.shape[0]} matrix")
        if len(set(labels)) != len(labels):
            raise InputError("duplicate covariance labels")
        self._values = a
        self._labels = labels

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def labels(self) -> tuple[str, ...]:
        return self._labels

    @property
    def p(self) -> int:
        return self._values.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self._values if dtype is None else self._values.astype(dtype)

    def __repr__(self) -> str:
        return f"CovarianceMatrix(labels={list(self._labels)}, values={self._values.tolist()})"

    def __getitem__(self, key):
        a, b = key
        return self._values[self._labels.index(str(a)), self._labels.index(str(b))]

    def cholesky(self) -> np.ndarray:
        return cholesky(self._values)

    def is_pd(self) -> bool:
        return is_pd(self._values)

    def inverse(self) -> np.ndarray:
        c = self.cholesky()
        return cho_solve((c, True), np.eye(self.p))

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.cholesky()))))

    def sds(self) -> np.ndarray:
        d = np.diag(self._values)
        if np.any(d <= 0):
            raise ModelDataError("non-positive variance on the diagonal")
        return np.sqrt(d)

    def correlations(self) -> np.ndarray:
        s = self.sds()
        r = self._values / np.outer(s, s)
        np.fill_diagonal(r, 1.0)
        return r

    def reorder(self, labels: Sequence) -> "CovarianceMatrix":
        labels = [str(v) for v in labels]
        if sorted(labels) != sorted(self._labels):
            raise InputError(
                f"label mismatch: matrix has {sorted(self._labels)}, requested {sorted(labels)}"
            )
        idx = [self._labels.index(v) for v in labels]
        return CovarianceMatrix(self._values[np.ix_(idx, idx)], labels)


@dataclass(frozen=True)
class SampleSummary:
    """Empirical covariance together with the sample size it came from.

    ``centered=True`` means the covariance was formed about zero; otherwise
    the sample mean was subtracted and one more observation is required.
    ``check_n=False`` skips that sample-size requirement, for evaluating the
    likelihood at arbitrary ``(S, n)``; fitting still needs a positive
    definite ``S``.
    """

    cov: CovarianceMatrix
    n: int
    centered: bool = True
    check_n: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        if not isinstance(self.cov, CovarianceMatrix):
            object.__setattr__(self, "cov", CovarianceMatrix(self.cov))
        if int(self.n) != self.n or self.n < 1:
            raise InputError(f"sample size must be a positive integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        need = self.p if self.centered else self.p + 1
        if self.check_n and self.n < need:
            kind = "about zero" if self.centered else "with the mean estimated"
            raise DimensionError(
                f"n = {self.n} is too small for p = {self.p} variables {kind}; "
                f"need n >= {need} for a positive definite empirical covariance"
            )

    @property
    def p(self) -> int:
        return self.cov.p

    @property
    def S(self) -> np.ndarray:
        return self.cov.values

    @property
    def labels(self) -> tuple[str, ...]:
        return self.cov.labels


@dataclass(frozen=True)
class ModelScore:
    """Partial derivatives of the log-likelihood over the free entries.

    ``index`` lists the free pairs as label tuples, diagonals first and then
    the edges, matching :meth:`BidirectedGraph.free_pairs`.
    """

    index: tuple[tuple[str, str], ...]
    values: np.ndarray

    def as_dict(self) -> dict[tuple[str, str], float]:
        return {k: float(v) for k, v in zip(self.index, self.values)}

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if len(self.values) else 0.0


def empirical_covariance(
    data, centered: bool = False, labels: Optional[Sequence] = None
) -> SampleSummary:
    """Empirical covariance of a ``p x n`` data matrix (one row per variable).

    Parameters
    ----------
    data : array-like, shape (p, n)
    centered : bool
        If true, the model mean is taken to be zero and ``S = Y Y' / n``.
        Otherwise the row means are subtracted first.
    labels : sequence of str, optional
    """
    y = np.asarray(data, dtype=float)
    if y.ndim == 1:
        y = y[None, :]
    if y.ndim != 2:
        raise InputError(f"data must be a p x n matrix, got {y.ndim} dimensions")
    if not np.all(np.isfinite(y)):
        raise InputError("data contain non-finite entries")
    p, n = y.shape
    need = p if centered else p + 1
    if n < need:
        raise DimensionError(
            f"{n} observations of {p} variables: need n >= {need} "
            f"({'zero-mean' if centered else 'mean-estimated'} covariance)"
        )
    if not centered:
        y = y - y.mean(axis=1, keepdims=True)
    s = y @ y.T / n
    return SampleSummary(CovarianceMatrix((s + s.T) / 2, labels), n, centered)


def from_correlation_table(
    correlations, sds: Sequence[float], labels: Optional[Sequence] = None
) -> CovarianceMatrix:
    """Covariance matrix from correlations and standard deviations.

    ``correlations`` is either a full ``p x p`` matrix (only the strict lower
    triangle is read) or a ragged list of the ``p - 1`` strict lower-triangle
    rows, row ``k`` holding ``r[k+1, 0..k]``.
    """
    sds = np.asarray(sds, dtype=float)
    p = sds.shape[0]
    if np.any(~np.isfinite(sds)) or np.any(sds <= 0):
        raise InputError(f"standard deviations must be positive, got {sds.tolist()}")
    r = np.eye(p)
    if isinstance(correlations, np.ndarray) and correlations.ndim == 2:
        if correlations.shape != (p, p):
            raise InputError(f"correlation matrix shape {correlations.shape} does not match {p} SDs")
        for i in range(p):
            r[i, :i] = correlations[i, :i]
    else:
        rows = [list(row) for row in correlations]
        if len(rows) == p and len(rows[0]) == 0:
            rows = rows[1:]
        if len(rows) != p - 1:
            raise InputError(f"expected {p - 1} correlation rows for {p} variables, got {len(rows)}")
        for k, row in enumerate(rows, start=1):
            if len(row) != k:
                raise InputError(f"correlation row {k + 1} must have {k} entries, got {len(row)}")
            r[k, :k] = row
    low = r[np.tril_indices(p, -1)]
    if np.any(~np.isfinite(low)) or np.any(np.abs(low) > 1):
        raise InputError("correlations must lie in [-1, 1]")
    r = np.tril(r) + np.tril(r, -1).T
    cov = r * np.outer(sds, sds)
    out = CovarianceMatrix(cov, labels)
    if not out.is_pd():
        lam = float(np.linalg.eigvalsh(cov)[0])
        raise ModelDataError(
            f"reconstructed covariance is not positive definite (smallest eigenvalue {lam:.6g})"
        )
    return out


def log_likelihood(sigma, summary: SampleSummary) -> float:
    """Gaussian log-likelihood of ``sigma`` for ``n`` observations with covariance ``S``.

    Includes the ``-(n p / 2) log(2 pi)`` constant.
    """
    s = summary.S
    a = _arr(sigma)
    if a.shape != s.shape:
        raise InputError(f"sigma has shape {a.shape}, summary has {s.shape}")
    c = cholesky(a)
    n, p = summary.n, summary.p
    logdet = 2.0 * float(np.sum(np.log(np.diag(c))))
    trace = float(np.trace(cho_solve((c, True), s)))
    return -0.5 * n * p * math.log(2 * math.pi) - 0.5 * n * logdet - 0.5 * n * trace


def _check_labels(sigma, g: BidirectedGraph) -> None:
    if isinstance(sigma, CovarianceMatrix) and sigma.labels != g.vertices:
        raise InputError(
            f"label mismatch: matrix labels {list(sigma.labels)} vs graph vertices {list(g.vertices)}"
        )


def zero_pattern_violations(sigma, g: BidirectedGraph, tol: float = DEFAULT_ZERO_TOL):
    """Non-adjacent pairs whose covariance exceeds ``tol`` in absolute value."""
    a = _arr(sigma)
    if a.shape != (g.p, g.p):
        raise InputError(f"matrix shape {a.shape} does not match graph with {g.p} vertices")
    adj = g.adjacency_matrix()
    bad = []
    for i in range(g.p):
        for j in range(i + 1, g.p):
            if not adj[i, j] and abs(a[i, j]) > tol:
                bad.append((g.vertices[i], g.vertices[j], float(a[i, j])))
    return bad


def _require_model(sigma, g, tol):
    _check_labels(sigma, g)
    bad = zero_pattern_violations(sigma, g, tol)
    if bad:
        shown = ", ".join(f"({a},{b})={v:.3g}" for a, b, v in bad[:6])
        raise ModelMembershipError(f"sigma is non-zero at non-adjacent pairs: {shown}", bad)


def _stationarity_gap(sigma, summary: SampleSummary) -> np.ndarray:
    c = cholesky(_arr(sigma))
    k = cho_solve((c, True), np.eye(summary.p))
    return k - k @ summary.S @ k


def likelihood_residual(
    sigma, summary: SampleSummary, g: BidirectedGraph, tol: float = DEFAULT_ZERO_TOL
) -> float:
    """Largest violation of the likelihood equations over the free entries.

    Returns ``max |(Sigma^-1)_ij - (Sigma^-1 S Sigma^-1)_ij|`` over the
    diagonal and the edges of ``g``.
    """
    _require_model(sigma, g, tol)
    gap = _stationarity_gap(sigma, summary)
    rows, cols = zip(*g.free_pairs())
    return float(np.max(np.abs(gap[list(rows), list(cols)])))


def score(
    sigma, summary: SampleSummary, g: BidirectedGraph, tol: float = DEFAULT_ZERO_TOL
) -> ModelScore:
    """Gradient of the log-likelihood with respect to the free covariance entries.

    An off-diagonal parameter moves both mirrored entries, so its derivative
    carries a factor 2 relative to a diagonal one: ``n/2 * M_ii`` on the
    diagonal and ``n * M_ij`` on edges, where
    ``M = Sigma^-1 S Sigma^-1 - Sigma^-1``.
    """
    _require_model(sigma, g, tol)
    m = -_stationarity_gap(sigma, summary)
    pairs = g.free_pairs()
    vals = np.array(
        [(0.5 if i == j else 1.0) * summary.n * m[i, j] for i, j in pairs], dtype=float
    )
    index = tuple((g.vertices[i], g.vertices[j]) for i, j in pairs)
    return ModelScore(index, vals)


def in_model(sigma, g: BidirectedGraph, tol: float = DEFAULT_ZERO_TOL) -> bool:
    """True iff ``sigma`` is positive definite and vanishes (to ``tol``) off the edges."""
    _check_labels(sigma, g)
    if zero_pattern_violations(sigma, g, tol):
        return False
    return is_pd(sigma)
