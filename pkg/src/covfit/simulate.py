"""Seeded random instances: Erdos-Renyi graph, a true covariance in the model, sampled data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gaussian import CovarianceMatrix, SampleSummary, empirical_covariance, is_pd
from .graph import BidirectedGraph
from .icf import IcfOptions, fit


@dataclass(frozen=True)
class Instance:
    seed: int
    graph: BidirectedGraph
    sigma_true: CovarianceMatrix
    summary: SampleSummary


def random_graph(p: int, q: float, rng: np.random.Generator) -> BidirectedGraph:
    labels = [f"v{k + 1}" for k in range(p)]
    edges = [
        (labels[i], labels[j])
        for i in range(p)
        for j in range(i + 1, p)
        if rng.random() < q
    ]
    return BidirectedGraph(labels, edges)


def random_model_covariance(g: BidirectedGraph, rng: np.random.Generator) -> np.ndarray:
    """A positive definite matrix with the zero pattern of ``g``.

    A random Gram matrix is projected onto the model by fitting it as if it
    were an empirical covariance. Should that fail, its non-edges are
    zeroed and the diagonal is inflated until the result is positive
    definite.
    """
    p = g.p
    w = rng.standard_normal((p, p))
    gram = w @ w.T / p + 0.1 * np.eye(p)
    try:
        res = fit(SampleSummary(CovarianceMatrix(gram, g.vertices), p), g, IcfOptions(max_sweeps=500))
        sigma = np.array(res.sigma_hat.values)
    except ArithmeticError:
        sigma = np.where(g.adjacency_matrix() | np.eye(p, dtype=bool), gram, 0.0)
        while not is_pd(sigma):
            sigma[np.diag_indices(p)] *= 1.5
    return sigma


def random_instance(seed: int, p: int = 5, q: float = 0.5, n: int = 50, centered: bool = True) -> Instance:
    """Draw a graph, a true covariance in its model and ``n`` observations, all from ``seed``."""
    rng = np.random.default_rng(seed)
    g = random_graph(p, q, rng)
    sigma = random_model_covariance(g, rng)
    y = np.linalg.cholesky(sigma) @ rng.standard_normal((p, n))
    summary = empirical_covariance(y, centered=centered, labels=g.vertices)
    return Instance(seed, g, CovarianceMatrix(sigma, g.vertices), summary)
