"""Fit reports and ICF-vs-Anderson comparison records.

Machine-format reports are JSON with a fixed key order and every float
rounded to 12 significant digits, so identical runs give identical bytes.
Wall time is left out unless asked for, for the same reason.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .anderson import fit_anderson
from .gaussian import CovarianceMatrix, SampleSummary
from .graph import BidirectedGraph
from .icf import IcfOptions, fit, random_start
from .io import format_graph

AGREE_TOL = 1e-6


def num(x):
    """Round to 12 significant digits; pass through ``None`` and non-floats."""
    if x is None or isinstance(x, (bool, int, str)):
        return x
    return float(f"{float(x):.12g}")


def _matrix(a) -> list[list[float]]:
    return [[num(v) for v in row] for row in np.asarray(a)]


def graph_digest(g: BidirectedGraph) -> str:
    return hashlib.sha256(format_graph(g).encode()).hexdigest()


def data_digest(summary: SampleSummary) -> str:
    h = hashlib.sha256()
    h.update(",".join(summary.labels).encode())
    h.update(f"|n={summary.n}|centered={summary.centered}|".encode())
    h.update(" ".join(f"{v:.17g}" for v in summary.S.ravel()).encode())
    return h.hexdigest()


def fit_report(
    result,
    summary: SampleSummary,
    g: BidirectedGraph,
    algorithm: str,
    timing: bool = False,
) -> dict:
    """Key/value tree for one fit; ``result`` is a FitResult or AndersonResult."""
    sigma = np.asarray(result.sigma_hat, dtype=float)
    try:
        est = CovarianceMatrix(sigma, g.vertices)
        corr, sds = _matrix(est.correlations()), [num(v) for v in est.sds()]
    except (ArithmeticError, ValueError):
        corr, sds = None, None
    iterations = getattr(result, "sweeps_used", None)
    if iterations is None:
        iterations = result.iterations
    rep = {
        "algorithm": algorithm,
        "status": result.status,
        "converged": bool(result.converged),
        "iterations": iterations,
        "loglik": num(result.loglik),
        "residual": num(result.residual),
        "labels": list(g.vertices),
        "sigma_hat": _matrix(sigma),
        "correlations": corr,
        "sds": sds,
        "input": {
            "graph_sha256": graph_digest(g),
            "data_sha256": data_digest(summary),
            "n": summary.n,
            "p": summary.p,
        },
    }
    if algorithm == "icf":
        rep["restart_logliks"] = [num(v) for v in result.restart_logliks]
        rep["multimodal"] = bool(result.multimodal)
    if timing:
        rep["wall_time"] = num(result.wall_time)
    return rep


def dumps(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def format_table(rep: dict) -> str:
    """Human-readable report: lower-triangular correlations and an SD row."""
    labels = rep["labels"]
    w = max(8, max(len(v) for v in labels) + 1)
    out = [
        f"algorithm: {rep['algorithm']}   status: {rep['status']}   iterations: {rep['iterations']}",
        f"log-likelihood: {_fmt(rep['loglik'])}   residual: {_fmt(rep['residual'], '.3e')}",
    ]
    if rep["correlations"] is None:
        out.append("(estimate is not a valid covariance matrix)")
        return "\n".join(out) + "\n"
    out.append("".ljust(w) + "".join(v.rjust(w) for v in labels))
    for i, v in enumerate(labels):
        cells = [f"{rep['correlations'][i][j]:.3f}".rjust(w) for j in range(i)]
        out.append((v.ljust(w) + "".join(cells)).rstrip())
    out.append("SD".ljust(w) + "".join(f"{s:#.3g}".rjust(w) for s in rep["sds"]))
    if "wall_time" in rep:
        out.append(f"wall time: {rep['wall_time']:.4f} s")
    return "\n".join(out) + "\n"


def _fmt(x, spec=".6f"):
    return "n/a" if x is None else format(x, spec)


@dataclass(frozen=True)
class BenchRecord:
    seed: Optional[int]
    p: int
    n_edges: int
    icf_status: str
    icf_loglik: float
    icf_sweeps: int
    icf_monotone: bool
    anderson_status: str
    anderson_loglik: Optional[float]
    anderson_iterations: int
    agree: Optional[bool]
    max_abs_diff: Optional[float]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "p": self.p,
            "edges": self.n_edges,
            "icf": {
                "status": self.icf_status,
                "loglik": num(self.icf_loglik),
                "sweeps": self.icf_sweeps,
                "monotone": self.icf_monotone,
            },
            "anderson": {
                "status": self.anderson_status,
                "loglik": num(self.anderson_loglik),
                "iterations": self.anderson_iterations,
            },
            "agree": self.agree,
            "max_abs_diff": num(self.max_abs_diff),
        }


def _monotone(res) -> bool:
    lls = (res.loglik_initial,) + res.loglik_trace
    return all(b >= a - 1e-10 * abs(a) for a, b in zip(lls, lls[1:]))


def compare_instance(
    summary: SampleSummary,
    g: BidirectedGraph,
    seed: Optional[int] = None,
    opts: Optional[IcfOptions] = None,
    restarts: int = 10,
    max_iters: int = 5000,
) -> BenchRecord:
    """Run both algorithms and compare their estimates.

    When Anderson converges to a positive definite point that differs from
    the ICF fit started at the identity, ICF is rerun from up to
    ``restarts`` random starts and agreement with any of them counts.
    """
    opts = opts or IcfOptions()
    icf = fit(summary, g, opts)
    and_res, _ = fit_anderson(summary, g, max_iters=max_iters)
    agree, diff = None, None
    if icf.converged and and_res.converged and and_res.loglik is not None:
        target = and_res.sigma_hat
        diff = float(np.max(np.abs(icf.sigma_hat.values - target)))
        if diff > AGREE_TOL:
            rng = np.random.default_rng(0 if seed is None else seed)
            for _ in range(restarts):
                start = random_start(summary, g, rng)
                alt = fit(summary, g, IcfOptions(
                    max_sweeps=opts.max_sweeps, tol_sigma=opts.tol_sigma,
                    tol_residual=opts.tol_residual, start=start,
                ))
                diff = min(diff, float(np.max(np.abs(alt.sigma_hat.values - target))))
                if diff <= AGREE_TOL:
                    break
        agree = diff <= AGREE_TOL
    return BenchRecord(
        seed=seed,
        p=g.p,
        n_edges=g.n_edges,
        icf_status=icf.status,
        icf_loglik=icf.loglik,
        icf_sweeps=icf.sweeps_used,
        icf_monotone=_monotone(icf),
        anderson_status=and_res.status,
        anderson_loglik=and_res.loglik,
        anderson_iterations=and_res.iterations,
        agree=agree,
        max_abs_diff=diff,
    )


def summarize(records: list[BenchRecord]) -> dict:
    both = [r for r in records if r.agree is not None]
    return {
        "instances": len(records),
        "icf_converged": sum(r.icf_status == "converged" for r in records),
        "icf_monotone": sum(r.icf_monotone for r in records),
        "anderson_status": dict(sorted(Counter(r.anderson_status for r in records).items())),
        "both_converged": len(both),
        "agreement_rate": num(sum(r.agree for r in both) / len(both)) if both else None,
    }
