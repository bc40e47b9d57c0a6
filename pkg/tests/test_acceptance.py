"""Acceptance criteria AC1-AC9, one test each.

Every test records a PASS/FAIL line in ``conftest.ACCEPTANCE_LINES``; the
lines are printed in a separate section at the end of the pytest run.
"""

import contextlib
import time

import numpy as np

from covfit.anderson import anderson_step, fit_anderson
from covfit.gaussian import CovarianceMatrix, SampleSummary, in_model, log_likelihood, score
from covfit.graph import (
    BidirectedGraph,
    Dag,
    bidirected_equivalent_exists,
    d_separated,
    dag_equivalent_exists,
    forbidden_induced_subgraph,
    latent_projection,
    m_separated,
    unshielded_noncollider,
)
from covfit.icf import IcfOptions, fit
from covfit.report import compare_instance
from covfit.simulate import random_graph, random_instance

from conftest import ACCEPTANCE_LINES
from oracles import (
    all_dag_arc_sets,
    all_graph_edge_sets,
    disjoint_queries,
    forbidden_scan,
    free_entry_gradient_fd,
    msep_bruteforce,
    noncollider_scan,
    random_admissible_dag,
)


@contextlib.contextmanager
def criterion(tag, title):
    """Record one PASS/FAIL line whatever happens inside the block."""
    info = {}
    ok = False
    try:
        yield info
        ok = True
    finally:
        detail = info.get("detail", "")
        ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {tag}  {title}" + (f"  [{detail}]" if detail else ""))


def spd(rng, p):
    w = rng.standard_normal((p, p + 3))
    return w @ w.T / (p + 3) + 0.05 * np.eye(p)


def test_ac1_reference_estimates(example_summary, example_graph):
    with criterion("AC1", "reference ML estimates on the example data") as info:
        t0 = time.perf_counter()
        res = fit(example_summary, example_graph)
        elapsed = time.perf_counter() - t0
        est = res.sigma_hat
        r = est.correlations()
        sd = est.sds()
        info["detail"] = (
            f"r(W,X)={r[0, 2]:.4f} r(V,Y)={r[1, 3]:.4f} r(X,Y)={r[2, 3]:.4f} "
            f"sd={np.round(sd, 3).tolist()} t={elapsed * 1e3:.1f}ms"
        )
        assert res.converged
        assert abs(r[0, 2] - -0.475) <= 0.005
        assert abs(r[1, 3] - -0.378) <= 0.005
        assert abs(r[2, 3] - -0.342) <= 0.005
        assert est["W", "V"] == 0.0 and est["W", "Y"] == 0.0 and est["V", "X"] == 0.0
        assert np.all(np.abs(sd - [5.72, 92.0, 7.93, 2.05]) <= 0.05)
        assert elapsed < 1.0


def test_ac2_fixed_point_quality(example_summary, example_graph):
    with criterion("AC2", "likelihood equations at the example fit") as info:
        res = fit(example_summary, example_graph)
        sc = score(res.sigma_hat, example_summary, example_graph).max_abs()
        info["detail"] = f"residual={res.residual:.2e} max|score|={sc:.2e}"
        assert res.residual <= 1e-8
        assert sc <= 1e-6


def test_ac3_monotone_likelihood():
    with criterion("AC3", "monotone likelihood, feasibility, convergence on 100 instances") as info:
        worst_drop = 0.0
        max_sweeps = 0
        t0 = time.perf_counter()
        for seed in range(100):
            inst = random_instance(seed, p=2 + seed % 5, n=50)
            g, s = inst.graph, inst.summary
            infeasible = []

            def check(sweep, vertex, m):
                if not in_model(m, g, 0.0):
                    infeasible.append((sweep, vertex))

            res = fit(s, g, IcfOptions(max_sweeps=5000), callback=check)
            lls = (res.loglik_initial,) + res.loglik_trace
            for a, b in zip(lls, lls[1:]):
                worst_drop = max(worst_drop, (a - b) / abs(a))
                assert b >= a - 1e-10 * abs(a), (seed, a, b)
            assert not infeasible, (seed, infeasible[:3])
            assert res.converged and res.residual <= 1e-8, (seed, res.status, res.residual)
            max_sweeps = max(max_sweeps, res.sweeps_used)
        elapsed = time.perf_counter() - t0
        info["detail"] = f"max sweeps={max_sweeps} worst relative drop={worst_drop:.1e} t={elapsed:.1f}s"
        assert elapsed < 30.0


def test_ac4_closed_forms():
    with criterion("AC4", "saturated and independence models on 20 random S") as info:
        rng = np.random.default_rng(4)
        worst = 0.0
        for _ in range(20):
            p = int(rng.integers(2, 7))
            labels = [f"x{k}" for k in range(p)]
            s = SampleSummary(CovarianceMatrix(spd(rng, p), labels), 30)
            full = fit(s, BidirectedGraph.complete(labels)).sigma_hat.values
            empty = fit(s, BidirectedGraph(labels)).sigma_hat.values
            worst = max(worst, np.max(np.abs(full - s.S)), np.max(np.abs(empty - np.diag(np.diag(s.S)))))
        info["detail"] = f"max error={worst:.1e}"
        assert worst <= 1e-10


def test_ac5_anderson_first_step():
    with criterion("AC5", "Anderson first step from the identity equals S on F") as info:
        worst = 0.0
        for seed in range(20):
            inst = random_instance(seed, p=2 + seed % 5)
            g, s = inst.graph, inst.summary
            nxt, _ = anderson_step(np.eye(g.p), s, g)
            worst = max(worst, max(abs(nxt[i, j] - s.S[i, j]) for i, j in g.free_pairs()))
        info["detail"] = f"max error={worst:.1e}"
        assert worst <= 1e-12


def test_ac6_cross_algorithm_agreement(example_summary, example_graph):
    with criterion("AC6", "ICF/Anderson agreement and an Anderson failure") as info:
        a, _ = fit_anderson(example_summary, example_graph)
        i = fit(example_summary, example_graph)
        assert a.converged
        example_diff = float(np.max(np.abs(a.sigma_hat - i.sigma_hat.values)))
        assert example_diff <= 1e-6
        both = worst = 0
        failures = []
        for seed in range(150):
            inst = random_instance(seed, p=3 + seed % 4)
            rec = compare_instance(inst.summary, inst.graph, seed=seed)
            assert rec.icf_status == "converged"
            if rec.agree is not None:
                both += 1
                worst = max(worst, rec.max_abs_diff)
                assert rec.agree, (seed, rec.max_abs_diff)
            elif rec.anderson_status in ("non_pd_iterate", "max_iters_reached"):
                failures.append((seed, inst.graph.p, rec.anderson_status))
        info["detail"] = (
            f"example diff={example_diff:.1e}; {both} converged pairs, max diff={worst:.1e}; "
            f"{len(failures)} Anderson failures, first {failures[:1]}"
        )
        assert failures


def test_ac7_separation_oracles():
    with criterion("AC7", "m-separation vs path enumeration; separation under latent projection") as info:
        checked = 0
        for p in range(1, 5):
            vs = [str(k) for k in range(p)]
            queries = list(disjoint_queries(vs))
            for edges in all_graph_edge_sets(vs):
                g = BidirectedGraph(vs, edges)
                for a, b, s in queries:
                    assert m_separated(g, a, b, s) == msep_bruteforce(vs, edges, a, b, s)
                    checked += 1
        rng = np.random.default_rng(7)
        sampled = 0
        for _ in range(200):
            p = int(rng.integers(5, 8))
            g = random_graph(p, float(rng.uniform(0.2, 0.7)), rng)
            vs = list(g.vertices)
            edges = g.sorted_edges()
            for _ in range(100):
                assign = rng.integers(0, 4, size=p)
                a = [v for v, k in zip(vs, assign) if k == 1]
                b = [v for v, k in zip(vs, assign) if k == 2]
                if not a or not b:
                    continue
                s = [v for v, k in zip(vs, assign) if k == 3]
                assert m_separated(g, a, b, s) == msep_bruteforce(vs, edges, a, b, s)
                sampled += 1
        disagreements = 0
        dag_queries = 0
        for _ in range(500):
            d = random_admissible_dag(rng, int(rng.integers(2, 6)), int(rng.integers(0, 5)))
            g = latent_projection(d)
            for a, b, s in disjoint_queries(list(d.observed)):
                disagreements += d_separated(d, a, b, s) != m_separated(g, a, b, s)
                dag_queries += 1
        info["detail"] = (
            f"{checked} exhaustive + {sampled} sampled queries; "
            f"{dag_queries} DAG queries, {disagreements} disagreements"
        )
        assert disagreements == 0


def test_ac8_gradient_check():
    with criterion("AC8", "score vs central finite differences on 50 points") as info:
        rng = np.random.default_rng(8)
        worst = 0.0
        for k in range(50):
            p = 2 + k % 5
            g = random_graph(p, 0.5, rng)
            s = SampleSummary(CovarianceMatrix(spd(rng, p), g.vertices), 40)
            sigma = np.where(g.adjacency_matrix() | np.eye(p, dtype=bool), spd(rng, p), 0.0)
            while not in_model(sigma, g, 0.0):
                sigma[np.diag_indices(p)] *= 1.5
            sc = score(sigma, s, g).values
            fd = free_entry_gradient_fd(lambda m: log_likelihood(m, s), sigma, g.free_pairs(), h=1e-5)
            rel = float(np.max(np.abs(sc - fd)) / np.max(np.abs(fd)))
            worst = max(worst, rel)
        info["detail"] = f"max relative error={worst:.1e}"
        assert worst <= 1e-5


def test_ac9_markov_equivalence():
    with criterion("AC9", "equivalence predicates and witnesses") as info:
        four_path = BidirectedGraph("1234", [("1", "3"), ("3", "4"), ("2", "4")])
        assert not dag_equivalent_exists(four_path)
        assert forbidden_induced_subgraph(four_path) == ("path", ("1", "3", "4", "2"))
        chain = Dag("abc", [("a", "b"), ("b", "c")])
        assert not bidirected_equivalent_exists(chain)
        assert unshielded_noncollider(chain) == ("a", "b", "c")
        n_graphs = n_dags = 0
        for p in range(1, 6):
            vs = [str(k) for k in range(p)]
            for edges in all_graph_edge_sets(vs):
                g = BidirectedGraph(vs, edges)
                assert dag_equivalent_exists(g) == (not forbidden_scan(vs, edges)), edges
                n_graphs += 1
            for arcs in all_dag_arc_sets(vs):
                d = Dag(vs, arcs)
                assert bidirected_equivalent_exists(d) == (not noncollider_scan(vs, arcs)), arcs
                n_dags += 1
        info["detail"] = f"{n_graphs} graphs, {n_dags} DAGs"
        assert n_graphs == sum(2 ** (p * (p - 1) // 2) for p in range(1, 6))
        # labelled DAG counts on 1..5 vertices
        assert n_dags == 1 + 3 + 25 + 543 + 29281
