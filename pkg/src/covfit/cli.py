"""Command-line interface.

Exit status: 0 success / separated / equivalent, 1 connected / not
equivalent, 2 usage or input error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Optional, Sequence

from . import __version__
from .anderson import fit_anderson
from .errors import CovfitError, InputError
from .gaussian import SampleSummary
from .graph import (
    BidirectedGraph,
    forbidden_induced_subgraph,
    latent_projection,
    m_connecting_path,
    unshielded_noncollider,
)
from .icf import IcfOptions, fit
from .io import (
    format_graph,
    read_correlation_table,
    read_covariance,
    read_data_summary,
    read_graph,
)
from .report import compare_instance, dumps, fit_report, format_table, summarize
from .simulate import random_instance

log = logging.getLogger("covfit")

EXIT_OK, EXIT_NO, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def configure_logging(level: Optional[str] = None) -> None:
    """Route diagnostics to stderr according to ``COVFIT_LOG`` (off, info, trace)."""
    level = (level or os.environ.get("COVFIT_LOG", "off")).lower()
    levels = {"off": logging.WARNING, "info": logging.INFO, "trace": logging.DEBUG}
    if level not in levels:
        raise InputError(f"COVFIT_LOG must be one of off, info, trace (got {level!r})")
    log.handlers.clear()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
    log.addHandler(handler)
    log.setLevel(levels[level])
    log.propagate = False


def _csv_labels(s: Optional[str]) -> list[str]:
    if not s:
        return []
    return [v for v in (x.strip() for x in s.split(",")) if v]


def _load_summary(args, labels: Sequence[str]) -> SampleSummary:
    sources = [x for x in (args.data, args.cov, args.corr) if x]
    if len(sources) != 1:
        raise InputError("give exactly one of --data, --cov, --corr")
    if args.data:
        if args.n is not None:
            raise InputError("--n is implied by the data file; do not pass it with --data")
        summary = read_data_summary(args.data, centered=args.centered, transpose=args.transpose)
    else:
        if args.n is None:
            raise InputError("--n is required with --cov or --corr")
        cov = read_covariance(args.cov) if args.cov else read_correlation_table(args.corr)
        summary = SampleSummary(cov, args.n, centered=args.centered)
    if sorted(summary.labels) != sorted(labels):
        raise InputError(
            f"label mismatch: data have {list(summary.labels)}, graph has {list(labels)}"
        )
    if tuple(summary.labels) != tuple(labels):
        summary = SampleSummary(summary.cov.reorder(labels), summary.n, summary.centered)
    return summary


def _read_bidirected(path) -> BidirectedGraph:
    g = read_graph(path)
    if not isinstance(g, BidirectedGraph):
        raise InputError(f"{path}: expected a bi-directed graph, found a DAG")
    return g


def _icf_options(args) -> IcfOptions:
    start = args.start
    if start.startswith("file:"):
        start = read_covariance(start[len("file:"):])
    elif start not in ("identity", "diag"):
        raise InputError(f"--start must be identity, diag or file:PATH (got {start!r})")
    return IcfOptions(
        max_sweeps=args.max_sweeps,
        tol_sigma=args.tol_sigma,
        tol_residual=args.tol_residual,
        start=start,
        restarts=args.restarts,
        seed=args.seed,
    )


def cmd_fit(args) -> int:
    g = _read_bidirected(args.graph)
    summary = _load_summary(args, g.vertices)
    if args.algorithm == "icf":
        result = fit(summary, g, _icf_options(args))
    else:
        result, _ = fit_anderson(summary, g, max_iters=args.max_sweeps, tol=args.tol_sigma)
    rep = fit_report(result, summary, g, args.algorithm, timing=args.timing)
    sys.stdout.write(format_table(rep))
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(dumps(rep))
    if args.algorithm == "anderson" and result.status != "converged":
        print(f"anderson: run ended with status {result.status}", file=sys.stderr)
        return EXIT_NUMERIC
    if result.status != "converged":
        print(f"warning: {result.status} after {rep['iterations']} sweeps", file=sys.stderr)
    return EXIT_OK


def cmd_msep(args) -> int:
    g = _read_bidirected(args.graph)
    path = m_connecting_path(g, _csv_labels(args.a), _csv_labels(args.b), _csv_labels(args.given))
    if path is None:
        print("separated")
        return EXIT_OK
    print("connected: " + " <-> ".join(path))
    return EXIT_NO


def cmd_equiv(args) -> int:
    g = read_graph(args.graph)
    if isinstance(g, BidirectedGraph):
        bad = forbidden_induced_subgraph(g)
        if bad is None:
            print("equivalent DAG exists")
            return EXIT_OK
        kind, vs = bad
        witness = " <-> ".join(vs) + (f" <-> {vs[0]}" if kind == "cycle" else "")
        print(f"no equivalent DAG: induced 4-{kind} {witness}")
        return EXIT_NO
    triple = unshielded_noncollider(g)
    if triple is None:
        print("equivalent bi-directed graph exists")
        return EXIT_OK
    a, b, c = triple
    print(f"no equivalent bi-directed graph: unshielded non-collider ({a}, {b}, {c})")
    return EXIT_NO


def cmd_project(args) -> int:
    d = read_graph(args.dag, kind="dag")
    sys.stdout.write(format_graph(latent_projection(d)))
    return EXIT_OK


def _random_record(task):
    seed, p, q, n = task
    inst = random_instance(seed, p=p, q=q, n=n)
    return compare_instance(inst.summary, inst.graph, seed=seed)


def cmd_compare(args) -> int:
    out = open(args.out, "w") if args.out else None

    def emit(obj):
        line = json.dumps(obj)
        print(line)
        if out:
            out.write(line + "\n")

    try:
        if args.random is not None or args.seeds:
            if args.graph or args.data or args.cov or args.corr:
                raise InputError("--random/--seeds generate their own instances; drop the graph and data arguments")
            seeds = [int(s) for s in _csv_labels(args.seeds)] if args.seeds else [
                args.seed + k for k in range(args.random)
            ]
            tasks = [(s, args.p, args.q, args.n_random) for s in seeds]
            if args.jobs > 1:
                # map() keeps instance order regardless of completion order
                with ProcessPoolExecutor(args.jobs) as pool:
                    records = list(pool.map(_random_record, tasks))
            else:
                records = [_random_record(t) for t in tasks]
        else:
            if not args.graph:
                raise InputError("give a graph file with a data source, or --random N")
            g = _read_bidirected(args.graph)
            summary = _load_summary(args, g.vertices)
            records = [compare_instance(summary, g, seed=None)]
        for rec in records:
            emit(rec.to_dict())
        emit({"summary": summarize(records)})
    finally:
        if out:
            out.close()
    return EXIT_OK


def _add_data_args(p):
    src = p.add_argument_group("data source (exactly one)")
    src.add_argument("--data", help="data CSV, one row per variable")
    src.add_argument("--cov", help="covariance CSV with a header row of labels")
    src.add_argument("--corr", help="correlation table: lower-triangular rows then an SD row")
    p.add_argument("--n", type=int, help="sample size (with --cov or --corr)")
    p.add_argument("--centered", action="store_true", help="zero-mean model: do not subtract the sample mean")
    p.add_argument("--transpose", action="store_true", help="data CSV has one row per subject")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="covfit", description="Maximum likelihood fitting of covariance graph models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit a covariance graph model")
    p.add_argument("graph", help="bi-directed graph file")
    _add_data_args(p)
    p.add_argument("--algorithm", choices=("icf", "anderson"), default="icf")
    p.add_argument("--tol-sigma", type=float, default=1e-10)
    p.add_argument("--tol-residual", type=float, default=1e-8)
    p.add_argument("--max-sweeps", type=int, default=5000)
    p.add_argument("--start", default="identity", help="identity, diag or file:PATH")
    p.add_argument("--restarts", type=int, default=0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", help="write the JSON report here")
    p.add_argument("--timing", action="store_true", help="include wall time in the report")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("msep", help="test m-separation in a bi-directed graph")
    p.add_argument("graph")
    p.add_argument("--a", required=True, help="comma-separated vertices")
    p.add_argument("--b", required=True, help="comma-separated vertices")
    p.add_argument("--given", default="", help="comma-separated vertices")
    p.set_defaults(func=cmd_msep)

    p = sub.add_parser("equiv", help="Markov equivalence between bi-directed graphs and DAGs")
    p.add_argument("graph", help="bi-directed graph or DAG file")
    p.set_defaults(func=cmd_equiv)

    p = sub.add_parser("project", help="latent projection of a DAG with latent vertices")
    p.add_argument("dag")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("compare", help="run ICF and Anderson side by side")
    p.add_argument("graph", nargs="?")
    _add_data_args(p)
    p.add_argument("--random", type=int, help="number of seeded random instances")
    p.add_argument("--seeds", help="comma-separated instance seeds")
    p.add_argument("--seed", type=int, default=0, help="first seed for --random")
    p.add_argument("--p", type=int, default=5, help="variables per random instance")
    p.add_argument("--q", type=float, default=0.5, help="edge probability for random graphs")
    p.add_argument("--n-random", type=int, default=50, help="sample size for random instances")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for random instances")
    p.add_argument("--out", help="also write the JSON lines here")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors, --help, --version
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        configure_logging()
        return args.func(args)
    except CovfitError as exc:
        print(f"covfit {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except ArithmeticError as exc:
        print(f"covfit {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"covfit {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
