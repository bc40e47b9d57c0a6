"""Text formats: graph files, covariance CSV, correlation tables, data CSV.

Graph files hold one declaration per line::

    # comment
    vertex W
    W <-> X        # bi-directed edge
    u -> W         # directed edge
    latent u

Vertices named in edges are declared implicitly, in order of first
appearance. A file may not mix ``<->`` with ``->``/``latent``.
"""

from __future__ import annotations

import csv
import io as _io
import re
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import InputError
from .gaussian import CovarianceMatrix, SampleSummary, empirical_covariance, from_correlation_table
from .graph import BidirectedGraph, Dag

PathLike = Union[str, Path]

_EDGE = re.compile(r"^(\S+)\s*(<->|->)\s*(\S+)$")


def parse_graph_text(text: str, kind: Optional[str] = None) -> Union[BidirectedGraph, Dag]:
    """Parse the graph text format.

    ``kind`` forces ``"bidirected"`` or ``"dag"``; by default a file with
    ``->`` edges or ``latent`` lines is a DAG and anything else is a
    bi-directed graph.
    """
    vertices: list[str] = []
    seen = set()
    bi, di, latent = [], [], []

    def declare(v):
        if v not in seen:
            seen.add(v)
            vertices.append(v)

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, _, rest = line.partition(" ")
        if head in ("vertex", "latent"):
            labels = rest.split()
            if not labels:
                raise InputError(f"line {lineno}: '{head}' needs at least one label")
            for v in labels:
                declare(v)
            if head == "latent":
                latent.extend(labels)
            continue
        m = _EDGE.match(line)
        if not m:
            raise InputError(f"line {lineno}: cannot parse {raw.strip()!r}")
        a, arrow, b = m.groups()
        declare(a)
        declare(b)
        (bi if arrow == "<->" else di).append((a, b))

    if bi and (di or latent):
        raise InputError("graph file mixes bi-directed edges with directed edges or latent vertices")
    if kind is None:
        kind = "dag" if (di or latent) else "bidirected"
    if kind == "dag":
        if bi:
            raise InputError("expected a DAG but found bi-directed edges")
        return Dag(vertices, di, latent)
    if kind == "bidirected":
        if di or latent:
            raise InputError("expected a bi-directed graph but found directed edges or latent vertices")
        return BidirectedGraph(vertices, bi)
    raise InputError(f"unknown graph kind {kind!r}")


def read_graph(path: PathLike, kind: Optional[str] = None):
    return parse_graph_text(_read(path), kind)


def format_graph(g: Union[BidirectedGraph, Dag]) -> str:
    lines = [f"vertex {v}" for v in g.vertices]
    if isinstance(g, Dag):
        lines += [f"latent {v}" for v in g.vertices if v in g.latent]
        lines += [f"{a} -> {b}" for a, b in g.sorted_edges()]
    else:
        lines += [f"{a} <-> {b}" for a, b in g.sorted_edges()]
    return "\n".join(lines) + "\n"


def _read(path: PathLike) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None


def _rows(text: str) -> list[list[str]]:
    out = []
    dialect = "excel-tab" if "\t" in text and "," not in text else "excel"
    for row in csv.reader(_io.StringIO(text), dialect=dialect):
        cells = [c.strip() for c in row]
        if not any(cells) or cells[0].startswith("#"):
            continue
        out.append(cells)
    return out


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def _floats(cells, where: str) -> list[float]:
    try:
        vals = [float(c) for c in cells]
    except ValueError:
        raise InputError(f"{where}: non-numeric entry in {cells}") from None
    if not all(np.isfinite(vals)):
        raise InputError(f"{where}: non-finite entry")
    return vals


def parse_covariance_csv(text: str) -> CovarianceMatrix:
    """Square CSV: a header row of labels, then ``p`` numeric rows.

    Numeric rows may carry their label in a leading column.
    """
    rows = _rows(text)
    if not rows:
        raise InputError("covariance file is empty")
    header = [c for c in rows[0] if c]
    p = len(header)
    body = rows[1:]
    if len(body) != p:
        raise InputError(f"covariance file: {p} labels but {len(body)} rows")
    mat = []
    for k, row in enumerate(body, start=2):
        if len(row) == p + 1 and not _is_number(row[0]):
            if row[0] != header[k - 2]:
                raise InputError(f"covariance file row {k}: label {row[0]!r} != {header[k - 2]!r}")
            row = row[1:]
        if len(row) != p:
            raise InputError(f"covariance file row {k}: expected {p} entries, got {len(row)}")
        mat.append(_floats(row, f"covariance file row {k}"))
    return CovarianceMatrix(np.array(mat), header)


def parse_correlation_table(text: str) -> CovarianceMatrix:
    """Strict lower-triangular correlations followed by an ``SD`` row.

    Either a header row lists all labels (as in a printed table whose first
    column label is blank) or the first row is the first label alone::

        ,W,V,X,Y
        V,0.060
        X,-0.460,0.042
        Y,-0.071,-0.404,-0.334
        SD,5.72,92.00,7.86,2.07
    """
    rows = _rows(text)
    if not rows or rows[-1][0].upper() != "SD":
        raise InputError("correlation table must end with an 'SD' row")
    sds = _floats([c for c in rows[-1][1:] if c], "SD row")
    p = len(sds)
    body = [[c for c in r if c] for r in rows[:-1]]
    header = None
    if body and len(body[0]) == p and not any(_is_number(c) for c in body[0]):
        header = body[0]
        body = body[1:]
    if len(body) == p and len(body[0]) == 1:
        labels = [body[0][0]] + [r[0] for r in body[1:]]
        body = body[1:]
    elif len(body) == p - 1 and header is not None:
        labels = [header[0]] + [r[0] for r in body]
    else:
        raise InputError(f"correlation table: expected {p - 1} correlation rows for {p} SDs")
    if header is not None and header != labels:
        raise InputError(f"correlation table: row labels {labels} do not match header {header}")
    corr = []
    for k, r in enumerate(body, start=1):
        if len(r) != k + 1:
            raise InputError(f"correlation table row {r[0]!r}: expected {k} correlations, got {len(r) - 1}")
        corr.append(_floats(r[1:], f"correlation table row {r[0]!r}"))
    return from_correlation_table(corr, sds, labels)


def parse_data_csv(text: str, transpose: bool = False) -> tuple[np.ndarray, list[str]]:
    """Data matrix as ``(p x n array, labels)``.

    Default layout: one row per variable, optionally led by its label.
    With ``transpose``: one row per subject, optionally under a header row
    of labels.
    """
    rows = _rows(text)
    if not rows:
        raise InputError("data file is empty")
    if transpose:
        labels = None
        if not all(_is_number(c) for c in rows[0]):
            labels, rows = rows[0], rows[1:]
        y = np.array([_floats(r, f"data row {k}") for k, r in enumerate(rows, 1)]).T
    else:
        labels = []
        vals = []
        for k, r in enumerate(rows, 1):
            if not _is_number(r[0]):
                labels.append(r[0])
                r = r[1:]
            vals.append(_floats(r, f"data row {k}"))
        if labels and len(labels) != len(vals):
            raise InputError("data file: either every row or no row must carry a label")
        if len({len(v) for v in vals}) != 1:
            raise InputError("data file: rows have different numbers of subjects")
        y = np.array(vals)
        labels = labels or None
    if labels is None:
        labels = [str(k + 1) for k in range(y.shape[0])]
    return y, list(labels)


def read_covariance(path: PathLike) -> CovarianceMatrix:
    return parse_covariance_csv(_read(path))


def read_correlation_table(path: PathLike) -> CovarianceMatrix:
    return parse_correlation_table(_read(path))


def read_data_summary(path: PathLike, centered: bool = False, transpose: bool = False) -> SampleSummary:
    y, labels = parse_data_csv(_read(path), transpose)
    return empirical_covariance(y, centered=centered, labels=labels)
