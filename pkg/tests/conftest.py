from pathlib import Path

import numpy as np
import pytest

from covfit.gaussian import SampleSummary, from_correlation_table
from covfit.graph import BidirectedGraph, Dag

DATA = Path(__file__).resolve().parent.parent / "data"

EXAMPLE_LABELS = ["W", "V", "X", "Y"]
EXAMPLE_CORR = [[0.060], [-0.460, 0.042], [-0.071, -0.404, -0.334]]
EXAMPLE_SDS = [5.72, 92.00, 7.86, 2.07]
EXAMPLE_N = 39

ACCEPTANCE_LINES = []


@pytest.fixture
def four_path():
    return BidirectedGraph(["1", "2", "3", "4"], [("1", "3"), ("3", "4"), ("2", "4")])


@pytest.fixture
def four_path_dag():
    return Dag(
        ["1", "2", "3", "4", "u13", "u34", "u24"],
        [("u13", "1"), ("u13", "3"), ("u34", "3"), ("u34", "4"), ("u24", "2"), ("u24", "4")],
        latent=["u13", "u34", "u24"],
    )


@pytest.fixture
def example_graph():
    return BidirectedGraph(EXAMPLE_LABELS, [("W", "X"), ("V", "Y"), ("X", "Y")])


@pytest.fixture
def example_summary():
    cov = from_correlation_table(EXAMPLE_CORR, EXAMPLE_SDS, EXAMPLE_LABELS)
    return SampleSummary(cov, EXAMPLE_N, centered=False)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def data_dir():
    return DATA


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
