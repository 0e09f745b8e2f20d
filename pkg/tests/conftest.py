import time

import numpy as np
import pytest
from click.testing import CliRunner

from heatbasis.annihilate import PerturbationPlan, build_annihilating_basis
from heatbasis.basis import BasisState
from heatbasis.cli import main
from heatbasis.grid import DyadicGrid, Weight

ACCEPTANCE_LINES = []


def record(criterion, ok, detail):
    ACCEPTANCE_LINES.append(f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}")
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_built():
    """A cheap annihilating basis (K = 8, two moments) for unit tests."""
    initial = BasisState.haar(DyadicGrid(8), 1.0, Weight.gauss_exp())
    return build_annihilating_basis(initial, PerturbationPlan(0.5, 2), constant_samples=4)


@pytest.fixture(scope="session")
def small_built_l2():
    initial = BasisState.haar(DyadicGrid(8), 2.0, Weight.gauss_exp())
    return build_annihilating_basis(initial, PerturbationPlan(0.5, 2), constant_samples=4)


def run_cli(*args):
    result = CliRunner().invoke(main, [str(a) for a in args], catch_exceptions=False)
    return result


@pytest.fixture(scope="session")
def cli_builds(tmp_path_factory):
    """Full-size builds through the command line, p = 1 twice and p = 2 once."""
    root = tmp_path_factory.mktemp("builds")
    out = {}
    for name, p in (("p1", 1), ("p1_again", 1), ("p2", 2)):
        d = root / name
        start = time.perf_counter()
        res = run_cli("basis-build", "--p", p, "--level", 12, "--m-max", 4, "--seed", 0, "--out", d)
        out[name] = (d, res, time.perf_counter() - start)
    return out
