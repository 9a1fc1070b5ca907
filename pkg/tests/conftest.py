from __future__ import annotations

import pytest

from normcrit.functionals import ProblemParams, compute_constants
from normcrit.local_minimizer import compute_thresholds, find_local_min
from normcrit.radial_grid import make_grid


def canonical_params(**changes) -> ProblemParams:
    base = ProblemParams(dim=3, p=3.0, q=3.0, alpha=3.0, beta=3.0, mu1=1.0, mu2=1.0, nu=0.01, a=1.0, b=1.0)
    return base.replace(**changes) if changes else base


def canonical_grid():
    # The coupled minimizer has frequency ~6e-5, so its tail needs a wide domain.
    return make_grid(3, 5000.0, 4096, "graded", 1e-4)


@pytest.fixture(scope="session")
def params():
    return canonical_params()


@pytest.fixture(scope="session")
def grid():
    return canonical_grid()


@pytest.fixture(scope="session")
def constants(params):
    return compute_constants(params)


@pytest.fixture(scope="session")
def thresholds(params, constants):
    return compute_thresholds(params, constants)


@pytest.fixture(scope="session")
def local_min(params, grid, constants, thresholds):
    return find_local_min(params, grid, thresholds=thresholds, constants=constants)


# Acceptance criteria record their verdicts here; the terminal summary prints
# one line per criterion whether or not output capture is on.
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(ok), detail)
    print(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
