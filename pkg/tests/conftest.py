import math
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gravstrings.model import beta_topological, make_params  # noqa: E402

CRITERIA: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    CRITERIA[number] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        passed, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def topo_params():
    a = 1.0
    kappa = 2.0
    lam = beta_topological(1, a) * kappa**2 / 4.0
    return make_params(1, a / (4 * math.pi), kappa, lam, "topological")


@pytest.fixture(scope="session")
def topo_solution(topo_params):
    from gravstrings.topological import integrate_topological

    return integrate_topological(topo_params, -30.0, 20.0, 1e-12)


@pytest.fixture(scope="session")
def nontopo_params():
    return make_params(1, 1 / (8 * math.pi), 1.0, 1.0, "nontopological")


@pytest.fixture(scope="session")
def nontopo_solution(nontopo_params):
    from gravstrings.nontopological import solve_nontopological

    return solve_nontopological(1.0, nontopo_params)


@pytest.fixture(scope="session")
def sphere_params():
    return make_params(4, 1 / (8 * math.pi), 1.0, 1.0, "sphere")


@pytest.fixture(scope="session")
def sphere_solution_l3(sphere_params):
    from gravstrings.surface import solve_sphere

    return solve_sphere(sphere_params, level=3)
