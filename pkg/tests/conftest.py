"""Shared solutions.  Solving is cheap at 64^2 but the lab stages are not,
so everything built here is session scoped."""
import sys

import numpy as np
import pytest

from ma_lab.lab.pipeline import rough_problem, run_instance
from ma_lab.lab.samples import normalized, sample_sections, unit_regions
from ma_lab.sections.atlas import safe_height
from ma_lab.solver.catalog import anisotropic_quadratic, quadratic_disc
from ma_lab.solver.solve import solve


@pytest.fixture(scope="session")
def quad64():
    return quadratic_disc(64)


@pytest.fixture(scope="session")
def aniso128():
    return anisotropic_quadratic(4.0, 1.0, 128)


@pytest.fixture(scope="session")
def rough64():
    return solve(rough_problem(1), 64)


def _lab(sol, count=40):
    u = sol.u
    inner, outer = unit_regions(u.domain)
    rho = safe_height(u, inner, outer)
    samples = sample_sections(u, inner, rho, count, seed=0)
    Ns, _ = normalized(u, samples)
    return {"inner": inner, "outer": outer, "rho": rho, "samples": samples,
            "normalized": Ns}


@pytest.fixture(scope="session")
def quad_lab(quad64):
    return _lab(quad64)


@pytest.fixture(scope="session")
def rough_lab(rough64):
    return _lab(rough64)


@pytest.fixture(scope="session")
def quad_pipeline(quad64):
    return run_instance(solution=quad64, instance_id="quadratic_disc-64")


@pytest.fixture(scope="session")
def rough_pipeline(rough64):
    return run_instance(solution=rough64, seed=1, instance_id="seed1-64")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
