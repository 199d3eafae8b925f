import json

import numpy as np
import pytest

from ma_lab.errors import (InfeasibleMass, NoConvergence, UnknownName,
                           ValidationError)
from ma_lab.lab.pipeline import rough_problem
from ma_lab.solver.catalog import analytic_catalog, scaled_quadratic
from ma_lab.solver.measure import ma_measure
from ma_lab.solver.problem import Density, MAProblem, grid_spacing
from ma_lab.solver.solve import MASolution, solve


def disc_problem():
    return MAProblem({"kind": "disc", "radius": 1.0}, Density("const", 1, 1))


def sup_error(sol):
    u = sol.u
    I = u.interior
    return float(np.abs(u.values[I] - 0.5 * (np.sum(u.nodes[I] ** 2, 1) - 1)).max())


def test_disc_oracle_converges():
    e64 = sup_error(solve(disc_problem(), 64))
    e128 = sup_error(solve(disc_problem(), 128))
    # frozen: 4.23e-4 and 1.10e-4
    assert e64 <= 0.02 and e128 <= 0.02
    assert e64 / e128 >= 1.5
    assert e64 == pytest.approx(4.23e-4, rel=0.05)


def test_mass_balance():
    sol = solve(disc_problem(), 48)
    u = sol.u
    assert sol.residual <= 1e-6
    assert ma_measure(u) == pytest.approx(sol.mu.sum(), rel=1e-5)


def test_rough_solution_is_convex_and_negative():
    sol = solve(rough_problem(3), 48)
    u = sol.u
    assert u.is_convex(1e-8)
    assert np.all(u.values[u.interior] < 0)
    assert np.all(u.values[u.boundary] == 0)


def test_rough_density_same_on_every_grid():
    f = Density("random", 0.5, 2.0, seed=7)
    x = np.random.default_rng(0).uniform(-1, 1, size=(500, 2))
    assert np.array_equal(f(x), Density("random", 0.5, 2.0, seed=7)(x))
    assert set(np.unique(f(x))) <= {0.5, 2.0}


def test_solution_json_roundtrip(tmp_path):
    sol = solve(rough_problem(2), 32)
    p = tmp_path / "s.json"
    p.write_text(json.dumps(sol.to_json()))
    back = MASolution.from_json(json.loads(p.read_text()))
    assert np.array_equal(back.u.values, sol.u.values)
    assert np.array_equal(back.u.nodes, sol.u.nodes)
    assert back.problem.to_json() == sol.problem.to_json()


def test_catalog():
    sol = scaled_quadratic(2.0, 32)
    ok = sol.u.has_stencil
    assert np.allclose(sol.u.hessians[ok], 2 * np.eye(2), atol=1e-9)
    # away from the clipped boundary cells the sampled quadratic balances
    # |du(B)| = f |dual cells of B| exactly, f = det(2 I) = 4
    u = sol.u
    B = u.interior[np.linalg.norm(u.nodes[u.interior], axis=1) < 0.7]
    assert ma_measure(u, B) == pytest.approx(4 * B.size * u.lattice.h ** 2, rel=1e-9)
    with pytest.raises(UnknownName):
        analytic_catalog("nope")


def test_validation_errors():
    with pytest.raises(ValidationError):
        Density("const", 2.0, 1.0)
    with pytest.raises(ValidationError):
        Density("const", 1.0, 2.0, value=3.0)
    with pytest.raises(UnknownName):
        Density("weird")
    with pytest.raises(ValidationError):
        grid_spacing(disc_problem().reference_domain, 0)
    with pytest.raises(UnknownName):
        MAProblem({"kind": "star"}, Density()).reference_domain
    assert issubclass(InfeasibleMass, ValidationError)


def test_no_convergence_reported():
    with pytest.raises(NoConvergence) as exc:
        solve(disc_problem(), 32, tol=1e-30, max_iter=2, fallback=False)
    assert exc.value.iterations >= 1
