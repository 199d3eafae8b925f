"""Closed-form solutions used as oracles.

All are quadratics u = (x^T D x - c0)/2 on their zero sublevel set, with
constant density f = det D.
"""
import numpy as np

from ..convex.plfunc import PLConvexFunction
from ..errors import UnknownName
from .problem import Density, MAProblem
from .solve import MASolution, _State


def _quadratic(D, c0, grid, name):
    D = np.asarray(D, dtype=float)
    axes = np.sqrt(c0 / np.diag(D))
    n = len(D)
    f = float(np.linalg.det(D))
    prob = MAProblem({"kind": "ellipse", "axes": axes.tolist()},
                     Density("const", f, f))
    disc = prob.discretize(grid)
    x = disc.nodes
    vals = 0.5 * (np.einsum("ij,jk,ik->i", x, D, x) - c0)
    vals[disc.boundary] = 0.0
    u = PLConvexFunction(x, vals, disc.boundary, disc.lattice, disc.domain)
    st = _State(disc.nodes, disc.interior, vals, disc.mu)
    res = st.rel if st.ok else np.inf
    meta = {"name": name, "hessian": D.tolist(), "f": f, "c0": c0,
            "exact": lambda y: 0.5 * (np.einsum("ij,jk,ik->i", np.atleast_2d(y), D,
                                                np.atleast_2d(y)) - c0),
            "dim": n}
    return MASolution(u, res, 0, "exact", disc.mu, prob, disc, meta=meta)


def quadratic_disc(grid=64):
    """u = (|x|^2 - 1)/2 on the unit disc, f = 1."""
    return _quadratic(np.eye(2), 1.0, grid, "quadratic_disc")


def scaled_quadratic(c=2.0, grid=64):
    """u = c(|x|^2 - 1)/2 on the unit disc, f = c^2."""
    sol = _quadratic(c * np.eye(2), c, grid, "scaled_quadratic")
    return sol


def anisotropic_quadratic(a=4.0, c0=1.0, grid=128):
    """u = (a x1^2 + x2^2/a - c0)/2 on its zero sublevel set, f = 1."""
    return _quadratic(np.diag([a, 1.0 / a]), c0, grid, "anisotropic_quadratic")


CATALOG = {
    "quadratic_disc": quadratic_disc,
    "scaled_quadratic": scaled_quadratic,
    "anisotropic_quadratic": anisotropic_quadratic,
}


def analytic_catalog(name, **params):
    """Exact nodal sampling of a closed-form solution by name."""
    try:
        fn = CATALOG[name]
    except KeyError:
        raise UnknownName(f"unknown catalog entry {name!r}") from None
    return fn(**params)


__all__ = ["analytic_catalog", "quadratic_disc", "scaled_quadratic",
           "anisotropic_quadratic", "CATALOG"]
