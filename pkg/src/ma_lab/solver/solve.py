"""Discrete Alexandrov solutions by damped Newton on subdifferential masses.

Unknowns are the values at interior nodes; boundary nodes are pinned to 0.
The mass of node i is the area of the subdifferential cell of the lower
convex hull of the graph at x_i.  Raising a neighbour value u_j enlarges
cell i through the dual edge shared by the two triangles on the edge ij,
which gives the Jacobian

    dA_i/du_j = L_ij / |x_i - x_j|,     dA_i/du_i = -sum_j L_ij / |x_i - x_j|

with L_ij the distance between the slopes of the two triangles.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve
from scipy.spatial import cKDTree

from ..convex.envelope import lower_hull
from ..convex.plfunc import PLConvexFunction, edge_lengths, slope_cells
from ..errors import NoConvergence
from ..kernels import clip_cells

log = logging.getLogger(__name__)

STALL_STEPS = 50
MAX_HALVINGS = 30


@dataclass
class MASolution:
    u: PLConvexFunction
    residual: float
    iterations: int
    method: str = "newton"
    mu: np.ndarray = None
    problem: object = None
    disc: object = None
    history: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_json(self):
        doc = self.u.to_json()
        doc["residual"] = self.residual
        doc["iterations"] = self.iterations
        doc["method"] = self.method
        if self.problem is not None:
            doc["problem"] = self.problem.to_json()
        if self.mu is not None:
            doc["mu"] = np.asarray(self.mu).tolist()
        return doc

    @classmethod
    def from_json(cls, doc):
        from .problem import MAProblem
        u = PLConvexFunction.from_json(doc)
        prob = MAProblem.from_json(doc["problem"]) if "problem" in doc else None
        mu = np.asarray(doc["mu"]) if "mu" in doc else None
        return cls(u, doc.get("residual", np.nan), doc.get("iterations", 0),
                   doc.get("method", "newton"), mu, prob)


class _State:
    """Hull, masses and residual of one trial vector of interior values."""

    def __init__(self, nodes, interior, values, mu):
        self.values = values
        hull = lower_hull(nodes, values)
        self.hull = hull
        is_vert = np.zeros(len(nodes), bool)
        is_vert[hull.vertices] = True
        self.ok = bool(is_vert[interior].all())
        if not self.ok:
            return
        areas, _, ntri = slope_cells(nodes, hull.simplices, hull.slopes, interior)
        self.areas = areas
        self.ok = bool(np.all(areas > 0) and np.all(ntri >= 3))
        self.F = areas - mu
        self.norm = float(np.linalg.norm(self.F))
        self.rel = float(np.max(np.abs(self.F) / mu))


def _jacobian(nodes, interior, state):
    N = len(nodes)
    i, j, L = edge_lengths(state.hull.simplices, state.hull.slopes)
    w = L / np.linalg.norm(nodes[i] - nodes[j], axis=1)
    pos = np.full(N, -1)
    pos[interior] = np.arange(len(interior))
    pi, pj = pos[i], pos[j]
    m = len(interior)
    diag = np.zeros(m)
    np.add.at(diag, pi[pi >= 0], -w[pi >= 0])
    np.add.at(diag, pj[pj >= 0], -w[pj >= 0])
    both = (pi >= 0) & (pj >= 0)
    rows = np.r_[pi[both], pj[both], np.arange(m)]
    cols = np.r_[pj[both], pi[both], np.arange(m)]
    vals = np.r_[w[both], w[both], diag]
    return sp.csr_matrix((vals, (rows, cols)), shape=(m, m))


def initial_guess(nodes, boundary, mu, centre=None, rounds=4):
    """Paraboloid c(|x - centre|^2 - R^2), non-positive on the boundary nodes,
    with c rescaled until the total cell area matches sum(mu)."""
    interior = np.flatnonzero(~boundary)
    centre = nodes[interior].mean(axis=0) if centre is None else centre
    r2 = np.sum((nodes - centre) ** 2, axis=1)
    R2 = r2[boundary].max()
    c = 1.0
    for _ in range(rounds):
        vals = np.zeros(len(nodes))
        vals[interior] = c * (r2[interior] - R2)
        st = _State(nodes, interior, vals, mu)
        if not st.ok:
            break
        c *= np.sqrt(mu.sum() / st.areas.sum())
    vals = np.zeros(len(nodes))
    vals[interior] = c * (r2[interior] - R2)
    return vals


def newton(nodes, boundary, mu, values=None, tol=1e-6, max_iter=200,
           history=None):
    """Damped Newton iteration.  Returns ``(values, residual, iterations,
    converged)``."""
    interior = np.flatnonzero(~boundary)
    if values is None:
        values = initial_guess(nodes, boundary, mu)
    st = _State(nodes, interior, values, mu)
    if not st.ok:
        raise NoConvergence(0, np.inf)
    best, stall = st.rel, 0
    it = 0
    for it in range(1, max_iter + 1):
        if st.rel <= tol:
            return st.values, st.rel, it - 1, True
        J = _jacobian(nodes, interior, st)
        step = spsolve(J.tocsc(), -st.F)
        a, trial = 1.0, None
        for _ in range(MAX_HALVINGS):
            vals = st.values.copy()
            vals[interior] += a * step
            cand = _State(nodes, interior, vals, mu)
            if cand.ok and cand.norm <= (1 - 0.5 * a) * st.norm:
                trial = cand
                break
            a *= 0.5
        if history is not None:
            history.append({"iteration": it, "residual": st.rel, "step": a
                            if trial is not None else 0.0})
        if trial is None:
            log.info("newton line search failed at iteration %d", it)
            return st.values, st.rel, it, False
        st = trial
        if st.rel < best * (1 - 1e-3):
            best, stall = st.rel, 0
        else:
            stall += 1
            if stall >= STALL_STEPS:
                return st.values, st.rel, it, False
    return st.values, st.rel, it, st.rel <= tol


def _local_neighbours(nodes, centers, radius):
    tree = cKDTree(nodes)
    lists = tree.query_ball_point(nodes[centers], radius)
    ptr = np.r_[0, np.cumsum([len(l) for l in lists])]
    idx = np.concatenate([np.asarray(l, dtype=np.int64) for l in lists])
    return ptr, idx


def oliker_prussner(nodes, boundary, mu, values, h, tol=1e-6, max_sweeps=500,
                    radius=3.0):
    """Sequential lifting: sweep over the nodes moving u_i, others fixed,
    until the cell of x_i carries mass mu_i (cell area is monotone in u_i).
    Cells are clipped against lattice neighbours within ``radius * h``."""
    interior = np.flatnonzero(~boundary)
    ptr, idx = _local_neighbours(nodes, interior, radius * h)
    box = 4.0 * (np.abs(values).max() + 1.0) / h
    vals = values.copy()
    rel = np.inf

    def area(c, i, v):
        vals[i] = v
        a, _ = clip_cells(nodes, vals, interior[c:c + 1], ptr[c:c + 2] - ptr[c],
                          idx[ptr[c]:ptr[c + 1]], box)
        return a[0]

    for sweep in range(max_sweeps):
        areas, _ = clip_cells(nodes, vals, interior, ptr, idx, box)
        rel = np.max(np.abs(areas - mu) / mu)
        if rel <= tol:
            return vals, rel, sweep, True
        for c, i in enumerate(interior):
            u0 = vals[i]
            if area(c, i, u0) >= mu[c]:
                lo, hi, d = u0, u0 + h * h, h * h
                while area(c, i, hi) >= mu[c]:
                    lo, hi, d = hi, hi + 2 * d, 2 * d
            else:
                lo, hi, d = u0 - h * h, u0, h * h
                while area(c, i, lo) < mu[c]:
                    hi, lo, d = lo, lo - 2 * d, 2 * d
            # area(lo) >= mu > area(hi)
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if area(c, i, mid) >= mu[c]:
                    lo = mid
                else:
                    hi = mid
                if hi - lo <= 1e-15 * (1 + abs(mid)):
                    break
            vals[i] = lo
    return vals, rel, max_sweeps, False


def solve(problem, grid=64, tol=1e-6, max_iter=200, fallback=True):
    """Discrete Alexandrov solution of ``problem`` on a lattice of spacing h.

    Raises
    ------
    NoConvergence
        When damped Newton stalls (and the sequential lifting fallback
        does not reach ``tol``).
    """
    disc = problem.discretize(grid)
    nodes, boundary, mu = disc.nodes, disc.boundary, disc.mu
    history = []
    vals, rel, it, ok = newton(nodes, boundary, mu, tol=tol, max_iter=max_iter,
                               history=history)
    method = "newton"
    if not ok and fallback:
        log.warning("newton stalled at residual %.3e, switching to sequential "
                    "lifting", rel)
        vals, rel, sweeps, ok = oliker_prussner(nodes, boundary, mu, vals, disc.h,
                                                tol=tol)
        it += sweeps
        method = "oliker-prussner"
        if ok:
            st = _State(nodes, disc.interior, vals, mu)
            ok = st.ok and st.rel <= tol
            rel = st.rel if st.ok else np.inf
    if not ok:
        raise NoConvergence(it, rel)
    u = PLConvexFunction(nodes, vals, boundary, disc.lattice, disc.domain)
    return MASolution(u, rel, it, method, mu, problem, disc, history)
