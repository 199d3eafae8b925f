"""Piecewise-linear convex functions on lattice grids.

A :class:`PLConvexFunction` is determined by node positions and values; its
graph is the lower convex hull of the points (x_i, u_i).  Interior nodes
sit on a lattice ``origin + basis @ k`` (k integer), which is what the
stencil Hessian needs; boundary nodes may sit anywhere.
"""
from functools import cached_property

import numpy as np

from ..errors import BoundaryStencil, NonConvexInput
from ..kernels import pl_max
from .body import SCHEMA, ConvexBody
from .envelope import lower_hull

STENCIL_RADIUS = 2


class Lattice:
    """Integer coordinates of grid nodes: ``node = origin + basis @ index``.

    Nodes off the lattice (boundary nodes) carry no index; ``ids`` maps a
    dense box of lattice indices to node numbers (-1 where absent).
    """

    def __init__(self, origin, basis, index, on_lattice):
        self.origin = np.asarray(origin, dtype=float)
        self.basis = np.asarray(basis, dtype=float)
        self.index = np.asarray(index, dtype=np.int64)
        self.on_lattice = np.asarray(on_lattice, dtype=bool)
        k = self.index[self.on_lattice]
        self.kmin = k.min(axis=0) - STENCIL_RADIUS
        shape = k.max(axis=0) - self.kmin + STENCIL_RADIUS + 1
        self.ids = np.full(tuple(shape), -1, dtype=np.int64)
        rows = np.flatnonzero(self.on_lattice)
        self.ids[tuple((k - self.kmin).T)] = rows

    @property
    def h(self):
        """Spacing of a square lattice (basis = h Id)."""
        return float(np.sqrt(abs(np.linalg.det(self.basis))))

    def mapped(self, A, b):
        """Lattice of the images ``A y + b``."""
        return Lattice(A @ self.origin + b, A @ self.basis, self.index,
                       self.on_lattice)

    def stencil_ids(self, rows, radius=STENCIL_RADIUS):
        """Node ids of the (2r+1)^n lattice stencil around each row.

        Missing stencil points are -1.
        """
        n = self.basis.shape[0]
        off = _offsets(n, radius)
        k = self.index[rows][:, None, :] + off[None] - self.kmin
        shape = np.array(self.ids.shape)
        ok = np.all((k >= 0) & (k < shape), axis=2)
        k = np.where(ok[..., None], k, 0)
        out = self.ids[tuple(np.moveaxis(k, 2, 0))]
        out[~ok] = -1
        out[~self.on_lattice[rows]] = -1
        return out

    def to_json(self):
        return {"origin": self.origin.tolist(), "basis": self.basis.tolist(),
                "index": self.index.tolist(),
                "on_lattice": self.on_lattice.astype(int).tolist()}

    @classmethod
    def from_json(cls, doc):
        return cls(doc["origin"], doc["basis"], doc["index"], doc["on_lattice"])


def _offsets(n, radius):
    r = np.arange(-radius, radius + 1)
    grids = np.meshgrid(*[r] * n, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _quad_design(disp):
    """Columns 1, d, and the n(n+1)/2 quadratic monomials (d_i d_j, halved
    on the diagonal) so that the fitted Hessian is read off directly."""
    m, n = disp.shape
    cols = [np.ones(m)] + [disp[:, i] for i in range(n)]
    for i in range(n):
        for j in range(i, n):
            f = 0.5 if i == j else 1.0
            cols.append(f * disp[:, i] * disp[:, j])
    return np.stack(cols, axis=1)


def stencil_pinv(basis, radius=STENCIL_RADIUS):
    """Least-squares operator mapping stencil values to quadratic coefficients."""
    disp = _offsets(len(basis), radius) @ np.asarray(basis).T
    return np.linalg.pinv(_quad_design(disp))


def _coeffs_to_hessian(c, n):
    H = np.empty((len(c), n, n))
    k = 1 + n
    for i in range(n):
        for j in range(i, n):
            H[:, i, j] = H[:, j, i] = c[:, k]
            k += 1
    return H


def fit_hessians(values, lattice, rows):
    """Quadratic least-squares Hessians at ``rows`` (NaN without full stencil).

    Returns ``(H_raw, H_psd, min_eig)``: the symmetric fitted matrices,
    their projection onto the PSD cone and the pre-projection smallest
    eigenvalue.
    """
    rows = np.asarray(rows, dtype=np.int64)
    n = lattice.basis.shape[0]
    ids = lattice.stencil_ids(rows)
    full = np.all(ids >= 0, axis=1)
    P = stencil_pinv(lattice.basis)
    raw = np.full((len(rows), n, n), np.nan)
    psd = np.full((len(rows), n, n), np.nan)
    mine = np.full(len(rows), np.nan)
    if full.any():
        V = np.asarray(values)[ids[full]]
        H = _coeffs_to_hessian(V @ P.T, n)
        H = 0.5 * (H + np.swapaxes(H, 1, 2))
        ev, Q = np.linalg.eigh(H)
        raw[full] = H
        mine[full] = ev[:, 0]
        psd[full] = np.einsum("mij,mj,mkj->mik", Q, ev.clip(min=0.0), Q)
    return raw, psd, mine


def slope_cells(nodes, simplices, slopes, centers):
    """Subdifferential polygons of a 2-D PL function at ``centers``.

    The cell at a vertex is the polygon whose vertices are the slopes of the
    incident triangles taken in angular order around the vertex.  Returns
    ``(areas, centroids, ntri)``; ``ntri`` counts incident triangles.
    """
    nodes = np.asarray(nodes, float)
    tri_c = nodes[simplices].mean(axis=1)
    vert = simplices.ravel()
    tri = np.repeat(np.arange(len(simplices)), simplices.shape[1])
    want = np.zeros(len(nodes), bool)
    want[centers] = True
    keep = want[vert]
    vert, tri = vert[keep], tri[keep]
    d = tri_c[tri] - nodes[vert]
    ang = np.arctan2(d[:, 1], d[:, 0])
    order = np.lexsort((ang, vert))
    vert, tri = vert[order], tri[order]
    if len(vert) == 0:
        z = np.zeros(len(centers))
        return z, np.full((len(centers), 2), np.nan), z.astype(int)
    start = np.r_[0, np.flatnonzero(np.diff(vert)) + 1]
    count = np.diff(np.r_[start, len(vert)])
    nxt = np.arange(len(vert)) + 1
    nxt[start + count - 1] = start
    p, q = slopes[tri], slopes[tri[nxt]]
    cr = p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1]
    a2 = np.add.reduceat(cr, start)
    cx = np.add.reduceat((p[:, 0] + q[:, 0]) * cr, start)
    cy = np.add.reduceat((p[:, 1] + q[:, 1]) * cr, start)
    mean = np.c_[np.add.reduceat(p[:, 0], start),
                 np.add.reduceat(p[:, 1], start)] / count[:, None]
    owner = vert[start]
    area = 0.5 * np.abs(a2)
    with np.errstate(invalid="ignore", divide="ignore"):
        cen = np.c_[cx, cy] / (3.0 * a2[:, None])
    flat = area <= 1e-14 * (1 + np.abs(mean).max(axis=1) ** 2)
    cen[flat] = mean[flat]
    pos = np.full(len(nodes), -1)
    pos[centers] = np.arange(len(centers))
    areas = np.zeros(len(centers))
    cents = np.full((len(centers), 2), np.nan)
    ntri = np.zeros(len(centers), dtype=int)
    areas[pos[owner]] = area
    cents[pos[owner]] = cen
    ntri[pos[owner]] = count
    return areas, cents, ntri


def edge_lengths(simplices, slopes):
    """Dual edge lengths: for every edge shared by two triangles, the
    distance between their slopes.  Returns ``(i, j, L)`` with i < j."""
    s = np.sort(simplices, axis=1)
    e = np.concatenate([s[:, [0, 1]], s[:, [0, 2]], s[:, [1, 2]]])
    t = np.tile(np.arange(len(s)), 3)
    order = np.lexsort((e[:, 1], e[:, 0]))
    e, t = e[order], t[order]
    same = np.all(e[1:] == e[:-1], axis=1)
    k = np.flatnonzero(same)
    L = np.linalg.norm(slopes[t[k]] - slopes[t[k + 1]], axis=1)
    return e[k, 0], e[k, 1], L


class PLConvexFunction:
    """Convex piecewise-linear function interpolating nodal values.

    Parameters
    ----------
    nodes : (N, n) array
    values : (N,) array
    boundary : (N,) bool array
        Boundary nodes (Dirichlet data); the remaining nodes are interior.
    lattice : Lattice, optional
        Lattice structure of the interior nodes, needed for Hessians.
    """

    def __init__(self, nodes, values, boundary, lattice=None, domain=None):
        self.nodes = _frozen(nodes)
        self.values = _frozen(values)
        self.boundary = np.array(boundary, dtype=bool)
        self.boundary.setflags(write=False)
        self.lattice = lattice
        self._domain = domain
        self.interior = np.flatnonzero(~self.boundary)

    @property
    def dim(self):
        return self.nodes.shape[1]

    @property
    def h(self):
        return self.lattice.h if self.lattice is not None else np.nan

    @cached_property
    def domain(self):
        if self._domain is not None:
            return self._domain
        return ConvexBody(self.nodes)

    @cached_property
    def hull(self):
        return lower_hull(self.nodes, self.values)

    def __call__(self, points):
        return self.hull(points)

    @cached_property
    def _tri_boxes(self):
        tri = self.nodes[self.hull.simplices]
        return tri.min(axis=1), tri.max(axis=1)

    def evaluate_local(self, points):
        """Same as ``self(points)`` but only over the triangles whose bounding
        box meets the bounding box of ``points`` (exact, and much cheaper for
        clustered queries)."""
        points = np.atleast_2d(points)
        lo, hi = self._tri_boxes
        plo, phi = points.min(axis=0), points.max(axis=0)
        sel = np.all((lo <= phi) & (hi >= plo), axis=1)
        if not sel.any():
            return self(points)
        return pl_max(points, self.hull.slopes[sel], self.hull.offsets[sel])

    @cached_property
    def edges(self):
        """Unique edges (i < j) of the graph triangulation."""
        s = np.sort(self.hull.simplices, axis=1)
        n = s.shape[1]
        e = np.concatenate([s[:, [a, b]] for a in range(n) for b in range(a + 1, n)])
        return np.unique(e, axis=0)

    @cached_property
    def neighbours(self):
        """CSR-style adjacency (ptr, idx) of the triangulation."""
        e = self.edges
        both = np.r_[e[:, 0], e[:, 1]]
        other = np.r_[e[:, 1], e[:, 0]]
        order = np.argsort(both, kind="stable")
        ptr = np.searchsorted(both[order], np.arange(len(self.nodes) + 1))
        return ptr, other[order]

    @cached_property
    def convexity_defect(self):
        """max_i (u_i - hull(x_i)) relative to the oscillation of u."""
        gap = self.values - self.hull(self.nodes)
        return float(gap.max() / max(np.ptp(self.values), 1e-300))

    def is_convex(self, tol=1e-8):
        return self.convexity_defect <= tol

    def check_convex(self, tol=1e-8):
        if not self.is_convex(tol):
            raise NonConvexInput(
                f"graph leaves its lower hull by {self.convexity_defect:.3g}")

    @cached_property
    def cells(self):
        """Areas and centroids of the subdifferential cells of interior nodes."""
        if self.dim != 2:
            raise NotImplementedError("subdifferential cells are 2-D only")
        h = self.hull
        return slope_cells(self.nodes, h.simplices, h.slopes, self.interior)

    @property
    def cell_areas(self):
        return self.cells[0]

    @cached_property
    def gradients(self):
        """Per-node slope: centroid of the subdifferential cell (NaN on the
        boundary)."""
        g = np.full(self.nodes.shape, np.nan)
        g[self.interior] = self.cells[1]
        g.setflags(write=False)
        return g

    @cached_property
    def _hess(self):
        if self.lattice is None:
            raise BoundaryStencil("function has no lattice structure")
        return fit_hessians(self.values, self.lattice, np.arange(len(self.nodes)))

    @property
    def hessians(self):
        """PSD-projected stencil Hessians, NaN where the stencil is incomplete."""
        return self._hess[1]

    @property
    def hessian_min_eig(self):
        """Smallest eigenvalue before projection (convexity diagnostic)."""
        return self._hess[2]

    @cached_property
    def hess_norm(self):
        H = self.hessians
        ok = np.all(np.isfinite(H), axis=(1, 2))
        out = np.full(len(H), np.nan)
        out[ok] = np.linalg.eigvalsh(H[ok])[:, -1]
        return out

    @cached_property
    def laplacian(self):
        return np.trace(self.hessians, axis1=1, axis2=2)

    @cached_property
    def has_stencil(self):
        return np.isfinite(self.hess_norm)

    def discrete_hessian(self, node):
        """Hessian at one node; raises BoundaryStencil without a full stencil."""
        H = self.hessians[node]
        if not np.all(np.isfinite(H)):
            raise BoundaryStencil(f"stencil of node {node} leaves the grid")
        return H.copy()

    def convexity_report(self, tol=1e-8):
        me = self.hessian_min_eig
        scale = np.nanmax(np.abs(self.hess_norm)) if self.has_stencil.any() else 1.0
        bad = np.flatnonzero(me < -tol * max(scale, 1.0))
        return {"hull_defect": self.convexity_defect,
                "negative_eig_nodes": bad.tolist(),
                "min_eig": float(np.nanmin(me)) if self.has_stencil.any() else np.nan}

    # -- serialisation -------------------------------------------------------
    def to_json(self):
        doc = self.domain.to_json()
        grid = {"h": self.h if self.lattice is not None else None,
                "nodes": self.nodes.tolist(),
                "values": self.values.tolist(),
                "boundary": self.boundary.astype(int).tolist()}
        if self.lattice is not None:
            grid["lattice"] = self.lattice.to_json()
        doc["schema"] = SCHEMA
        doc["grid"] = grid
        return doc

    @classmethod
    def from_json(cls, doc):
        g = doc["grid"]
        lat = Lattice.from_json(g["lattice"]) if "lattice" in g else None
        return cls(g["nodes"], g["values"], g["boundary"], lat,
                   ConvexBody.from_json(doc))


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a
