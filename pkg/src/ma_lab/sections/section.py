"""Sections S(x, p, t) = {y : u(y) <= u(x) + p.(y - x) + t}.

For a piecewise-linear u the sublevel set is a convex polygon whose
vertices are nodes or points where a triangulation edge crosses the level
t, so sections are computed exactly.
"""
from functools import cached_property

import numpy as np

from ..convex.body import ConvexBody
from ..errors import DegenerateBody, EscapesDomain
from ..kernels import hull2d


def as_function(u):
    """Accept an MASolution or a PLConvexFunction."""
    return getattr(u, "u", u)


def snap(u, x):
    """Node id for ``x`` (an int node id or a point, snapped to the nearest
    interior node)."""
    u = as_function(u)
    if np.ndim(x) == 0:
        return int(x)
    d = np.sum((u.nodes[u.interior] - np.asarray(x, float)) ** 2, axis=1)
    return int(u.interior[np.argmin(d)])


def height_field(u, i, p=None):
    """g_j = u_j - u(x) - p.(x_j - x) at every node."""
    u = as_function(u)
    p = u.gradients[i] if p is None else np.asarray(p, float)
    return u.values - u.values[i] - (u.nodes - u.nodes[i]) @ p


def sublevel_polygon(u, g, t):
    """Vertices of {g <= t} for the PL interpolant of the nodal values g,
    and the values of u there (exact: vertices are nodes or points on
    triangulation edges)."""
    e = u.edges
    ga, gb = g[e[:, 0]], g[e[:, 1]]
    cross = (ga - t) * (gb - t) < 0
    a, b = e[cross, 0], e[cross, 1]
    s = (t - g[a]) / (g[b] - g[a])
    pts = u.nodes[a] + s[:, None] * (u.nodes[b] - u.nodes[a])
    vals = u.values[a] + s * (u.values[b] - u.values[a])
    inside = g <= t
    pts = np.vstack([u.nodes[inside], pts])
    vals = np.r_[u.values[inside], vals]
    if len(pts) >= 3:
        k = hull2d(pts)
        pts, vals = pts[k], vals[k]
    return pts, vals


class Section:
    """Section of a PL convex function.

    Attributes
    ----------
    i : int
        Node id of the center.
    x, p : arrays
        Center and slope.
    t : float
        Height.
    vertices : (m, n) array
        Polygon of the exact sublevel set (fewer than 3 points when the
        section degenerates).
    nodes : int array
        Nodes y with g(y) <= t.
    """

    def __init__(self, u, i, t, p=None, g=None):
        self.u = as_function(u)
        self.i = int(i)
        self.x = self.u.nodes[self.i]
        self.p = self.u.gradients[self.i] if p is None else np.asarray(p, float)
        self.t = float(t)
        self.g = height_field(self.u, self.i, self.p) if g is None else g
        self.vertices, self.vertex_values = sublevel_polygon(self.u, self.g,
                                                             self.t)
        self.nodes = np.flatnonzero(self.g <= self.t)

    @cached_property
    def region(self):
        """ConvexBody, or None when the section is lower dimensional."""
        if len(self.vertices) < 3:
            return None
        try:
            return ConvexBody(self.vertices)
        except DegenerateBody:
            return None

    @property
    def volume(self):
        return 0.0 if self.region is None else self.region.volume

    def level(self, points):
        """u(y) - u(x) - p.(y - x) at arbitrary points (PL evaluation)."""
        points = np.atleast_2d(points)
        return (self.u.evaluate_local(points) - self.u.values[self.i]
                - (points - self.x) @ self.p)

    def level_of(self, other):
        """Level of this section's supporting plane at the vertices of
        another section of the same function (no hull evaluation)."""
        return (other.vertex_values - self.u.values[self.i]
                - (other.vertices - self.x) @ self.p)

    def contains(self, points, tol=1e-9):
        scale = tol * max(self.t, 1e-300)
        return self.level(points) <= self.t + scale

    def __repr__(self):
        return (f"Section(i={self.i}, t={self.t:.4g}, nodes={len(self.nodes)}, "
                f"volume={self.volume:.4g})")


def section(u, x, t, p=None, check=True):
    """S(x, p, t) for an interior node x (p defaults to the gradient field).

    Raises
    ------
    EscapesDomain
        If some boundary node lies in the sublevel set, i.e. the section is
        not compactly contained in the domain.
    """
    u = as_function(u)
    i = snap(u, x)
    if u.boundary[i]:
        raise ValueError("sections are centred at interior nodes")
    S = Section(u, i, t, p)
    if check and np.any(u.boundary[S.nodes]):
        raise EscapesDomain(f"section at node {i} with t={t:.4g} reaches the "
                            "boundary")
    return S


def dilate(S, tau):
    """tau S(x,p,t) = {y : x + (y - x)/tau in S}: homothety about x."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    if S.region is None:
        return None
    return S.region.dilate(tau, S.x)
