"""Convex polytopes in vertex and half-space form."""
from functools import cached_property
from math import gamma, pi

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from ..errors import DegenerateBody
from ..kernels import hull2d

SCHEMA = "ma-lab/1"


def unit_ball_volume(n):
    return pi ** (n / 2) / gamma(n / 2 + 1)


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


class ConvexBody:
    """Full-dimensional convex polytope.

    Built from any point cloud; only the extreme points are kept.  In 2-D
    the vertices are stored counter-clockwise starting from the
    lexicographically smallest one.  Instances are immutable.

    Parameters
    ----------
    points : array_like, shape (m, n)
        Point cloud whose convex hull is the body.
    tol : float
        Collinearity/coplanarity tolerance relative to the bounding box.
    """

    def __init__(self, points, tol=1e-12):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] not in (2, 3):
            raise DegenerateBody("points must be an (m, 2) or (m, 3) array")
        if len(pts) <= pts.shape[1]:
            raise DegenerateBody("not enough points for a full-dimensional body")
        n = pts.shape[1]
        if n == 2:
            idx = hull2d(pts, tol)
            verts = pts[idx]
            if len(verts) < 3:
                raise DegenerateBody("points are collinear")
            self._hull = None
        else:
            try:
                hull = ConvexHull(pts)
            except QhullError as exc:
                raise DegenerateBody(str(exc)) from None
            verts = pts[np.sort(hull.vertices)]
            self._hull = hull
        self.dim = n
        self.vertices = _frozen(verts)
        span = np.ptp(self.vertices, axis=0).max()
        if self.volume <= (tol * span) ** n:
            raise DegenerateBody("body has empty interior")

    # -- constructors ----------------------------------------------------
    @classmethod
    def box(cls, lo, hi):
        lo, hi = np.asarray(lo, float), np.asarray(hi, float)
        n = len(lo)
        corners = np.array(np.meshgrid(*[[0, 1]] * n, indexing="ij"))
        corners = corners.reshape(n, -1).T
        return cls(lo + corners * (hi - lo))

    @classmethod
    def ellipse(cls, axes, center=(0.0, 0.0), h=None, segments=None):
        """Polygon inscribed in the ellipse with semi-axes ``axes``.

        The number of vertices is ``segments`` or, given a spacing ``h``,
        the smallest count keeping consecutive vertices at most ``h`` apart.
        """
        a, b = map(float, axes)
        if segments is None:
            if h is None:
                segments = 256
            else:
                # Ramanujan's perimeter approximation
                hh = ((a - b) / (a + b)) ** 2
                per = pi * (a + b) * (1 + 3 * hh / (10 + np.sqrt(4 - 3 * hh)))
                segments = max(16, int(np.ceil(per / h)))
        th = 2 * pi * np.arange(segments) / segments
        pts = np.c_[a * np.cos(th), b * np.sin(th)] + np.asarray(center, float)
        return cls(pts)

    @classmethod
    def disc(cls, radius=1.0, center=(0.0, 0.0), h=None, segments=None):
        return cls.ellipse((radius, radius), center=center, h=h,
                           segments=segments)

    # -- derived geometry -------------------------------------------------
    @cached_property
    def facets(self):
        """(A, b) with unit outward normals: body = {y : A y <= b}."""
        if self.dim == 2:
            v = self.vertices
            e = np.roll(v, -1, axis=0) - v
            normal = np.c_[e[:, 1], -e[:, 0]]
            normal /= np.linalg.norm(normal, axis=1)[:, None]
            b = np.einsum("ij,ij->i", normal, v)
        else:
            eq = self._hull.equations
            normal = eq[:, :-1]
            b = -eq[:, -1]
        return _frozen(normal), _frozen(b)

    @cached_property
    def volume(self):
        if self.dim == 2:
            x, y = self.vertices.T
            return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
        return float(self._hull.volume)

    @cached_property
    def centroid(self):
        if self.dim == 2:
            x, y = self.vertices.T
            xn, yn = np.roll(x, -1), np.roll(y, -1)
            cr = x * yn - xn * y
            a = 0.5 * cr.sum()
            return _frozen([((x + xn) * cr).sum() / (6 * a),
                            ((y + yn) * cr).sum() / (6 * a)])
        return _frozen(self.vertices.mean(axis=0))

    @cached_property
    def diameter(self):
        v = self.vertices
        d = v[:, None, :] - v[None, :, :]
        return float(np.sqrt((d ** 2).sum(-1)).max())

    def bbox(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    # -- queries ----------------------------------------------------------
    def slack(self, points):
        """b - A y per facet (rows: points).  Negative means outside."""
        A, b = self.facets
        return b - np.atleast_2d(points) @ A.T

    def contains(self, points, tol=1e-9):
        """Membership, tolerance relative to the body's diameter."""
        s = self.slack(points)
        return np.all(s >= -tol * self.diameter, axis=1)

    def distance_to_boundary(self, points):
        """Signed distance to the boundary (positive inside)."""
        return self.slack(points).min(axis=1)

    def gauge(self, points, center):
        """Minkowski functional of ``body - center`` at ``points - center``.

        ``gauge <= 1`` iff the point lies in the body.  ``center`` must be
        interior.
        """
        A, b = self.facets
        center = np.asarray(center, float)
        room = b - A @ center
        d = np.atleast_2d(points) - center
        return np.max(d @ A.T / room, axis=1).clip(min=0.0)

    def dilate(self, tau, center):
        """Homothety with ratio ``tau`` about ``center``."""
        center = np.asarray(center, float)
        return ConvexBody(center + tau * (self.vertices - center))

    def transform(self, T):
        return ConvexBody(T(self.vertices))

    def inradius_at(self, x):
        return float(self.distance_to_boundary(np.asarray(x, float)[None])[0])

    def circumradius_at(self, x):
        return float(np.linalg.norm(self.vertices - np.asarray(x, float),
                                    axis=1).max())

    def __repr__(self):
        return (f"ConvexBody(dim={self.dim}, nvertices={len(self.vertices)}, "
                f"volume={self.volume:.6g})")

    # -- serialisation ------------------------------------------------------
    def to_json(self):
        return {"schema": SCHEMA, "dim": self.dim,
                "vertices": self.vertices.tolist()}

    @classmethod
    def from_json(cls, doc):
        body = cls(doc["vertices"])
        if body.dim != doc.get("dim", body.dim):
            raise DegenerateBody("dim does not match vertices")
        return body
