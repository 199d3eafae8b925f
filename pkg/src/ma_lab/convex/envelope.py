"""Lower convex hulls of function graphs and convex envelopes."""
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from ..kernels import pl_max


@dataclass(frozen=True)
class LowerHull:
    """Affine pieces of the lower convex hull of a graph.

    ``slopes[k] . y + offsets[k]`` is the k-th supporting plane and
    ``simplices[k]`` the indices of the graph points spanning it.
    """
    slopes: np.ndarray
    offsets: np.ndarray
    simplices: np.ndarray
    vertices: np.ndarray

    def __call__(self, points):
        return pl_max(np.atleast_2d(points), self.slopes, self.offsets)


def lower_hull(points, values, ztol=1e-9):
    """Lower convex hull of {(x_i, values_i)}.

    Coordinates are rescaled to unit size before calling qhull; an apex
    above the cloud keeps the lifted set full dimensional when the data
    are affine.  Facets whose unit normal has vertical component above
    ``-ztol`` (after rescaling) are vertical and dropped.
    """
    x = np.asarray(points, dtype=float)
    z = np.asarray(values, dtype=float)
    m, n = x.shape
    x0 = x.mean(axis=0)
    xs = max(np.ptp(x, axis=0).max(), 1e-300)
    z0 = z.min()
    zs = np.ptp(z)
    zs = zs if zs > 0 else 1.0
    lifted = np.c_[(x - x0) / xs, (z - z0) / zs]
    apex = np.r_[np.zeros(n), lifted[:, -1].max() + 1.0]
    cloud = np.vstack([lifted, apex])
    try:
        hull = ConvexHull(cloud, qhull_options="Qt")
    except QhullError:
        hull = ConvexHull(cloud, qhull_options="Qt QJ")
    eq = hull.equations
    low = eq[:, n] < -ztol
    simp = hull.simplices[low]
    eq = eq[low]
    # plane: a.xs + c zs + d = 0  ->  zs = -(a.xs + d)/c, then undo scaling
    a, c, d = eq[:, :n], eq[:, n], eq[:, n + 1]
    sl = -a / c[:, None]
    off = -d / c
    slopes = sl * (zs / xs)
    offsets = zs * off + z0 - slopes @ x0
    verts = np.unique(simp)
    return LowerHull(slopes, offsets, simp, verts[verts < m])


@dataclass(frozen=True)
class EnvelopeResult:
    """Convex envelope values at the nodes and the contact set."""
    values: np.ndarray
    contact: np.ndarray
    gap: np.ndarray
    hull: LowerHull
    tol: float

    @property
    def contact_fraction(self):
        return float(self.contact.mean())


def convex_envelope(points, w, boundary_points=None, boundary_value=0.0,
                    rtol=1e-6):
    """Largest convex minorant of ``w`` that is ``<= boundary_value`` on the
    boundary.

    The affine functions below ``w`` at the nodes and below the boundary
    value on ``boundary_points`` (the vertices of the polytope suffice, an
    affine function is maximal at a vertex) have as supremum the lower
    convex hull of the augmented graph.

    A node is in the contact set when ``w - envelope <= rtol * osc(w)``.
    """
    x = np.asarray(points, dtype=float)
    w = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(w)):
        raise ValueError("w must be finite")
    if boundary_points is not None and len(boundary_points):
        bp = np.asarray(boundary_points, dtype=float)
        bv = np.broadcast_to(np.asarray(boundary_value, float), (len(bp),))
        allx = np.vstack([x, bp])
        allz = np.r_[w, bv]
    else:
        allx, allz = x, w
    hull = lower_hull(allx, allz)
    env = np.minimum(hull(x), w)
    gap = w - env
    osc = np.ptp(w) if len(w) else 0.0
    tol = rtol * osc
    return EnvelopeResult(env, gap <= tol, gap, hull, tol)
