"""Normalized solutions v(z) = (det T)^{2/n} [u(T^-1 z) - l_x(T^-1 z) - t].

T normalizes the section S(x, t) (John), l_x is the supporting affine
function at x.  v is carried at the images z_j = T(x_j) of all nodes of u,
so its stencil Hessians are fitted on the image lattice.
"""
from functools import cached_property

import numpy as np
import shapely

from ..convex.john import john_normalize
from ..convex.plfunc import fit_hessians
from ..errors import DegenerateBody
from ..sections.section import as_function, section


def dual_squares(u, ids):
    """Lattice dual cells x_j + basis @ [-1/2, 1/2]^2 as shapely polygons."""
    B = u.lattice.basis
    c = np.array([[-.5, -.5], [.5, -.5], [.5, .5], [-.5, .5]]) @ B.T
    x = u.nodes[ids]
    return shapely.polygons(x[:, None, :] + c[None])


def region_weights(u, region, ids=None):
    """Area of each node's dual cell inside ``region`` (node quadrature
    weights that integrate constants exactly).

    Returns ``(ids, w)`` restricted to nodes with positive weight.
    """
    u = as_function(u)
    if ids is None:
        lo, hi = region.bbox()
        pad = 2.0 * u.lattice.h
        x = u.nodes
        ids = np.flatnonzero(np.all((x >= lo - pad) & (x <= hi + pad), axis=1)
                             & u.lattice.on_lattice)
    ids = np.asarray(ids, dtype=np.int64)
    B = u.lattice.basis
    c = np.array([[-.5, -.5], [.5, -.5], [.5, .5], [-.5, .5]]) @ B.T
    slack = np.stack([region.slack(u.nodes[ids] + ck) for ck in c], axis=1)
    inside = np.all(slack >= 0, axis=(1, 2))
    outside = np.any(np.all(slack <= 0, axis=1), axis=1)
    w = np.where(inside, abs(np.linalg.det(B)), 0.0)
    cut = ~inside & ~outside
    if cut.any():
        poly = shapely.Polygon(region.vertices)
        w[cut] = shapely.area(shapely.intersection(dual_squares(u, ids[cut]),
                                                   poly))
    keep = w > 0
    return ids[keep], w[keep]


def cell_volume(u):
    return float(abs(np.linalg.det(u.lattice.basis)))


class NormalizedSolution:
    """v on Z = T(S(x, t)).

    Attributes
    ----------
    u : PLConvexFunction
    S, S2 : Section
        S(x, t) and S(x, 2t).
    T : AffineMap
        Normalizes S(x, t): B(0,1) in Z in B(0,n).
    scale : float
        (det T)^{2/n}.
    z, v : arrays
        Images of all nodes and the values of v there.
    """

    def __init__(self, u, S, S2, T):
        self.u = u
        self.S, self.S2, self.T = S, S2, T
        self.t = S.t
        self.n = u.dim
        self.scale = T.det ** (2.0 / self.n)
        self.z = T(u.nodes)
        self.v = self.scale * (S.g - S.t)
        self.Z = S.region.transform(T)

    @property
    def nodes(self):
        return self.S.nodes

    @property
    def inf_v(self):
        return float(self.v[self.S.nodes].min())

    @cached_property
    def lattice(self):
        return self.u.lattice.mapped(self.T.A, self.T.b)

    def hessians(self, rows):
        """Stencil Hessians of v fitted on the image lattice (PSD, raw)."""
        raw, psd, _ = fit_hessians(self.v, self.lattice, rows)
        return psd, raw

    def pulled_hessians(self, rows, raw=False):
        """(det T)^{2/n} (T^-1)* D2u T^-1 at ``rows``."""
        Ai = self.T.inverse.A
        H = self.u._hess[0 if raw else 1][rows]
        return self.scale * np.einsum("ji,mjk,kl->mil", Ai, H, Ai)

    def hess_norm(self, rows):
        H = self.hessians(rows)[0]
        out = np.full(len(H), np.nan)
        ok = np.all(np.isfinite(H), axis=(1, 2))
        out[ok] = np.linalg.eigvalsh(H[ok])[:, -1]
        return out

    def gradients(self, rows):
        """grad v(z_j) = (det T)^{2/n} (T^-1)* (p_j - p_x)."""
        d = self.u.gradients[rows] - self.S.p
        return self.scale * d @ self.T.inverse.A

    def gradient_at(self, points):
        """grad v at points of Z (z coordinates): the node gradient field of
        u interpolated linearly on the triangle containing each point."""
        u = self.u
        y = self.T.inverse(np.atleast_2d(points))
        lo, hi = u._tri_boxes
        sel = np.flatnonzero(np.all((lo <= y.max(axis=0)) & (hi >= y.min(axis=0)),
                                    axis=1))
        P, o = u.hull.slopes[sel], u.hull.offsets[sel]
        tri = u.hull.simplices[sel[np.argmax(y @ P.T + o, axis=1)]]
        M = np.concatenate([u.nodes[tri], np.ones(tri.shape + (1,))], axis=2)
        rhs = np.c_[y, np.ones(len(y))][:, :, None]
        lam = np.linalg.solve(np.swapaxes(M, 1, 2), rhs)[:, :, 0]
        g = np.einsum("mk,mkd->md", lam, u.gradients[tri])
        return self.scale * (g - self.S.p) @ self.T.inverse.A

    def boundary_samples(self, per_edge=32):
        """Midpoints, outward normals (scaled by length) on the edges of Z."""
        V = self.Z.vertices
        W = np.roll(V, -1, axis=0)
        s = (np.arange(per_edge) + 0.5) / per_edge
        pts = (V[:, None, :] + s[None, :, None] * (W - V)[:, None, :])
        d = (W - V) / per_edge
        nu = np.repeat(np.c_[d[:, 1], -d[:, 0]], per_edge, axis=0)
        return pts.reshape(-1, self.n), nu

    def transformation_error(self, rows=None):
        """Max relative node deviation between the fitted D2v and the pulled
        back D2u (PSD fields, both sides)."""
        rows = self.S.nodes if rows is None else rows
        Hv = self.hessians(rows)[0]
        Hu = self.pulled_hessians(rows)
        ok = np.all(np.isfinite(Hv), axis=(1, 2)) & np.all(np.isfinite(Hu),
                                                             axis=(1, 2))
        if not ok.any():
            return np.nan
        num = np.linalg.norm(Hv[ok] - Hu[ok], ord=2, axis=(1, 2))
        den = np.linalg.norm(Hu[ok], ord=2, axis=(1, 2))
        return float(np.max(num / np.maximum(den, 1e-300)))

    def boundary_report(self):
        """v on the boundaries of Z and T(S(x, 2t))."""
        S, S2 = self.S, self.S2
        vz = self.scale * (S.level_of(S) - S.t)
        v2 = self.scale * (S.level_of(S2) - S.t)
        T2 = S2.region.transform(self.T) if S2.region is not None else None
        out = {
            "v_on_dZ": float(np.abs(vz).max()),
            "v_on_dZ2_minus_scale_t": float(np.abs(v2 - self.scale * S.t).max()),
            "inf_v": self.inf_v,
            "scale_t": self.scale * S.t,
        }
        if T2 is not None:
            out["Z2_inner"] = T2.inradius_at(np.zeros(self.n))
            out["Z2_outer"] = T2.circumradius_at(np.zeros(self.n))
            out["Z2_ok"] = bool(out["Z2_inner"] >= 1 - 1e-6
                                and out["Z2_outer"] <= 3 * self.n + 1e-6)
        return out

    def pull_region(self, body):
        """T^-1(body) for a body given in z coordinates."""
        return body.transform(self.T.inverse)

    def weights(self, body):
        """Quadrature weights of v over a body in z coordinates."""
        ids, w = region_weights(self.u, self.pull_region(body))
        return ids, w * self.T.det

    def half(self, tau=0.5):
        """tau Z (dilation about the origin) in z coordinates."""
        return self.Z.dilate(tau, np.zeros(self.n))


def normalize_section(u, x, t, double=True):
    """Normalized solution attached to S(x, t).

    Raises
    ------
    EscapesDomain
        If S(x, t) or, with ``double``, S(x, 2t) reaches the boundary.
    DegenerateBody
        If the section is lower dimensional.
    """
    u = as_function(u)
    S = section(u, x, t)
    S2 = section(u, S.i, 2 * t) if double else S
    if S.region is None:
        raise DegenerateBody(f"section at node {S.i} with t={t:.3g} is flat")
    T = john_normalize(S.region)
    return NormalizedSolution(u, S, S2, T)
