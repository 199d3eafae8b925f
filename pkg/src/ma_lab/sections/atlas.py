"""Safe heights, dilation/engulfing constants and sampling of sections."""
from dataclasses import dataclass, field

import numpy as np
import shapely
from scipy.stats import qmc

from ..errors import InclusionViolation, NoPositiveHeight
from .section import Section, as_function, height_field, section

EPS0 = 0.1


def nodes_in(u, body, tol=1e-9):
    """Interior nodes of u lying in ``body``."""
    u = as_function(u)
    I = u.interior
    return I[body.contains(u.nodes[I], tol)]


def sample_centers(u, body, count=100, seed=0):
    """``count`` distinct interior nodes in ``body`` from a scrambled Halton
    sequence, snapped to the nearest node."""
    u = as_function(u)
    cand = nodes_in(u, body)
    if len(cand) <= count:
        return cand
    lo, hi = body.bbox()
    eng = qmc.Halton(d=body.dim, scramble=True, seed=seed)
    pts = lo + (hi - lo) * eng.random(16 * count)
    pts = pts[body.contains(pts)]
    X = u.nodes[cand]
    picked = []
    seen = set()
    for y in pts:
        j = int(cand[np.argmin(np.sum((X - y) ** 2, axis=1))])
        if j not in seen:
            seen.add(j)
            picked.append(j)
            if len(picked) == count:
                break
    return np.array(picked, dtype=np.int64)


def _boundary_samples(body, spacing):
    v = body.vertices
    w = np.roll(v, -1, axis=0)
    out = []
    for a, b in zip(v, w):
        m = max(1, int(np.ceil(np.linalg.norm(b - a) / spacing)))
        s = np.arange(m)[:, None] / m
        out.append(a + s * (b - a))
    return np.vstack(out)


def _fits(u, i, t, outer):
    S = Section(u, i, t)
    if np.any(u.boundary[S.nodes]):
        return False
    return bool(np.all(outer.contains(S.vertices)))


def exit_height(u, i, outer, guess=None, iters=40, rtol=1e-7):
    """sup{t : S(x_i, t) inside ``outer``} by bisection on exact sections."""
    u = as_function(u)
    if guess is None:
        guess = np.ptp(u.values)
    lo, hi = 0.0, guess
    while _fits(u, i, hi, outer):
        lo, hi = hi, 2 * hi
    if lo == 0.0:
        lo = hi
        while lo > 1e-300 and not _fits(u, i, lo, outer):
            hi, lo = lo, 0.5 * lo
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if _fits(u, i, mid, outer):
            lo = mid
        else:
            hi = mid
        if hi - lo <= rtol * hi:
            break
    return lo


def exit_heights(u, centers, outer, spacing=None, chunk=256):
    """Estimate of sup{t : S(x,t) inside outer} for many centers: the minimum
    over boundary samples of ``outer`` of u - (supporting plane at x)."""
    u = as_function(u)
    if spacing is None:
        spacing = u.h / 8
    Y = _boundary_samples(outer, spacing)
    uy = u(Y)
    out = np.empty(len(centers))
    for s in range(0, len(centers), chunk):
        c = centers[s:s + chunk]
        x, p, ux = u.nodes[c], u.gradients[c], u.values[c]
        G = uy[None, :] - ux[:, None] - np.einsum("cd,yd->cy", p, Y) \
            + np.einsum("cd,cd->c", p, x)[:, None]
        out[s:s + chunk] = G.min(axis=1)
    return out


def resolvable_height(u, i):
    """Smallest t at which S(x_i, t) contains a triangulation neighbour."""
    u = as_function(u)
    ptr, idx = u.neighbours
    g = height_field(u, i)
    return float(g[idx[ptr[i]:ptr[i + 1]]].min())


def safe_height(u, inner, outer, refine=8, return_info=False):
    """rho with S(x, 2 rho) inside ``outer`` for every node x in ``inner``.

    The exit height of every node is estimated from boundary samples of
    ``outer``; the ``refine`` smallest are recomputed by bisection on exact
    sections, and rho is half their minimum.

    Raises
    ------
    NoPositiveHeight
        If some center cannot grow its section past its own neighbours.
    """
    u = as_function(u)
    xs = nodes_in(u, inner)
    if len(xs) == 0:
        raise NoPositiveHeight("no interior node in the inner region")
    est = exit_heights(u, xs, outer)
    order = np.argsort(est, kind="stable")
    exact = {}
    for k in order[:refine]:
        i = int(xs[k])
        res = resolvable_height(u, i)
        if est[k] <= res or not _fits(u, i, res, outer):
            raise NoPositiveHeight(f"sections at node {i} leave the outer region "
                                   f"below the grid-resolvable height {res:.3g}")
        exact[i] = exit_height(u, i, outer, guess=max(est[k], res))
    tstar = min(min(exact.values()), est[order[min(refine, len(order) - 1)]])
    rho = 0.5 * tstar
    if return_info:
        return rho, {"centers": xs, "estimates": est, "refined": exact}
    return rho


@dataclass
class SectionAtlas:
    """Constants of the section family on a nested pair inner << outer."""
    rho: float
    beta: dict = field(default_factory=dict)
    theta: float = np.nan
    eps0: float = EPS0
    eps1: float = None
    K: float = None
    inner: object = None
    outer: object = None

    @property
    def eps2(self):
        return self.eps0 if self.eps1 is None else min(self.eps0, self.eps1)

    def check(self):
        ok_beta = all(0 < b < 1 for tau, b in self.beta.items() if tau < 1)
        return {"rho_positive": self.rho > 0, "beta_in_01": ok_beta,
                "theta_gt_1": self.theta > 1}

    def to_json(self):
        return {"rho": self.rho, "beta": {str(k): v for k, v in self.beta.items()},
                "theta": self.theta, "eps0": self.eps0, "eps1": self.eps1,
                "eps2": self.eps2, "K": self.K,
                "inner": None if self.inner is None else self.inner.to_json(),
                "outer": None if self.outer is None else self.outer.to_json()}


def _gauge_max(region, center, points):
    return float(region.gauge(points, center).max())


def verify_engulfing(u, samples, taus=(0.25, 0.5, 0.75, 1.0), tol=1e-9,
                     pair_limit=None):
    """Measure beta(tau) and theta over sampled sections.

    ``samples`` is a list of (node, t).  For each sample and tau, checks
    tau S(x,t) inside S(x,tau t) (raising InclusionViolation with a witness
    otherwise) and records the smallest beta with S(x,tau t) inside
    beta S(x,t).  For each pair of samples of equal height whose sections
    intersect, records the smallest theta with S(y,t) inside S(x,theta t).
    """
    u = as_function(u)
    secs = [section(u, i, t) for i, t in samples]
    beta = {tau: [] for tau in taus}
    for S in secs:
        if S.region is None:
            continue
        for tau in taus:
            St = Section(u, S.i, tau * S.t, S.p, S.g)
            D = S.region.dilate(tau, S.x).vertices if tau != 1 else S.vertices
            lev = St.level(D)
            bad = lev > tau * S.t + tol * (S.t + np.ptp(u.values))
            if np.any(bad):
                raise InclusionViolation(
                    f"tau S not inside S(x, tau t) at node {S.i}, t={S.t:.4g}, "
                    f"tau={tau}", witness=D[np.argmax(lev)])
            beta[tau].append(_gauge_max(S.region, S.x, St.vertices))
    # engulfing over intersecting pairs of equal height
    thetas = []
    by_t = {}
    for S in secs:
        if S.region is not None:
            by_t.setdefault(S.t, []).append(S)
    for t, group in by_t.items():
        polys = np.array([shapely.Polygon(S.vertices) for S in group]) \
            if len(group) > 1 else None
        if polys is None:
            continue
        tree = shapely.STRtree(polys)
        a, b = tree.query(polys, predicate="intersects")
        keep = a != b
        a, b = a[keep], b[keep]
        if pair_limit is not None:
            a, b = a[:pair_limit], b[:pair_limit]
        for ia, ib in zip(a, b):
            X, Y = group[ia], group[ib]
            thetas.append(float(X.level_of(Y).max() / t))
    res = {
        "beta": {tau: float(np.max(v)) if v else np.nan for tau, v in beta.items()},
        "beta_samples": {tau: np.asarray(v) for tau, v in beta.items()},
        "theta": float(np.max(thetas)) if thetas else np.nan,
        "theta_samples": np.asarray(thetas),
        "pairs": len(thetas),
    }
    return res


def verify_section_chain(u, i, heights, tol=1e-9):
    """Monotonicity and S(x,t) inside S(x,2t) inside 2S(x,t) at one center.

    Returns a dict of booleans plus the worst gauge ratio observed.
    """
    u = as_function(u)
    heights = np.sort(np.asarray(heights, float))
    g = height_field(u, i)
    secs = [Section(u, i, t, g=g) for t in heights]
    scale = tol * np.ptp(u.values)
    mono = True
    for S1, S2 in zip(secs[:-1], secs[1:]):
        if len(S1.vertices) and np.any(S2.level_of(S1) > S2.t + scale):
            mono = False
    dbl = True
    worst = 0.0
    for S in secs:
        if S.region is None:
            continue
        S2 = Section(u, i, 2 * S.t, g=g)
        if np.any(S2.level_of(S) > S2.t + scale):
            dbl = False
        gmax = _gauge_max(S.region, S.x, S2.vertices)
        worst = max(worst, gmax / 2.0)
        if gmax > 2.0 * (1 + 1e-9):
            dbl = False
    return {"monotone": mono, "double": dbl, "double_gauge": worst}
