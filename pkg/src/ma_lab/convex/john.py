"""Affine normalization of convex bodies via the John ellipsoid.

The maximal-volume inscribed ellipsoid E = {B s + c : |s| <= 1} of a
polytope {A y <= b} (unit normals) solves

    maximize log det B   subject to   |B a_i| + a_i . c <= b_i .

John's theorem gives E subset K subset c + n (E - c), hence the map
T(y) = B^{-1}(y - c) satisfies B(0,1) subset T(K) subset B(0,n).
"""
import numpy as np

from ..errors import DegenerateBody
from .affine import AffineMap
from .body import unit_ball_volume

MAX_AXIS_RATIO = 1e12


def _sym_basis(n):
    basis = []
    for i in range(n):
        for j in range(i, n):
            E = np.zeros((n, n))
            E[i, j] = E[j, i] = 1.0
            basis.append(E)
    return np.array(basis)


class _Problem:
    def __init__(self, A, b):
        self.A = A
        self.b = b
        self.n = A.shape[1]
        self.E = _sym_basis(self.n)
        self.nb = len(self.E)
        self.nt = self.nb + self.n
        # G[i] maps vech(B) to B a_i
        self.G = np.einsum("kij,mj->mik", self.E, A)

    def split(self, theta):
        B = np.einsum("k,kij->ij", theta[:self.nb], self.E)
        return B, theta[self.nb:]

    def constraints(self, theta):
        B, c = self.split(theta)
        r = self.A @ B  # rows: B a_i (B symmetric)
        nr = np.sqrt(np.einsum("mi,mi->m", r, r))
        return nr + self.A @ c - self.b, r, nr

    def objective_terms(self, theta):
        B, _ = self.split(theta)
        sign, logdet = np.linalg.slogdet(B)
        if sign <= 0:
            return None
        Binv = np.linalg.inv(B)
        BE = Binv @ self.E
        grad = np.zeros(self.nt)
        grad[:self.nb] = -np.trace(BE, axis1=1, axis2=2)
        hess = np.zeros((self.nt, self.nt))
        hess[:self.nb, :self.nb] = np.einsum("kij,lji->kl", BE, BE)
        return -logdet, grad, hess

    def derivs(self, r, nr, weights, idx=None):
        """Constraint gradients and sum_i weights_i * Hess g_i."""
        G = self.G if idx is None else self.G[idx]
        A = self.A if idx is None else self.A[idx]
        rh = r / nr[:, None]
        Grh = np.einsum("mik,mi->mk", G, rh)
        dg = np.empty((len(r), self.nt))
        dg[:, :self.nb] = Grh
        dg[:, self.nb:] = A
        # Hess |G theta| = G^T (I - rh rh^T) G / |r|
        w = weights / nr
        X = G * np.sqrt(np.abs(w))[:, None, None]
        Xs = X * np.sign(w)[:, None, None]
        H = (np.einsum("mik,mil->kl", Xs, X)
             - (Grh * w[:, None]).T @ Grh)
        return dg, H


def _newton_barrier(prob, theta, t, f_phi):
    for _ in range(100):
        f0, df0, d2f0 = prob.objective_terms(theta)
        g, r, nr = prob.constraints(theta)
        s = -g
        dg, H2 = prob.derivs(r, nr, 1.0 / s)
        grad = t * df0 + (dg / s[:, None]).sum(axis=0)
        hess = t * d2f0
        hess[:prob.nb, :prob.nb] += H2
        ds = dg / s[:, None]
        hess += ds.T @ ds
        try:
            step = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = -np.linalg.lstsq(hess, grad, rcond=None)[0]
        dec = -grad @ step
        if dec / 2 < 1e-9:
            break
        cur = t * f0 - np.log(s).sum()
        a = 1.0
        for _ in range(40):
            if f_phi(theta + a * step, t) <= cur - 0.25 * a * dec:
                break
            a *= 0.5
        else:
            return theta
        theta = theta + a * step
    return theta


def _phi(prob):
    def phi(th, t):
        g = prob.constraints(th)[0]
        if np.any(g >= 0):
            return np.inf
        sign, logdet = np.linalg.slogdet(prob.split(th)[0])
        if sign <= 0:
            return np.inf
        return -t * logdet - np.log(-g).sum()
    return phi


def _polish(prob, theta, lam, iters=12, cut=1e-6):
    """Newton on the KKT system restricted to the active facets.

    Returns None when the iteration does not settle (wrong active set).
    """
    active = np.flatnonzero(lam > cut * lam.max())
    nt = prob.nt
    lam = lam[active].copy()
    prev = np.inf
    for it in range(iters):
        terms = prob.objective_terms(theta)
        if terms is None:
            return None
        _, df0, d2f0 = terms
        g, r, nr = prob.constraints(theta)
        dg, H2 = prob.derivs(r[active], nr[active], lam, active)
        res = np.r_[df0 + lam @ dg, g[active]]
        err = np.abs(res).max()
        if err < 1e-14:
            return theta
        if it >= 3 and err > 0.5 * prev:
            # quadratic convergence is lost: accept only a tiny residual
            return theta if err < 1e-12 else None
        prev = err
        H = d2f0
        H[:prob.nb, :prob.nb] += H2
        K = np.block([[H, dg.T], [dg, np.zeros((len(active), len(active)))]])
        try:
            sol = np.linalg.solve(K, -res)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(K, -res, rcond=None)[0]
        theta = theta + sol[:nt]
        lam = lam + sol[nt:]
    return theta


def _accept(prob, old, new):
    if new is None:
        return False
    terms = prob.objective_terms(new)
    if terms is None:
        return False
    g = prob.constraints(new)[0]
    return g.max() <= 1e-13 and terms[0] <= prob.objective_terms(old)[0] + 1e-12


def john_ellipsoid(body, gap=1e-11):
    """Maximal-volume ellipsoid inscribed in ``body``.

    Returns ``(B, c)`` with the ellipsoid {B s + c : |s| <= 1}, B symmetric
    positive definite.
    """
    A, b = body.facets
    A = np.asarray(A)
    # work in coordinates where the body has unit size around its centroid
    shift = np.asarray(body.centroid)
    scale = body.diameter
    bs = (b - A @ shift) / scale
    prob = _Problem(A, bs)
    n = body.dim
    r0 = 0.5 * bs.min()
    if not r0 > 0:
        raise DegenerateBody("centroid is not interior")
    theta = np.r_[r0 * np.eye(n)[np.triu_indices(n)], np.zeros(n)]
    # follow the central path; once the duality gap is small, try to jump
    # to the optimum by a KKT Newton polish on the facets carrying weight
    phi = _phi(prob)
    t, m = 1.0, len(bs)
    while True:
        theta = _newton_barrier(prob, theta, t, phi)
        if m / t < 1e-4:
            lam = 1.0 / (t * -prob.constraints(theta)[0])
            done = False
            for cut in (1e-6, 1e-3, 1e-1):
                polished = _polish(prob, theta, lam, cut=cut)
                if _accept(prob, theta, polished):
                    theta, done = polished, True
                    break
            if done or m / t < gap:
                break
        t *= 50.0
    B, c = prob.split(theta)
    # {B s + c} only depends on B^2: the KKT polish may land on -B (same
    # determinant in even dimension), so return the PSD square root
    ev, Q = np.linalg.eigh(0.5 * (B + B.T))
    B = (Q * np.abs(ev)) @ Q.T
    return B * scale, c * scale + shift


def john_normalize(body):
    """Affine map T with B(0,1) subset T(body) subset B(0,n).

    Raises
    ------
    DegenerateBody
        If the body is lower dimensional or its John ellipsoid has an axis
        ratio above 1e12.
    """
    B, c = john_ellipsoid(body)
    ev = np.linalg.eigvalsh(B)
    if ev.min() <= 0 or ev.max() / ev.min() > MAX_AXIS_RATIO:
        raise DegenerateBody(f"John ellipsoid axis ratio {ev.max() / ev.min():.3g}")
    Binv = np.linalg.inv(B)
    Binv = 0.5 * (Binv + Binv.T)
    return AffineMap(Binv, -Binv @ c)


def normalization_report(body, T, tol=1e-6):
    """Measured inclusion radii of T(body) and the det T bounds."""
    n = body.dim
    image = body.transform(T)
    inner = image.inradius_at(np.zeros(n))
    outer = image.circumradius_at(np.zeros(n))
    w = unit_ball_volume(n)
    lo, hi = w / body.volume, n ** n * w / body.volume
    return {
        "inner_radius": inner,
        "outer_radius": outer,
        "det": T.det,
        "det_lower": lo,
        "det_upper": hi,
        "inner_ok": inner >= 1 - tol,
        "outer_ok": outer <= n + tol,
        "det_ok": lo <= T.det <= hi,
    }
