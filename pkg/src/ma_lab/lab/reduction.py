"""From the interior estimate on normalized pieces to L log^k L on a subdomain.

Omega' is covered by halves T_i^-1(Z_i / 2) of sections S_i = S(x_i, rho).
With B(x, r1) in S(x, rho) in B(x, r2) for every x of Omega',
||T_i|| <= n / r1 and det T_i >= 1 / r2^n, and on each piece

    ||D2u|| <= a_i ||D2v_i||,   a_i = ||T_i|| ||T_i*|| / (det T_i)^{2/n},

so that

    I_k(Omega') <= sum_i (a_i / det T_i) int_{Z_i/2} ||D2v_i||
                   (log(2 + a_i) + log(2 + ||D2v_i||))^k.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import DegenerateBody, EscapesDomain, ShapeDegeneracy
from ..sections.atlas import nodes_in, safe_height
from ..sections.section import as_function, section
from .main_thm import hess_samples, keyestimate_samples, llogk, main_samples
from .normalize import normalize_section, region_weights

log = logging.getLogger(__name__)


@dataclass
class Piece:
    node: int
    T_norm: float
    det: float
    size: float               # a_i
    factor: float             # a_i / det T_i * log(2 + a_i)
    bound: dict               # k -> assembled bound of this piece
    main: dict                # k -> MainResult on (Z/2, 3Z/4)
    norm_ok: bool
    det_ok: bool


@dataclass
class ReductionResult:
    rho: float
    r1: float
    r2: float
    pieces: list
    I: dict                   # k -> I_k(Omega')
    uncovered: int
    ks: tuple = field(default=(0, 1, 2))

    @property
    def N(self):
        return len(self.pieces)

    def assembled(self, k):
        return float(sum(p.bound[k] for p in self.pieces))

    def constant(self, k):
        """I_k(Omega') / sum_i a_i / det T_i log(2 + a_i)."""
        return self.I[k] / sum(p.factor for p in self.pieces)

    @property
    def transforms_ok(self):
        return all(p.norm_ok and p.det_ok for p in self.pieces)

    @property
    def holds(self):
        return bool(self.uncovered == 0 and self.transforms_ok
                    and all(np.isfinite(self.assembled(k))
                            and self.I[k] <= self.assembled(k) * (1 + 1e-9)
                            for k in self.ks))


def round_radii(u, region, rho):
    """(r1, r2): the smallest inradius and largest circumradius at x of
    S(x, rho) over the nodes x of ``region``."""
    u = as_function(u)
    r1, r2 = np.inf, 0.0
    for i in nodes_in(u, region):
        S = section(u, int(i), rho)
        if S.region is None:
            raise ShapeDegeneracy(f"flat section at node {int(i)}")
        x = u.nodes[i]
        r1 = min(r1, S.region.inradius_at(x))
        r2 = max(r2, S.region.circumradius_at(x))
    return float(r1), float(r2)


def _square_corners(u, ids):
    c = np.array([[-.5, -.5], [.5, -.5], [.5, .5], [-.5, .5]]) @ u.lattice.basis.T
    return u.nodes[ids][:, None, :] + c[None]


def _piece_samples(N, body):
    """Node samples (||D2v||, weight) of v over ``body`` (z coordinates),
    with D2v carried by the transformation law."""
    ids, w = N.weights(body)
    H = N.pulled_hessians(ids)
    ok = np.all(np.isfinite(H), axis=(1, 2))
    F = np.full(len(ids), np.nan)
    F[ok] = np.linalg.eigvalsh(H[ok])[:, -1]
    ok = np.isfinite(F)
    return F[ok], w[ok]


def verify_reg_reduction(u, region, domain=None, ks=(0, 1, 2), rho=None,
                         tol=1e-9):
    """Cover ``region`` (Omega') by half sections of height rho and assemble
    the L log^k L bound.

    rho defaults to safe_height(u, region, domain), so that S(x, 2 rho) stays
    inside the domain.  A node counts as covered once its whole dual cell lies
    in some half piece.

    Raises
    ------
    ShapeDegeneracy
        If some section at height rho is flat (r1 = 0).
    """
    u = as_function(u)
    domain = u.domain if domain is None else domain
    if rho is None:
        rho = safe_height(u, region, domain)
    n = u.dim
    r1, r2 = round_radii(u, region, rho)
    if not (np.isfinite(r1) and r1 > 0):
        raise ShapeDegeneracy(f"r1 = {r1:.3g} at height {rho:.3g}")
    ids, _ = region_weights(u, region)
    corners = _square_corners(u, ids)
    todo = np.ones(len(ids), bool)
    centers = nodes_in(u, region)
    Fr, wr = hess_samples(u, region)
    I = {k: llogk(Fr, wr, k) for k in ks}
    pieces = []
    while todo.any():
        # next center: the interior node closest to the first uncovered cell
        y = u.nodes[ids[np.flatnonzero(todo)[0]]]
        i = int(centers[np.argmin(np.sum((u.nodes[centers] - y) ** 2, axis=1))])
        try:
            N = normalize_section(u, i, rho, double=False)
        except (EscapesDomain, DegenerateBody) as exc:
            raise ShapeDegeneracy(f"section at node {i}: {exc}") from exc
        half = N.pull_region(N.half(0.5))
        inside = np.all(half.slack(corners.reshape(-1, n)).reshape(
            len(ids), 4, -1) >= -tol, axis=(1, 2))
        if not (inside & todo).any():
            log.warning("half section at node %d covers no new cell", i)
            break
        todo &= ~inside
        T = N.T
        a = T.size()
        Fi, wi = _piece_samples(N, N.half(0.5))
        Fo, wo = _piece_samples(N, N.half(0.75))
        key = keyestimate_samples(Fi, wi, Fo, wo)
        mains = {k: main_samples(Fi, wi, Fo, wo, k, key) for k in ks}
        bound = {k: float(a / T.det * np.sum(
            wi * Fi * (np.log(2 + a) + np.log(2 + Fi)) ** k)) for k in ks}
        pieces.append(Piece(i, T.norm, T.det, a, a / T.det * np.log(2 + a),
                            bound, mains,
                            bool(T.norm <= n / r1 * (1 + 1e-9)),
                            bool(T.det >= r2 ** -n * (1 - 1e-9))))
    return ReductionResult(float(rho), r1, r2, pieces, I, int(todo.sum()),
                           tuple(ks))
