"""L log^k L integrals of ||D2u|| and the interior estimate

    int_{U/2} F log^{k+1}(2 + F) <= C(k) int_{3U/4} F log^k(2 + F),  F = ||D2u||,

with the layer-cake rewrite and the key estimate used to prove it.
"""
from dataclasses import dataclass

import numpy as np

from ..sections.section import as_function
from .normalize import region_weights

LAYER_RTOL = 0.01
LAYER_POINTS = 4000
C_SECOND = 0.5


def hess_samples(u, region):
    """(F, w): ||D2u|| at the nodes of ``region`` and their clipped dual cell
    areas; nodes without a fitted Hessian are dropped."""
    u = as_function(u)
    ids, w = region_weights(u, region)
    F = u.hess_norm[ids]
    ok = np.isfinite(F)
    return F[ok], w[ok]


def llogk(F, w, k):
    return float(np.sum(w * F * np.log(2.0 + F) ** k))


def llogk_integral(u, region, k, field=None):
    """Quadrature of ||D2u|| log^k(2 + ||D2u||) over ``region`` (node values
    times dual cell areas clipped to the region).

    ``field`` replaces ||D2u|| by another node field when given.
    """
    u = as_function(u)
    if field is None:
        F, w = hess_samples(u, region)
    else:
        ids, w = region_weights(u, region)
        F = np.asarray(field, float)[ids]
        ok = np.isfinite(F)
        F, w = F[ok], w[ok]
    return llogk(F, w, k)


def tail(F, w, gammas):
    """int_{F >= g} F for each g (F sorted once)."""
    order = np.argsort(F)
    Fs, mass = F[order], (F * w)[order]
    cum = np.concatenate([np.cumsum(mass[::-1])[::-1], [0.0]])
    return cum[np.searchsorted(Fs, gammas, side="left")]


def level_measure(F, w, gammas):
    """|{F >= g}| for each g."""
    order = np.argsort(F)
    Fs, ws = F[order], w[order]
    cum = np.concatenate([np.cumsum(ws[::-1])[::-1], [0.0]])
    return cum[np.searchsorted(Fs, gammas, side="left")]


def layer_cake(F, w, k, points=LAYER_POINTS):
    """int F log^{k+1}(2+F) via

        log^{k+1}(2) int F + (k+1) int_0^inf log^k(2+g)/(2+g) Tail(g) dg,

    integrated by the trapezoid rule in s = log(2 + g)."""
    s = np.linspace(np.log(2.0), np.log(2.0 + F.max()), points)
    vals = s ** k * tail(F, w, np.exp(s) - 2.0)
    return float(np.log(2.0) ** (k + 1) * np.sum(F * w)
                 + (k + 1) * np.trapezoid(vals, s))


def high_part(F, w, k, cbar, points=LAYER_POINTS):
    """int_{F >= cbar} F log^{k+1} F directly and through

        log^{k+1}(cbar) Tail(cbar) + (k+1) int_cbar^inf log^k(g)/g Tail(g) dg.
    """
    hi = F >= cbar
    direct = float(np.sum((w * F * np.log(F) ** (k + 1))[hi]))
    if not hi.any():
        return direct, 0.0
    s = np.linspace(np.log(cbar), np.log(F.max()), points)
    vals = s ** k * tail(F, w, np.exp(s))
    fub = (np.log(cbar) ** (k + 1) * tail(F, w, [cbar])[0]
           + (k + 1) * np.trapezoid(vals, s))
    return direct, float(fub)


@dataclass
class KeyEstimate:
    gammas: np.ndarray
    lhs: np.ndarray           # int_{U/2, F >= g} F
    rhs_measure: np.ndarray   # |{3U/4 : F >= c'' g}|
    ratio: np.ndarray
    c_prime: float
    c_second: float
    cbar: float

    @property
    def holds(self):
        return bool(np.isfinite(self.c_prime) and self.c_prime > 0
                    and self.cbar >= 2)


def keyestimate(u, inner, outer, c_second=C_SECOND, steps=4):
    """c' = sup over g >= cbar of int_{U/2, F >= g} F / (g |{3U/4 : F >= c'' g}|).

    Both level functions are steps, so the supremum is taken exactly at the
    breakpoints (and just above them).  The 2^(j/steps) ladder is kept for
    reporting.  cbar is the smallest ladder value from which the ratio stays
    finite, raised to 2.  When no node reaches cbar the estimate is vacuous
    and c' is the supremum over the ladder.
    """
    return keyestimate_samples(*hess_samples(u, inner),
                               *hess_samples(u, outer), c_second, steps)


def keyestimate_samples(Fi, wi, Fo, wo, c_second=C_SECOND, steps=4):
    """keyestimate on node samples (F, w) of the inner and outer regions."""
    def ratio_at(g):
        lhs = tail(Fi, wi, g)
        rhs = level_measure(Fo, wo, c_second * g)
        with np.errstate(divide="ignore", invalid="ignore"):
            return lhs, rhs, np.where(lhs > 0, lhs / (g * rhs), 0.0)

    k0 = int(np.floor(steps * np.log2(Fi.min())))
    k1 = int(np.ceil(steps * np.log2(Fi.max())))
    g = 2.0 ** (np.arange(k0, k1 + 1) / steps)
    lhs, rhs, ratio = ratio_at(g)
    bad = np.flatnonzero(~np.isfinite(ratio))
    if len(bad) and bad[-1] + 1 >= len(g):
        return KeyEstimate(g, lhs, rhs, ratio, np.inf, c_second, np.inf)
    start = g[bad[-1] + 1] if len(bad) else g[0]
    cbar = float(max(2.0, start))
    br = np.concatenate([[cbar], Fi, Fo / c_second])
    br = np.unique(br[br >= cbar])
    _, _, r = ratio_at(np.concatenate([br, br * (1 + 1e-12)]))
    c_prime = float(r.max())
    if c_prime == 0.0:
        # empty above cbar: the estimate is vacuous, report the ladder sup
        c_prime = float(ratio.max())
    return KeyEstimate(g, lhs, rhs, ratio, c_prime, c_second, cbar)


@dataclass
class MainResult:
    k: int
    lhs: float                # I_{k+1}(U/2)
    rhs: float                # I_k(3U/4)
    ratio: float
    layer_cake: float         # rewrite of I_{k+1}(U/2)
    layer_rel: float
    split_bound: float        # low part + 2^{k+1} high part
    fubini_direct: float
    fubini_rewrite: float
    fubini_rel: float
    key_bound: float          # (k+1) c' int_cbar log^k(g) |{F >= c'' g}| dg
    head: float               # log^{k+1}(cbar) Tail(cbar)
    floor: float              # log(2 + min F) I_k(U/2)
    cbar: float

    @property
    def layer_ok(self):
        return bool(self.layer_rel <= LAYER_RTOL and self.fubini_rel <= LAYER_RTOL)

    @property
    def split_ok(self):
        return bool(self.lhs <= self.split_bound * (1 + 1e-12))

    @property
    def key_ok(self):
        """Fubini rewrite above cbar against the key estimate inserted in it."""
        return bool(self.fubini_rewrite <= (self.head + self.key_bound)
                    * (1 + 1e-3))

    @property
    def floor_ok(self):
        return bool(self.lhs >= self.floor * (1 - 1e-12))

    @property
    def holds(self):
        return bool(np.isfinite(self.ratio) and self.layer_ok and self.split_ok
                    and self.floor_ok)


def verify_main(u, inner, outer, k, key=None, points=LAYER_POINTS):
    """Ratio I_{k+1}(U/2) / I_k(3U/4) with the proof's rewrites.

    Parameters
    ----------
    u : PLConvexFunction or MASolution
    inner, outer : ConvexBody
        U/2 and 3U/4.
    k : int
    key : KeyEstimate, optional
        Reused across k.
    """
    u = as_function(u)
    return main_samples(*hess_samples(u, inner), *hess_samples(u, outer), k,
                        key, points)


def main_samples(Fi, wi, Fo, wo, k, key=None, points=LAYER_POINTS):
    """verify_main on node samples (F, w) of the inner and outer regions."""
    if key is None:
        key = keyestimate_samples(Fi, wi, Fo, wo)
    lhs = llogk(Fi, wi, k + 1)
    rhs = llogk(Fo, wo, k)
    lc = layer_cake(Fi, wi, k, points)
    cbar = key.cbar
    lo = Fi < cbar
    split = (np.log(2.0 + cbar) ** (k + 1) * np.sum((Fi * wi)[lo])
             + 2.0 ** (k + 1) * np.sum((wi * Fi * np.log(Fi) ** (k + 1))[~lo]))
    direct, fub = high_part(Fi, wi, k, cbar, points)
    # key estimate inserted in the Fubini integral above cbar
    if (~lo).any():
        s = np.linspace(np.log(cbar), np.log(Fo.max() / key.c_second) + 1e-12,
                        points)
        meas = level_measure(Fo, wo, key.c_second * np.exp(s))
        key_int = (k + 1) * key.c_prime * np.trapezoid(s ** k * np.exp(s) * meas, s)
        head = np.log(cbar) ** (k + 1) * tail(Fi, wi, [cbar])[0]
    else:
        key_int, head = 0.0, 0.0
    floor = np.log(2.0 + Fi.min()) * llogk(Fi, wi, k)
    res = MainResult(int(k), lhs, rhs, lhs / rhs, lc, abs(lc - lhs) / lhs,
                     float(split), direct, fub,
                     abs(fub - direct) / direct if direct > 0 else 0.0,
                     float(key_int), float(head), float(floor), cbar)
    return res
