"""Level sets of the section maximal function against those of ||D2u||.

    |{x in U/2 : M(x) >= g}| <= C4 |{x in 3U/4 : ||D2u(x)|| >= C5 g}|

checked along a dyadic ladder of g, together with the maximal inequality

    int_{U/2, ||D2u|| >= a} ||D2u|| <= C' a |{x in U/2 : M(x) >= C'' a}|

and a replay of the covering argument behind the first inequality.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import DegenerateBody, EscapesDomain
from ..sections.cover import cover
from ..sections.maximal import maximal_field
from ..sections.section import as_function
from .contact import contact_section
from .normalize import normalize_section, region_weights

log = logging.getLogger(__name__)

C5_GRID = (1.0, 0.5, 0.25, 0.125, 0.0625)
C_SECOND = 0.5


def dyadic_ladder(lo, hi):
    """2^k from the largest power of two below ``lo`` to the first above ``hi``."""
    k0 = int(np.floor(np.log2(lo))) - 1
    k1 = int(np.ceil(np.log2(hi))) + 1
    return 2.0 ** np.arange(k0, k1 + 1)


def _measure(mask, w):
    return float(np.sum(w[mask]))


@dataclass
class LevelSetResult:
    gammas: np.ndarray
    left: np.ndarray              # |{U/2 : M >= g}|
    right: dict                   # C5 -> |{3U/4 : ||D2u|| >= C5 g}|
    C4_table: dict                # C5 -> sup_g left/right
    C4: float
    C5: float
    replay: list = field(default_factory=list)

    @property
    def holds(self):
        return bool(np.isfinite(self.C4) and self.C4 > 0 and self.C5 > 0)

    def replay_share(self):
        if not self.replay:
            return np.nan
        return float(np.mean([r["holds"] for r in self.replay]))


@dataclass
class MaximalIneqResult:
    alphas: np.ndarray
    lhs: np.ndarray
    rhs_measure: np.ndarray
    ratio: np.ndarray
    alpha0: float
    alpha_mean: float
    C_prime: float
    C_second: float

    @property
    def holds(self):
        return bool(np.isfinite(self.C_prime) and self.C_prime > 0)


def level_measures(u, inner, outer, mf):
    """Weights of the inner nodes carrying M and of the outer nodes."""
    u = as_function(u)
    ids_o, w_o = region_weights(u, outer)
    ids_i, w_i = region_weights(u, inner)
    pos = {int(c): k for k, c in enumerate(mf.centers)}
    keep = np.array([int(j) in pos for j in ids_i], dtype=bool)
    if not keep.all():
        log.info("%d inner nodes carry no maximal value", int((~keep).sum()))
    ids_i, w_i = ids_i[keep], w_i[keep]
    M = mf.M[[pos[int(j)] for j in ids_i]]
    return ids_i, w_i, M, ids_o, w_o


def verify_levelsets(u, inner, outer, rho, mf=None, c5_grid=C5_GRID,
                     constants=None, eps2=0.1, replay_max=None):
    """Scan the dyadic ladder of g and measure C4 for each C5.

    The reported pair is the largest C5 of ``c5_grid`` with a finite C4 and
    that C4.  With ``constants`` (a dict holding c1, C1, C2, C3) the proof's
    covering bound is rebuilt at every rung: cover {x : some section average
    >= g/2} by sections, find their contact sets and compare each term of
    the chain.
    """
    u = as_function(u)
    if mf is None:
        ids, _ = region_weights(u, inner)
        mf = maximal_field(u, inner, outer, rho,
                           centers=ids[~u.boundary[ids]])
    ids_i, w_i, M, ids_o, w_o = level_measures(u, inner, outer, mf)
    F_o = u.hess_norm[ids_o]
    fin_o = np.isfinite(F_o)
    Mf = M[np.isfinite(M)]
    gammas = dyadic_ladder(Mf.min(), Mf.max())
    left = np.array([_measure(M >= g, w_i) for g in gammas])
    # the ladder ends at the first empty level set
    stop = np.flatnonzero(left == 0)
    if len(stop):
        gammas, left = gammas[:stop[0] + 1], left[:stop[0] + 1]
    right, table = {}, {}
    for c5 in c5_grid:
        r = np.array([_measure(fin_o & (F_o >= c5 * g), w_o) for g in gammas])
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(left > 0, left / r, 0.0)
        right[c5] = r
        table[c5] = float(np.max(q))
    finite = [c5 for c5 in c5_grid if np.isfinite(table[c5])]
    C5 = max(finite) if finite else np.nan
    C4 = table[C5] if finite else np.inf
    res = LevelSetResult(gammas, left, right, table, C4, C5)
    if constants is not None:
        sel = np.flatnonzero(left > 0)[:replay_max]
        res.replay = [replay_covering(u, mf, gammas[k], left[k], constants,
                                      eps2, ids_o, w_o) for k in sel]
    return res


def replay_covering(u, mf, gamma, left, constants, eps2, ids_o, w_o):
    """Terms of the covering chain at one rung.

    L <= sum |S_k| <= (1/C2) sum |A_k cap S_k'| <= (1/C2) sum |S_k' cap G|
      <= (K |log eps2| / C2) |G|,    G = {3U/4 : ||D2u|| >= C1 C3 g / 2},
    S_k' = S(x_k, (1 - eps2) t_k), K measured on this cover.
    """
    u = as_function(u)
    c1, C1, C2, C3 = (constants[k] for k in ("c1", "C1", "C2", "C3"))
    avg = np.where(np.isfinite(mf.averages), mf.averages, -np.inf)
    hit = avg >= 0.5 * gamma
    rows = np.flatnonzero(hit.any(axis=1))
    A = mf.centers[rows]
    t = mf.heights[np.argmax(hit[rows], axis=1)]
    res = cover(u, A, t, eps2)
    thr = C1 * C3 * gamma / 2
    F = u.hess_norm
    G = np.zeros(len(u.nodes), bool)
    G[ids_o] = np.isfinite(F[ids_o]) & (F[ids_o] >= thr)
    wG = np.zeros(len(u.nodes))
    wG[ids_o] = w_o
    vol_S = frac_sum = shrunk_G = 0.0
    floor_ok = frac_ok = True
    overlap = np.zeros(len(u.nodes), dtype=np.int64)
    for x, tk in zip(res.selected, res.heights):
        try:
            N = normalize_section(u, x, tk)
        except (EscapesDomain, DegenerateBody):
            N = normalize_section(u, x, tk, double=False)
        sc = contact_section(N, min(c1, abs(N.inf_v)), eps=(0.0, eps2))
        vol = N.S.volume
        vol_S += vol
        frac_sum += sc.fractions[1] * vol
        frac_ok &= bool(sc.fractions[1] >= C2)
        floor_ok &= bool(np.nanmin(F[sc.contact]) >= thr)
        inner = N.S.g <= (1 - eps2) * tk
        overlap += inner
        shrunk_G += np.sum(wG[inner & G])
    K = overlap.max() / abs(np.log(eps2))
    G_meas = float(np.sum(wG[G]))
    terms = np.array([left, vol_S, frac_sum / C2, shrunk_G / C2,
                      K * abs(np.log(eps2)) * G_meas / C2])
    return {
        "gamma": float(gamma), "selected": int(len(res.selected)),
        "terms": terms, "K": float(K), "fractions_ok": frac_ok,
        "floor_ok": floor_ok,
        "steps": (np.diff(terms) >= -1e-9 * terms.max()).tolist(),
        "holds": bool(terms[0] <= terms[-1] * (1 + 1e-9)),
    }


def verify_maximal_inequality(u, inner, mf, c_second=C_SECOND, steps=4):
    """Scan alpha on a 2^(1/steps) ladder; alpha0 is the smallest ladder value
    from which the ratio stays finite, raised to the mean of ||D2u||."""
    u = as_function(u)
    ids, w = region_weights(u, inner)
    pos = {int(c): k for k, c in enumerate(mf.centers)}
    keep = np.array([int(j) in pos for j in ids], dtype=bool)
    ids, w = ids[keep], w[keep]
    M = mf.M[[pos[int(j)] for j in ids]]
    F = u.hess_norm[ids]
    ok = np.isfinite(F)
    F, M, w = F[ok], M[ok], w[ok]
    mean = float(np.sum(F * w) / np.sum(w))
    k0 = int(np.floor(steps * np.log2(F.min())))
    k1 = int(np.ceil(steps * np.log2(F.max())))
    alphas = 2.0 ** (np.arange(k0, k1 + 1) / steps)
    lhs = np.array([np.sum((F * w)[F >= a]) for a in alphas])
    rhs = np.array([np.sum(w[M >= c_second * a]) for a in alphas])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(lhs > 0, lhs / (alphas * rhs), 0.0)
    bad = np.flatnonzero(~np.isfinite(ratio))
    start = alphas[bad[-1] + 1] if len(bad) else alphas[0]
    alpha0 = max(mean, start) if len(bad) == 0 or bad[-1] + 1 < len(alphas) \
        else np.inf
    sel = alphas >= alpha0 * (1 - 1e-9)
    C = float(ratio[sel].max()) if sel.any() else np.nan
    return MaximalIneqResult(alphas, lhs, rhs, ratio, float(alpha0), mean, C,
                             c_second)
