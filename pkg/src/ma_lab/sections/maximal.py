"""Maximal function of the Hessian norm over sections."""
import logging
from dataclasses import dataclass

import numpy as np

from ..kernels import rung_sums
from .atlas import nodes_in
from .section import as_function

log = logging.getLogger(__name__)

MIN_NODES = 5
MAX_RUNGS = 40


@dataclass
class MaximalField:
    centers: np.ndarray      # node ids in the inner region
    M: np.ndarray            # sup over valid rungs of the section averages
    t_best: np.ndarray       # rung attaining the sup
    heights: np.ndarray      # dyadic ladder rho, rho/2, ...
    averages: np.ndarray     # (centers, rungs), NaN on invalid rungs
    counts: np.ndarray       # (centers, rungs) node counts
    empty: int               # rungs flagged for capturing too few nodes

    def at(self, node):
        k = np.flatnonzero(self.centers == node)
        return float(self.M[k[0]]) if len(k) else np.nan


def neighbour_heights(u, centers):
    """Per center, the smallest section height containing a neighbour."""
    u = as_function(u)
    ptr, idx = u.neighbours
    out = np.empty(len(centers))
    for a, i in enumerate(centers):
        j = idx[ptr[i]:ptr[i + 1]]
        g = u.values[j] - u.values[i] - (u.nodes[j] - u.nodes[i]) @ u.gradients[i]
        out[a] = g.min()
    return out


def ladder(rho, floor, max_rungs=MAX_RUNGS):
    """rho, rho/2, ... down to the first rung below ``floor``."""
    L = 1 + int(np.clip(np.floor(np.log2(rho / max(floor, 1e-300))), 0,
                        max_rungs - 1))
    return rho * 0.5 ** np.arange(L)


def maximal_field(u, inner, outer, rho, field=None, min_nodes=MIN_NODES,
                  centers=None):
    """M(x) = sup over the dyadic ladder t = rho 2^-l of the mean of
    ``field`` (default the Hessian norm) over the nodes of S(x, t).

    Rungs whose section holds fewer than ``min_nodes`` nodes are skipped;
    a rung with no node at all besides x is counted in ``empty``.
    """
    u = as_function(u)
    if field is None:
        field = u.hess_norm
    field = np.asarray(field, float)
    if centers is None:
        centers = nodes_in(u, inner)
    cand = nodes_in(u, outer)
    cand = cand[np.isfinite(field[cand])]
    floor = neighbour_heights(u, centers).min()
    heights = ladder(rho, floor)
    sums, counts = rung_sums(u.nodes, u.values, u.gradients, field, centers,
                             cand, heights)
    valid = counts >= min_nodes
    with np.errstate(invalid="ignore", divide="ignore"):
        avg = np.where(valid, sums / np.maximum(counts, 1), np.nan)
    empty = int(np.sum(counts <= 1))
    if empty:
        log.info("%d ladder rungs hold no node besides the center", empty)
    has = valid.any(axis=1)
    M = np.full(len(centers), np.nan)
    best = np.full(len(centers), np.nan)
    if has.any():
        k = np.nanargmax(np.where(valid[has], avg[has], -np.inf), axis=1)
        M[has] = avg[has][np.arange(has.sum()), k]
        best[has] = heights[k]
    return MaximalField(np.asarray(centers), M, best, heights, avg, counts, empty)
