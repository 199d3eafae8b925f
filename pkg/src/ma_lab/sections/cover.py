"""Greedy covering of node sets by sections and overlap counting."""
from dataclasses import dataclass

import numpy as np

from ..errors import NotCovered
from .section import Section, as_function, height_field


@dataclass
class CoverResult:
    selected: np.ndarray      # node ids of the chosen centers
    heights: np.ndarray       # their heights
    eps: float
    overlap: np.ndarray       # per node: number of shrunken sections containing it
    covered: np.ndarray       # per node of A: covered by the chosen sections

    @property
    def max_overlap(self):
        return int(self.overlap.max()) if len(self.overlap) else 0

    @property
    def K(self):
        """max overlap / |log eps|."""
        return self.max_overlap / abs(np.log(self.eps))

    def overlap_rows(self):
        """(node_id, overlap_count) rows for nodes with nonzero overlap."""
        nz = np.flatnonzero(self.overlap)
        return list(zip(nz.tolist(), self.overlap[nz].tolist()))


def greedy_order(u, centers, heights):
    """Height descending, ties broken lexicographically by coordinates."""
    u = as_function(u)
    x = u.nodes[centers]
    keys = [x[:, d] for d in range(x.shape[1] - 1, -1, -1)] + [-heights]
    return np.lexsort(keys)


def cover(u, A, heights, eps):
    """Vitali-type selection from the family {S(x, t_x)}_{x in A}.

    Candidates are visited tallest first; a candidate is chosen when its own
    center is not yet covered by the sections chosen so far.  Every node of
    A is then covered.  Returns the subfamily and the pointwise count of the
    shrunken sections S(x_k, (1 - eps) t_k) over all nodes.

    Raises
    ------
    NotCovered
        If some node of A is left uncovered.
    """
    u = as_function(u)
    A = np.asarray(A, dtype=np.int64)
    heights = np.broadcast_to(np.asarray(heights, float), A.shape).copy()
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    order = greedy_order(u, A, heights)
    inA = np.zeros(len(u.nodes), bool)
    inA[A] = True
    done = np.zeros(len(u.nodes), bool)
    overlap = np.zeros(len(u.nodes), dtype=np.int64)
    sel, sel_t = [], []
    for k in order:
        i, t = int(A[k]), heights[k]
        if done[i]:
            continue
        g = height_field(u, i)
        done |= g <= t
        overlap += g <= (1 - eps) * t
        sel.append(i)
        sel_t.append(t)
    left = np.flatnonzero(inA & ~done)
    if len(left):
        raise NotCovered(int(left[0]))
    return CoverResult(np.array(sel, dtype=np.int64), np.array(sel_t), eps,
                       overlap, done[A])


def shrunken_sections(u, result):
    """Sections S(x_k, (1-eps) t_k) of a cover, for inspection."""
    return [Section(u, i, (1 - result.eps) * t)
            for i, t in zip(result.selected, result.heights)]
