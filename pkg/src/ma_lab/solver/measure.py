"""Monge-Ampere measure of node sets."""
import numpy as np

from ..errors import ValidationError


def ma_measure(u, B=None, tol=1e-8):
    """|union of subdifferential cells over the nodes B|.

    Cells of a convex PL function overlap only on their edges, so the
    union has the summed area.  ``B`` holds node ids (default: every
    interior node); boundary nodes have unbounded cells and are rejected.

    Raises
    ------
    NonConvexInput
        If the nodal values leave their lower convex hull.
    """
    u.check_convex(tol)
    pos = np.full(len(u.nodes), -1)
    pos[u.interior] = np.arange(len(u.interior))
    if B is None:
        B = u.interior
    B = np.unique(np.asarray(B, dtype=np.int64))
    if np.any(pos[B] < 0):
        raise ValidationError("boundary nodes have unbounded subdifferentials")
    return float(u.cell_areas[pos[B]].sum())
