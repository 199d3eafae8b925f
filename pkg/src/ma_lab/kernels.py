"""Hot numeric kernels.

Each kernel exists twice: a numba-compiled loop and a numpy path.  The
public name dispatches on ``_jit.USE_NUMBA``; both variants stay importable
(``*_numba`` / ``*_numpy``) so tests and the benchmark can compare them.
"""
import numpy as np

from ._jit import HAVE_NUMBA, USE_NUMBA, njit


# --------------------------------------------------------------------------
# 2-D convex hull (Andrew's monotone chain)

def _hull2d_impl(pts, tol):
    # pts sorted lexicographically; returns CCW hull indices starting at pts[0]
    m = pts.shape[0]
    out = np.empty(2 * m + 1, dtype=np.int64)
    k = 0
    for i in range(m):
        while k >= 2:
            a = out[k - 2]
            b = out[k - 1]
            cr = ((pts[b, 0] - pts[a, 0]) * (pts[i, 1] - pts[a, 1])
                  - (pts[b, 1] - pts[a, 1]) * (pts[i, 0] - pts[a, 0]))
            if cr <= tol:
                k -= 1
            else:
                break
        out[k] = i
        k += 1
    lower = k + 1
    for i in range(m - 2, -1, -1):
        while k >= lower:
            a = out[k - 2]
            b = out[k - 1]
            cr = ((pts[b, 0] - pts[a, 0]) * (pts[i, 1] - pts[a, 1])
                  - (pts[b, 1] - pts[a, 1]) * (pts[i, 0] - pts[a, 0]))
            if cr <= tol:
                k -= 1
            else:
                break
        out[k] = i
        k += 1
    return out[:k - 1]


hull2d_numba = njit(_hull2d_impl)
hull2d_numpy = _hull2d_impl


def hull2d(points, tol=1e-12):
    """Indices of the 2-D convex hull of ``points`` in CCW order.

    Collinear points are dropped.  The tolerance is applied to the cross
    product after scaling by the squared bounding-box diameter, and the
    first vertex is the lexicographically smallest one.
    """
    points = np.asarray(points, dtype=float)
    if len(points) < 3:
        return np.arange(len(points))
    order = np.lexsort((points[:, 1], points[:, 0]))
    pts = np.ascontiguousarray(points[order])
    span = np.ptp(pts, axis=0).max()
    ctol = tol * max(span, 1e-300) ** 2
    fn = hull2d_numba if USE_NUMBA else hull2d_numpy
    idx = fn(pts, ctol)
    return order[idx]


# --------------------------------------------------------------------------
# Evaluation of a convex piecewise-linear function as max of its pieces

@njit
def pl_max_numba(points, slopes, offsets):
    q, n = points.shape
    out = np.empty(q)
    for i in range(q):
        best = -np.inf
        for t in range(slopes.shape[0]):
            val = offsets[t]
            for d in range(n):
                val += slopes[t, d] * points[i, d]
            if val > best:
                best = val
        out[i] = best
    return out


def pl_max_numpy(points, slopes, offsets, chunk=4096):
    out = np.empty(len(points))
    for s in range(0, len(points), chunk):
        block = points[s:s + chunk] @ slopes.T + offsets
        out[s:s + chunk] = block.max(axis=1)
    return out


def pl_max(points, slopes, offsets):
    """max_t (slopes[t] . y + offsets[t]) for every row y of ``points``."""
    points = np.ascontiguousarray(points, dtype=float)
    if USE_NUMBA:
        return pl_max_numba(points, np.ascontiguousarray(slopes),
                            np.ascontiguousarray(offsets))
    return pl_max_numpy(points, slopes, offsets)


# --------------------------------------------------------------------------
# Brute-force discrete subdifferential cells by half-plane clipping.
#
# cell_i = {p : p . (x_j - x_i) <= u_j - u_i  for every candidate j}

def _clip_cells_impl(nodes, values, centers, nbr_ptr, nbr_idx, box):
    nc = centers.shape[0]
    areas = np.zeros(nc)
    cents = np.zeros((nc, 2))
    for c in range(nc):
        i = centers[c]
        cap = 8 + nbr_ptr[c + 1] - nbr_ptr[c]
        px = np.empty(cap)
        py = np.empty(cap)
        qx = np.empty(cap)
        qy = np.empty(cap)
        px[0] = -box
        py[0] = -box
        px[1] = box
        py[1] = -box
        px[2] = box
        py[2] = box
        px[3] = -box
        py[3] = box
        m = 4
        for k in range(nbr_ptr[c], nbr_ptr[c + 1]):
            j = nbr_idx[k]
            if j == i:
                continue
            ax = nodes[j, 0] - nodes[i, 0]
            ay = nodes[j, 1] - nodes[i, 1]
            b = values[j] - values[i]
            mm = 0
            for v in range(m):
                w = v + 1
                if w == m:
                    w = 0
                sv = ax * px[v] + ay * py[v] - b
                sw = ax * px[w] + ay * py[w] - b
                if sv <= 0.0:
                    qx[mm] = px[v]
                    qy[mm] = py[v]
                    mm += 1
                if (sv < 0.0 < sw) or (sw < 0.0 < sv):
                    lam = sv / (sv - sw)
                    qx[mm] = px[v] + lam * (px[w] - px[v])
                    qy[mm] = py[v] + lam * (py[w] - py[v])
                    mm += 1
            m = mm
            for v in range(m):
                px[v] = qx[v]
                py[v] = qy[v]
            if m < 3:
                m = 0
                break
        a = 0.0
        cx = 0.0
        cy = 0.0
        for v in range(m):
            w = v + 1
            if w == m:
                w = 0
            cr = px[v] * py[w] - px[w] * py[v]
            a += cr
            cx += (px[v] + px[w]) * cr
            cy += (py[v] + py[w]) * cr
        a *= 0.5
        areas[c] = a
        if a > 0.0:
            cents[c, 0] = cx / (6.0 * a)
            cents[c, 1] = cy / (6.0 * a)
    return areas, cents


clip_cells_numba = njit(_clip_cells_impl)


def clip_cells_numpy(nodes, values, centers, nbr_ptr, nbr_idx, box):
    areas = np.zeros(len(centers))
    cents = np.zeros((len(centers), 2))
    for c, i in enumerate(centers):
        poly = np.array([[-box, -box], [box, -box], [box, box], [-box, box]])
        nb = nbr_idx[nbr_ptr[c]:nbr_ptr[c + 1]]
        nb = nb[nb != i]
        dirs = nodes[nb] - nodes[i]
        rhs = values[nb] - values[i]
        for a, b in zip(dirs, rhs):
            s = poly @ a - b
            nxt = np.roll(np.arange(len(poly)), -1)
            sv, sw = s, s[nxt]
            keep = sv <= 0
            cross = (sv < 0) & (sw > 0) | (sw < 0) & (sv > 0)
            lam = np.where(cross, sv / np.where(cross, sv - sw, 1.0), 0.0)
            inter = poly + lam[:, None] * (poly[nxt] - poly)
            # interleave kept vertices and crossing points in boundary order
            pts = np.stack([poly, inter], axis=1).reshape(-1, 2)
            sel = np.stack([keep, cross], axis=1).ravel()
            poly = pts[sel]
            if len(poly) < 3:
                poly = poly[:0]
                break
        if len(poly) >= 3:
            x, y = poly[:, 0], poly[:, 1]
            xn, yn = np.roll(x, -1), np.roll(y, -1)
            cr = x * yn - xn * y
            a = 0.5 * cr.sum()
            areas[c] = a
            if a > 0:
                cents[c] = [((x + xn) * cr).sum() / (6 * a),
                            ((y + yn) * cr).sum() / (6 * a)]
    return areas, cents


def clip_cells(nodes, values, centers, nbr_ptr, nbr_idx, box):
    """Areas and centroids of discrete subdifferential cells (2-D).

    ``nbr_idx[nbr_ptr[c]:nbr_ptr[c+1]]`` lists the nodes whose supporting
    constraint is imposed on the cell of ``centers[c]``.  ``box`` bounds the
    initial slope square.
    """
    args = (np.ascontiguousarray(nodes, dtype=float),
            np.ascontiguousarray(values, dtype=float),
            np.ascontiguousarray(centers, dtype=np.int64),
            np.ascontiguousarray(nbr_ptr, dtype=np.int64),
            np.ascontiguousarray(nbr_idx, dtype=np.int64), float(box))
    if USE_NUMBA:
        return clip_cells_numba(*args)
    return clip_cells_numpy(*args)


# --------------------------------------------------------------------------
# Section averages on a dyadic height ladder (maximal function)

@njit
def rung_sums_numba(nodes, values, slopes, field, centers, cand, heights):
    """For each center c and rung l: sum/count of ``field`` over candidate
    nodes y with u(y) - u(c) - p_c.(y - c) <= heights[l]."""
    nc = centers.shape[0]
    nl = heights.shape[0]
    sums = np.zeros((nc, nl))
    counts = np.zeros((nc, nl), dtype=np.int64)
    n = nodes.shape[1]
    for a in range(nc):
        i = centers[a]
        for k in range(cand.shape[0]):
            j = cand[k]
            g = values[j] - values[i]
            for d in range(n):
                g -= slopes[i, d] * (nodes[j, d] - nodes[i, d])
            # heights are decreasing: find the deepest rung still admitting j
            for l in range(nl):
                if g <= heights[l]:
                    sums[a, l] += field[j]
                    counts[a, l] += 1
                else:
                    break
    return sums, counts


def rung_sums_numpy(nodes, values, slopes, field, centers, cand, heights):
    nc, nl = len(centers), len(heights)
    sums = np.zeros((nc, nl))
    counts = np.zeros((nc, nl), dtype=np.int64)
    xc = nodes[cand]
    vc = values[cand]
    fc = field[cand]
    for a, i in enumerate(centers):
        g = vc - values[i] - (xc - nodes[i]) @ slopes[i]
        inside = g[None, :] <= heights[:, None]
        sums[a] = inside @ fc
        counts[a] = inside.sum(axis=1)
    return sums, counts


def rung_sums(nodes, values, slopes, field, centers, cand, heights):
    args = (np.ascontiguousarray(nodes, dtype=float),
            np.ascontiguousarray(values, dtype=float),
            np.ascontiguousarray(slopes, dtype=float),
            np.ascontiguousarray(field, dtype=float),
            np.ascontiguousarray(centers, dtype=np.int64),
            np.ascontiguousarray(cand, dtype=np.int64),
            np.ascontiguousarray(heights, dtype=float))
    if USE_NUMBA:
        return rung_sums_numba(*args)
    return rung_sums_numpy(*args)


def backend():
    return "numba" if USE_NUMBA else "numpy"


__all__ = ["hull2d", "pl_max", "clip_cells", "rung_sums", "backend",
           "HAVE_NUMBA", "USE_NUMBA"]
