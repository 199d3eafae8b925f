"""Hessian averages over sections against the size of their normalization.

For T normalizing S(x, t) the ratio

    ||T|| ||T*|| / (det T)^{2/n}  /  mean_{S(x,t)} ||D2u||

is bounded below by a universal C1.  Along the way the gradient of the
normalized solution is bounded on T(S(x, t)) and the integral of its
Laplacian equals the boundary flux of its gradient.
"""
from dataclasses import dataclass, field

import numpy as np

from .normalize import region_weights
from .samples import normalized

GRAD_BOUND = 10.0
DIV_RTOL = 0.02
LAW_RTOL = 0.05


@dataclass
class HessMeanResult:
    centers: np.ndarray
    heights: np.ndarray
    size: np.ndarray          # ||T|| ||T*|| / (det T)^(2/n)
    mean_hess: np.ndarray     # mean of ||D2u|| over S(x, t)
    ratio: np.ndarray
    grad_sup: np.ndarray      # sup |grad v| over T(S(x, t))
    lap_integral: np.ndarray  # integral of the fitted Laplacian of v over Z
    flux: np.ndarray          # boundary flux of grad v
    law_error: np.ndarray     # fitted D2v against the pulled back D2u
    skipped: list = field(default_factory=list)

    @property
    def C1(self):
        return float(np.min(self.ratio)) if len(self.ratio) else np.nan

    @property
    def c_grad(self):
        return float(np.max(self.grad_sup)) if len(self.grad_sup) else np.nan

    @property
    def div_error(self):
        return np.abs(self.lap_integral - self.flux) / np.abs(self.flux)

    def verdicts(self):
        return {
            "C1_positive": bool(self.C1 > 0),
            "grad_bound": bool(self.c_grad <= GRAD_BOUND),
            "divergence": float(np.mean(self.div_error <= DIV_RTOL)),
            "transformation_law": float(np.mean(self.law_error <= LAW_RTOL)),
        }


def section_mean(u, S, field):
    """Average of a nodal field over S(x, t) with dual-cell weights."""
    ids, w = region_weights(u, S.region)
    f = field[ids]
    ok = np.isfinite(f)
    return float(np.sum(f[ok] * w[ok]) / np.sum(w[ok]))


def divergence_pair(N, per_edge=32):
    """(integral of the fitted Laplacian of v over Z, flux of grad v)."""
    ids, w = N.weights(N.Z)
    H = N.hessians(ids)[0]
    lap = np.trace(H, axis1=1, axis2=2)
    ok = np.isfinite(lap)
    pts, nu = N.boundary_samples(per_edge)
    flux = float(np.sum(np.einsum("md,md->m", N.gradient_at(pts), nu)))
    return float(np.sum(lap[ok] * w[ok])), flux


def grad_sup(N):
    """sup |grad v| over Z: nodes of the section and its boundary."""
    g = np.linalg.norm(N.gradients(N.nodes), axis=1)
    pts, _ = N.boundary_samples(4)
    gb = np.linalg.norm(N.gradient_at(pts), axis=1)
    return float(max(g.max(), gb.max()))


def verify_hessmean(u, samples):
    """Measure C1 over sampled sections.

    Parameters
    ----------
    u : MASolution or PLConvexFunction
    samples : list of (node, t) or NormalizedSolution

    Sections whose double escapes the domain, or that are flat, are skipped
    and listed in ``skipped``.
    """
    Ns, skipped = normalized(u, samples)
    rows = []
    for N in Ns:
        m = section_mean(N.u, N.S, N.u.hess_norm)
        lap, flux = divergence_pair(N)
        rows.append((N.S.i, N.t, N.T.size(), m, grad_sup(N), lap, flux,
                     N.transformation_error()))
    a = np.array(rows, dtype=float).reshape(-1, 8)
    return HessMeanResult(a[:, 0].astype(np.int64), a[:, 1], a[:, 2], a[:, 3],
                          a[:, 2] / a[:, 3], a[:, 4], a[:, 5], a[:, 6], a[:, 7],
                          skipped)
