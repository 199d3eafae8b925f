"""Contact sets of the convex envelope of v - p on normalized sections.

With p(z) = c1 (|z|^2/n^2 - 1)/2 and Gamma the convex envelope of w = v - p
under Gamma <= 0 on the boundary of Z, the contact set E = {Gamma = w}
carries a fixed fraction of the section and ||D2u|| is bounded below on
A(x, t) = T^-1(E) by a multiple of ||T|| ||T*|| / (det T)^{2/n}.
"""
from dataclasses import dataclass, field

import numpy as np

from ..convex.body import unit_ball_volume
from ..convex.envelope import convex_envelope
from ..convex.plfunc import slope_cells
from ..errors import EmptyContactSet
from .normalize import cell_volume
from .samples import normalized

EPS_GRID = (0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
CONTACT_RTOL = 1e-6
FRACTION_FLOOR = 0.05
HESS_FLOOR = 0.01
DIRECTIONS = np.array([[1, 0], [0, 1], [1, 1], [1, -1]])


def abp_constant(n):
    """(n / omega_{n-1}) (2n)^{n-1} n: Alexandrov's estimate on a normalized
    body (diameter <= 2n, distance to the boundary <= n)."""
    return n / unit_ball_volume(n - 1) * (2 * n) ** (n - 1) * n


def paraboloid(z, c1):
    n = z.shape[1]
    return 0.5 * c1 * (np.sum(z ** 2, axis=1) / n ** 2 - 1.0)


def random_rotations(n, count, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        Q, R = np.linalg.qr(rng.normal(size=(n, n)))
        Q = Q * np.sign(np.diag(R))
        if np.linalg.det(Q) < 0:
            Q[:, 0] *= -1
        out.append(Q)
    return out


@dataclass
class SectionContact:
    node: int
    t: float
    size: float               # ||T|| ||T*|| / (det T)^(2/n)
    contact: np.ndarray       # node ids of A(x, t)
    fractions: np.ndarray     # per eps of the grid
    floor: float              # min over A of ||D2u|| / size
    chain: np.ndarray         # (c1/2)^n, |inf Gamma|^n, C|dGamma(E)|, C sum|dv|, C Lam |E|
    chain_local: float        # Alexandrov bound with the actual diameter/distance
    E_over_Z: float
    second_diff_ok: float     # share of (node, direction) pairs passing
    envelope_ok: bool         # 0 <= d2 Gamma <= d2 w at contact nodes
    rotation_dev: float

    @property
    def chain_ok(self):
        c = self.chain
        tol = 1e-9 * np.abs(c).max()
        return bool(np.all(np.diff(c[:4]) >= -tol)
                    and c[4] >= c[3] * (1 - 1e-6) - tol)


@dataclass
class ContactResult:
    eps: np.ndarray
    c1: float
    sections: list
    skipped: list = field(default_factory=list)

    @property
    def fractions(self):
        return np.array([s.fractions for s in self.sections])

    @property
    def floors(self):
        return np.array([s.floor for s in self.sections])

    @property
    def C2_0(self):
        return float(self.fractions[:, 0].min())

    @property
    def eps1(self):
        """Largest eps of the grid keeping every fraction >= C2_0 / 2."""
        inf = self.fractions.min(axis=0)
        ok = inf >= 0.5 * self.C2_0
        k = np.flatnonzero(~ok)
        last = (k[0] - 1) if len(k) else len(self.eps) - 1
        return float(self.eps[max(last, 0)])

    @property
    def C2(self):
        m = self.eps <= self.eps1
        return float(self.fractions[:, m].min())

    @property
    def C3(self):
        return float(self.floors.min())

    @property
    def c_prime(self):
        return float(min(s.E_over_Z for s in self.sections))

    def section_pass(self, frac_floor=FRACTION_FLOOR, hess_floor=HESS_FLOOR):
        m = self.eps <= self.eps1
        return np.array([s.fractions[m].min() >= frac_floor
                         and s.floor >= hess_floor and s.chain_ok
                         and s.second_diff_ok == 1.0 and s.envelope_ok
                         for s in self.sections])

    def verdicts(self):
        return {
            "C2_positive": bool(self.C2 > 0),
            "C3_positive": bool(self.C3 > 0),
            "pass_share": float(self.section_pass().mean()),
            "chain_share": float(np.mean([s.chain_ok for s in self.sections])),
            "rotation_dev": float(max(s.rotation_dev for s in self.sections)),
        }


def _second_differences(N, local, E, Gam, w, v):
    """Directional second differences at contact nodes along the lattice
    directions whose two neighbours lie in the section."""
    u = N.u
    lat = u.lattice
    pos = np.full(len(u.nodes), -1)
    pos[local] = np.arange(len(local))
    shape = np.array(lat.ids.shape)
    k0 = lat.index[E] - lat.kmin
    rows = []
    for d in DIRECTIONS:
        kp, km = k0 + d, k0 - d
        okp = np.all((kp >= 0) & (kp < shape), axis=1)
        okm = np.all((km >= 0) & (km < shape), axis=1)
        ok = okp & okm
        jp = np.full(len(E), -1)
        jm = np.full(len(E), -1)
        jp[ok] = lat.ids[tuple(kp[ok].T)]
        jm[ok] = lat.ids[tuple(km[ok].T)]
        ok &= (jp >= 0) & (jm >= 0)
        ok[ok] &= (pos[jp[ok]] >= 0) & (pos[jm[ok]] >= 0)
        if not ok.any():
            continue
        a, b, c = pos[jp[ok]], pos[E[ok]], pos[jm[ok]]
        step = N.T.A @ (lat.basis @ d)
        rows.append(np.c_[Gam[a] + Gam[c] - 2 * Gam[b],
                          w[a] + w[c] - 2 * w[b],
                          v[a] + v[c] - 2 * v[b],
                          np.full(ok.sum(), step @ step)])
    return np.vstack(rows) if rows else np.zeros((0, 4))


def contact_section(N, c1, eps=EPS_GRID, Lam=None, rotations=()):
    """Contact set analysis of one normalized section."""
    n = N.n
    local = N.nodes
    z = N.z[local]
    v = N.v[local]
    w = v - paraboloid(z, c1)
    env = convex_envelope(z, w, boundary_points=N.Z.vertices,
                          boundary_value=0.0, rtol=CONTACT_RTOL)
    if not env.contact.any():
        raise EmptyContactSet(f"no contact node in the section at node {N.S.i}")
    E = local[env.contact]
    g = N.S.g
    size = N.T.size()
    denom = len(local)
    fr = np.array([np.sum(g[E] <= (1 - e) * N.t) / denom for e in eps])
    floor = float(np.nanmin(N.u.hess_norm[E]) / size)

    # measure chain
    allx = np.vstack([z, N.Z.vertices])
    cidx = np.flatnonzero(env.contact)
    areas, _, _ = slope_cells(allx, env.hull.simplices, env.hull.slopes, cidx)
    inf_g = float(env.values.min())
    C = abp_constant(n)
    pos = np.full(len(N.u.nodes), -1)
    pos[N.u.interior] = np.arange(len(N.u.interior))
    # dv(Tx) = (det T)^{2/n} (T^-1)* (du(x) - p): volume factor det T
    cells_v = N.T.det * N.u.cell_areas[pos[E]]
    vol = N.T.det * cell_volume(N.u)
    if Lam is None:
        Lam = float(np.max(N.u.cell_areas[pos[E]]) / cell_volume(N.u))
    chain = np.array([(0.5 * c1) ** n, abs(inf_g) ** n, C * areas.sum(),
                      C * cells_v.sum(), C * Lam * vol * len(E)])
    x0 = z[np.argmin(env.values)]
    local_C = (n / unit_ball_volume(n - 1) * N.Z.diameter ** (n - 1)
               * N.Z.distance_to_boundary(x0[None])[0])
    chain_local = local_C * areas.sum()

    # second differences along lattice directions
    sd = _second_differences(N, local, E, env.values, w, v)
    tol = 2 * env.tol + 1e-12
    need = c1 * sd[:, 3] / n ** 2
    sd_ok = sd[:, 2] >= need - tol
    env_ok = bool(np.all(sd[:, 0] >= -tol) and np.all(sd[:, 0] <= sd[:, 1] + tol))

    dev = 0.0
    for R in rotations:
        RA = R @ N.T.A
        s = (np.linalg.norm(RA, 2) * np.linalg.norm(RA.T, 2)
             / np.linalg.det(RA) ** (2.0 / n))
        dev = max(dev, abs(s - size) / size)

    return SectionContact(N.S.i, N.t, size, E, fr, floor, chain,
                          float(chain_local), float(vol * len(E) / N.Z.volume),
                          float(sd_ok.mean()) if len(sd_ok) else 1.0, env_ok,
                          dev)


def verify_hesssupermean(u, samples, eps=EPS_GRID, c1=None, Lam=None,
                         n_rotations=10, seed=0):
    """Measure C2, C3 and eps1 over sampled sections.

    ``c1`` defaults to the smallest |inf v| over the samples, so that
    |inf v| >= c1 holds on each of them.

    Raises
    ------
    EmptyContactSet
        If a section has no contact node.
    """
    Ns, skipped = normalized(u, samples)
    if c1 is None:
        c1 = min(abs(N.inf_v) for N in Ns)
    if Lam is None:
        problem = getattr(u, "problem", None)
        Lam = getattr(problem, "Lam", None)
    rots = random_rotations(Ns[0].n, n_rotations, seed) if Ns else []
    eps = np.asarray(eps, float)
    out = [contact_section(N, c1, eps, Lam, rots) for N in Ns]
    return ContactResult(eps, float(c1), out, skipped)
