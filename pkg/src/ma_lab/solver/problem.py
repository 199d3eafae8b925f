"""Monge-Ampere Dirichlet problems and their lattice discretization."""
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import shapely

from ..convex.body import ConvexBody
from ..convex.plfunc import Lattice
from ..errors import InfeasibleMass, UnknownName, ValidationError

MIN_NODES_PER_AXIS = 16
BLOCK = 1.0 / 8.0       # side of the blocks carrying rough densities
_TABLE = 128            # rough densities are tabulated on [-8, 8)^2


class Density:
    """Density f with lam <= f <= Lam.

    kind ``const``
        f = value (default lam).
    kind ``random``
        each block of side 1/8 takes lam or Lam with probability 1/2,
        drawn from ``seed``.
    kind ``checker``
        lam and Lam alternate on the blocks.

    The rough kinds are defined on a fixed continuum partition, so the
    same seed gives the same f on every grid.
    """

    KINDS = ("const", "random", "checker")

    def __init__(self, kind="const", lam=1.0, Lam=1.0, seed=0, value=None,
                 block=BLOCK):
        if kind not in self.KINDS:
            raise UnknownName(f"unknown density kind {kind!r}")
        lam, Lam = float(lam), float(Lam)
        if not 0 < lam <= Lam:
            raise ValidationError(f"need 0 < lambda <= Lambda, got {lam}, {Lam}")
        if kind == "const":
            value = lam if value is None else float(value)
            if not lam <= value <= Lam:
                raise ValidationError("constant density outside [lambda, Lambda]")
        self.kind, self.lam, self.Lam = kind, lam, Lam
        self.seed, self.value, self.block = int(seed), value, float(block)
        if kind == "random":
            rng = np.random.default_rng(self.seed)
            self._table = np.where(rng.random((_TABLE, _TABLE)) < 0.5, lam, Lam)

    def __call__(self, points):
        points = np.atleast_2d(points)
        if self.kind == "const":
            return np.full(len(points), self.value)
        k = np.floor(points[:, :2] / self.block).astype(np.int64)
        if self.kind == "checker":
            return np.where((k.sum(axis=1) % 2) == 0, self.Lam, self.lam)
        k = k + _TABLE // 2
        if k.min() < 0 or k.max() >= _TABLE:
            raise ValidationError("rough density only tabulated on [-8, 8)^2")
        return self._table[k[:, 0], k[:, 1]]

    def to_json(self):
        doc = {"kind": self.kind, "lambda": self.lam, "Lambda": self.Lam,
               "seed": self.seed}
        if self.kind == "const":
            doc["value"] = self.value
        return doc

    @classmethod
    def from_json(cls, doc):
        return cls(doc.get("kind", "const"), doc.get("lambda", 1.0),
                   doc.get("Lambda", doc.get("lambda", 1.0)),
                   doc.get("seed", 0), doc.get("value"))


def make_domain(spec, h=None):
    """ConvexBody from a JSON domain spec, curved domains polygonized at h."""
    if isinstance(spec, ConvexBody):
        return spec
    kind = spec.get("kind", "polygon")
    if kind == "disc":
        return ConvexBody.disc(spec.get("radius", 1.0), spec.get("center", (0, 0)),
                               h=h)
    if kind == "ellipse":
        return ConvexBody.ellipse(spec["axes"], spec.get("center", (0, 0)), h=h)
    if kind == "box":
        return ConvexBody.box(spec["lo"], spec["hi"])
    if kind == "polygon":
        return ConvexBody(spec["vertices"])
    raise UnknownName(f"unknown domain kind {kind!r}")


def grid_spacing(domain, grid):
    """``grid >= 1`` is a resolution N (h = bbox width / N), else h itself."""
    grid = float(grid)
    if grid <= 0:
        raise ValidationError("grid must be positive")
    if grid >= 1:
        lo, hi = domain.bbox()
        return float(np.max(hi - lo)) / grid
    return grid


@dataclass
class Discretization:
    """Nodes of a lattice discretization and the target masses."""
    nodes: np.ndarray
    boundary: np.ndarray
    lattice: Lattice
    dual_area: np.ndarray   # interior nodes only
    f: np.ndarray           # density at interior nodes
    mu: np.ndarray          # interior nodes only
    h: float
    domain: ConvexBody

    @property
    def interior(self):
        return np.flatnonzero(~self.boundary)


def _boundary_nodes(domain, h):
    v = domain.vertices
    w = np.roll(v, -1, axis=0)
    pts = []
    for a, b in zip(v, w):
        m = max(1, int(np.ceil(np.linalg.norm(b - a) / h - 1e-9)))
        s = np.arange(m)[:, None] / m
        pts.append(a + s * (b - a))
    return np.vstack(pts)


def lattice_nodes(domain, h, margin=0.3):
    """Lattice points ``c + h k`` at distance >= margin*h from the boundary,
    plus boundary nodes on the polygon at spacing <= h."""
    lo, hi = domain.bbox()
    c = 0.5 * (lo + hi)
    kmax = np.ceil((hi - c) / h).astype(int) + 1
    axes = [np.arange(-k, k + 1) for k in kmax]
    K = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(c))
    X = c + h * K
    keep = domain.distance_to_boundary(X) >= margin * h
    K, X = K[keep], X[keep]
    span = K.max(axis=0) - K.min(axis=0) + 1 if len(K) else np.zeros(len(c))
    if len(K) == 0 or span.min() < MIN_NODES_PER_AXIS:
        raise ValidationError(
            f"h={h:.4g} leaves fewer than {MIN_NODES_PER_AXIS} nodes per axis")
    B = _boundary_nodes(domain, h)
    nodes = np.vstack([X, B])
    boundary = np.r_[np.zeros(len(X), bool), np.ones(len(B), bool)]
    index = np.vstack([K, np.zeros((len(B), len(c)), int)])
    lat = Lattice(c, h * np.eye(len(c)), index, ~boundary)
    return nodes, boundary, lat


def dual_areas(points, domain):
    """Areas of the Voronoi cells of ``points`` clipped to the domain."""
    poly = shapely.Polygon(domain.vertices)
    vor = shapely.voronoi_polygons(shapely.MultiPoint(points), extend_to=poly,
                                   ordered=True)
    cells = np.asarray(shapely.get_parts(vor))
    return shapely.area(shapely.intersection(cells, poly))


class MAProblem:
    """det D^2 u = f in the domain, u = 0 on its boundary.

    Parameters
    ----------
    domain : ConvexBody or dict
        Polygon, or a JSON spec (curved shapes are polygonized at the
        grid spacing when discretized).
    density : Density
    """

    def __init__(self, domain, density):
        self.domain_spec = domain
        self.density = density

    @property
    def lam(self):
        return self.density.lam

    @property
    def Lam(self):
        return self.density.Lam

    def domain(self, h=None):
        return make_domain(self.domain_spec, h)

    @cached_property
    def reference_domain(self):
        return self.domain(None)

    def spacing(self, grid):
        return grid_spacing(self.reference_domain, grid)

    def discretize(self, grid):
        h = self.spacing(grid)
        dom = self.domain(h)
        nodes, boundary, lat = lattice_nodes(dom, h)
        inner = nodes[~boundary]
        area = dual_areas(inner, dom)
        f = self.density(inner)
        if not (np.all(f >= self.lam) and np.all(f <= self.Lam)):
            raise ValidationError("density leaves [lambda, Lambda]")
        mu = f * area
        if not mu.sum() > 0:
            raise InfeasibleMass("total mass is zero")
        return Discretization(nodes, boundary, lat, area, f, mu, h, dom)

    def to_json(self):
        spec = self.domain_spec
        if isinstance(spec, ConvexBody):
            spec = {"kind": "polygon", "vertices": spec.vertices.tolist()}
        return {"domain": spec, "f": self.density.to_json()}

    @classmethod
    def from_json(cls, doc):
        return cls(doc["domain"], Density.from_json(doc.get("f", {})))
