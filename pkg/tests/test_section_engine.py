import numpy as np
import pytest

from ma_lab.errors import EscapesDomain, NotCovered
from ma_lab.lab.samples import sample_sections, unit_regions
from ma_lab.sections.atlas import (nodes_in, safe_height, verify_engulfing,
                                   verify_section_chain)
from ma_lab.sections.cover import cover
from ma_lab.sections.maximal import maximal_field
from ma_lab.sections.section import section


def test_quadratic_section_is_disc(quad64):
    u = quad64.u
    i = int(np.argmin(np.sum(u.nodes ** 2, 1) + 10 * u.boundary))
    t = 0.08
    S = section(u, i, t)
    r = np.sqrt(2 * t)
    d = np.linalg.norm(S.vertices - S.x, axis=1)
    # exact PL sublevel set of the interpolant: inscribed in the disc
    assert d.max() <= r + 1e-12
    assert d.min() >= r - u.lattice.h ** 2
    assert S.volume == pytest.approx(np.pi * r * r, rel=0.01)


def test_escapes_domain(quad64):
    u = quad64.u
    with pytest.raises(EscapesDomain):
        section(u, u.interior[0], 1.0)


def test_engulfing_constants_on_quadratic(quad64, quad_lab):
    u = quad64.u
    res = verify_engulfing(u, quad_lab["samples"])
    # beta(tau) = sqrt(tau), theta = 9 for |x|^2/2
    for tau in (0.25, 0.5, 0.75):
        assert res["beta"][tau] == pytest.approx(np.sqrt(tau), rel=0.05)
    assert res["pairs"] > 0
    assert res["theta"] <= 9 * 1.05


def test_engulfing_on_rough(rough64, rough_lab):
    res = verify_engulfing(rough64.u, rough_lab["samples"])
    assert all(0 < res["beta"][t] < 1 for t in (0.25, 0.5, 0.75))
    assert res["theta"] > 1


def test_section_chain(rough64, rough_lab):
    u = rough64.u
    for i, t in rough_lab["samples"][:30:3]:
        r = verify_section_chain(u, i, t * 0.5 ** np.arange(6))
        assert r["monotone"] and r["double"]
        assert r["double_gauge"] <= 1 + 1e-9


def test_safe_height(quad64):
    u = quad64.u
    inner, outer = unit_regions(u.domain)
    rho = safe_height(u, inner, outer)
    # exact: sections of |x|^2/2 are discs of radius sqrt(2t), and from
    # |x| <= 1/2 they must stay inside |x| <= 3/4, so 2 rho = 1/32
    assert rho == pytest.approx(1 / 64, rel=0.05)
    for i in nodes_in(u, inner)[::50]:
        S = section(u, int(i), 2 * rho)
        assert outer.contains(S.vertices, tol=1e-9).all()


def test_cover_counts(quad64):
    u = quad64.u
    inner, _ = unit_regions(u.domain)
    A = nodes_in(u, inner)
    res = cover(u, A, 0.01, 0.1)
    assert res.covered.all()
    assert 1 <= res.max_overlap
    assert res.K == pytest.approx(res.max_overlap / np.log(10))
    # shrinking sections more cannot increase overlaps
    res2 = cover(u, A, 0.01, 0.5)
    assert res2.max_overlap <= res.max_overlap
    with pytest.raises(ValueError):
        cover(u, A, 0.01, 1.5)


def test_cover_rejects_boundary_center(quad64):
    u = quad64.u
    b = np.flatnonzero(u.boundary)[:1]
    with pytest.raises(NotCovered):
        cover(u, np.r_[u.interior[:5], b], 0.0, 0.1)


def test_maximal_function_of_quadratics(quad64, aniso128):
    u = quad64.u
    inner, outer = unit_regions(u.domain)
    mf = maximal_field(u, inner, outer, safe_height(u, inner, outer))
    assert np.allclose(mf.M[np.isfinite(mf.M)], 1.0, atol=1e-9)
    v = aniso128.u
    inner, outer = unit_regions(v.domain)
    mf = maximal_field(v, inner, outer, safe_height(v, inner, outer))
    # ||D2u|| = 4 everywhere for diag(4, 1/4)
    assert np.allclose(mf.M[np.isfinite(mf.M)], 4.0, atol=1e-9)
