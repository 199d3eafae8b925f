import numpy as np
import pytest

from ma_lab.convex.body import ConvexBody
from ma_lab.convex.envelope import convex_envelope
from ma_lab.lab.contact import abp_constant, verify_hesssupermean
from ma_lab.lab.hessmean import verify_hessmean
from ma_lab.lab.levelsets import verify_levelsets, verify_maximal_inequality
from ma_lab.lab.main_thm import (keyestimate, keyestimate_samples, layer_cake,
                                 llogk, llogk_integral, main_samples,
                                 verify_main)
from ma_lab.lab.normalize import normalize_section, region_weights
from ma_lab.lab.reduction import verify_reg_reduction
from ma_lab.lab.report import INEQUALITIES, EstimateReport
from ma_lab.errors import MixedSchema
from ma_lab.sections.maximal import maximal_field

LOG3 = np.log(3.0)


def center_node(u):
    return int(np.argmin(np.sum(u.nodes ** 2, 1) + 10 * u.boundary))


# ---------------------------------------------------------------- normalization

def test_normalized_quadratic_closed_form(quad64):
    # S(x,t) is the disc of radius r = sqrt(2t); T scales it to the unit disc,
    # (det T)^{2/n} = 1/r^2 and v = |z|^2/2 - 1/2 with D2v = Id
    u = quad64.u
    t = 0.05
    N = normalize_section(u, center_node(u), t)
    assert N.T.det == pytest.approx(1 / (2 * t), rel=0.01)
    assert N.inf_v == pytest.approx(-0.5, rel=0.01)
    H = N.pulled_hessians(N.nodes)
    ok = np.all(np.isfinite(H), axis=(1, 2))
    assert np.allclose(H[ok], np.eye(2), atol=1e-9)
    rep = N.boundary_report()
    assert rep["v_on_dZ"] <= 1e-12
    assert rep["Z2_ok"]


def test_transformation_law(rough64):
    u = rough64.u
    N = normalize_section(u, center_node(u), 0.01)
    assert N.transformation_error() <= 0.05


def test_region_weights_sum_to_area(quad64):
    body = ConvexBody.disc(0.5, segments=256)
    _, w = region_weights(quad64.u, body)
    assert w.sum() == pytest.approx(body.volume, rel=1e-9)


# ---------------------------------------------------------------- Hessian mean

def test_hessmean_quadratic_ratio_one(quad64, quad_lab):
    r = verify_hessmean(quad64, quad_lab["normalized"])
    assert np.allclose(r.ratio, 1.0, rtol=0.05)
    assert r.verdicts()["grad_bound"]


def test_hessmean_anisotropic_ratio_one(aniso128):
    from ma_lab.lab.samples import sample_sections, unit_regions
    from ma_lab.sections.atlas import safe_height
    u = aniso128.u
    inner, outer = unit_regions(u.domain)
    rho = safe_height(u, inner, outer)
    r = verify_hessmean(aniso128, sample_sections(u, inner, rho, 10))
    # ||T|| ||T*|| / det T = a = ||D2u|| for sections of diag(a, 1/a) quadratics
    assert np.allclose(r.ratio, 1.0, rtol=0.05)
    assert np.allclose(r.size, 4.0, rtol=0.05)


def test_hessmean_rough_positive(rough64, rough_lab):
    r = verify_hessmean(rough64, rough_lab["normalized"])
    assert r.C1 > 0 and np.isfinite(r.c_grad)


# ---------------------------------------------------------------- contact sets

def test_constrained_envelope_radius():
    # w = (a - c/8)|z|^2 - (a - c/2) on the unit disc with Gamma <= 0 on the
    # circle touches w exactly on |z| <= 1 - sqrt(1 - m/k), m = a - c/2,
    # k = a - c/8
    a = c = 0.5
    m, k = a - c / 2, a - c / 8
    g = np.linspace(-1, 1, 201)
    X, Y = np.meshgrid(g, g)
    z = np.c_[X.ravel(), Y.ravel()]
    z = z[np.sum(z ** 2, 1) < 1]
    w = k * np.sum(z ** 2, 1) - m
    th = np.linspace(0, 2 * np.pi, 400, endpoint=False)
    env = convex_envelope(z, w, np.c_[np.cos(th), np.sin(th)], 0.0)
    r = np.linalg.norm(z[env.contact], axis=1).max()
    assert r == pytest.approx(1 - np.sqrt(1 - m / k), abs=0.02)


def test_hesssupermean_quadratic(quad64, quad_lab):
    r = verify_hesssupermean(quad64, quad_lab["normalized"][:15])
    v = r.verdicts()
    assert v["C2_positive"] and v["C3_positive"]
    assert v["chain_share"] == 1.0
    assert v["rotation_dev"] <= 1e-9
    # ||D2u|| = 1 and size = 1 on every section
    assert r.C3 == pytest.approx(1.0, rel=0.01)


def test_abp_constant_two_dimensions():
    assert abp_constant(2) == pytest.approx(2 / 2 * 4 * 2)


# ---------------------------------------------------------------- level sets

@pytest.fixture(scope="module")
def quad_mf(quad64, quad_lab):
    u = quad64.u
    ids, _ = region_weights(u, quad_lab["inner"])
    return maximal_field(u, quad_lab["inner"], quad_lab["outer"], quad_lab["rho"],
                         centers=ids[~u.boundary[ids]])


def test_levelsets_quadratic(quad64, quad_lab, quad_mf):
    # M = ||D2u|| = 1: |U/2| / |3U/4| = 4/9 at every rung below 1
    r = verify_levelsets(quad64.u, quad_lab["inner"], quad_lab["outer"],
                         quad_lab["rho"], quad_mf)
    assert r.C5 == 1.0
    assert r.C4 == pytest.approx(4 / 9, rel=0.01)


def test_maximal_inequality_quadratic(quad64, quad_lab, quad_mf):
    r = verify_maximal_inequality(quad64.u, quad_lab["inner"], quad_mf)
    assert r.holds
    assert r.C_prime == pytest.approx(1.0, rel=1e-6)


# ---------------------------------------------------------------- L log^k L

def test_llogk_closed_forms():
    F = np.array([1.0])
    w = np.array([1.0])
    assert llogk(F, w, 0) == pytest.approx(1.0)
    assert llogk(F, w, 2) == pytest.approx(LOG3 ** 2)
    assert LOG3 ** 2 == pytest.approx(1.2069, abs=1e-4)


def test_llogk_integral_quadratic(quad64, quad_lab):
    inner = quad_lab["inner"]
    assert llogk_integral(quad64, inner, 1) == pytest.approx(inner.volume * LOG3,
                                                             rel=1e-6)


def test_layer_cake_accuracy(rng):
    F = rng.lognormal(0.0, 1.0, 5000)
    w = np.full(F.size, 1e-3)
    for k in range(3):
        # layer_cake(k) rewrites int F log^{k+1}(2 + F)
        assert layer_cake(F, w, k) == pytest.approx(llogk(F, w, k + 1),
                                                      rel=0.01)


def test_main_quadratic_ratio(quad64, quad_lab):
    inner, outer = quad_lab["inner"], quad_lab["outer"]
    key = keyestimate(quad64, inner, outer)
    for k in range(3):
        r = verify_main(quad64, inner, outer, k, key)
        # |U/2| log^{k+1} 3 / (|3U/4| log^k 3)
        assert r.ratio == pytest.approx(4 / 9 * LOG3, rel=1e-3)
        assert r.layer_rel <= 0.01
        assert r.holds


def test_main_on_synthetic_samples(rng):
    Fo = rng.lognormal(0.5, 1.0, 4000)
    wo = np.full(Fo.size, 1e-3)
    Fi, wi = Fo[:1500], wo[:1500]
    key = keyestimate_samples(Fi, wi, Fo, wo)
    assert key.holds
    for k in range(3):
        r = main_samples(Fi, wi, Fo, wo, k, key)
        assert r.layer_ok and r.holds


# ---------------------------------------------------------------- reduction

def test_reduction_single_piece(quad64):
    region = ConvexBody.disc(0.02, segments=64)
    r = verify_reg_reduction(quad64.u, region)
    assert r.N == 1 and r.uncovered == 0
    assert r.holds


def test_reduction_covers_region(rough64):
    region = ConvexBody.disc(0.15, segments=64)
    r = verify_reg_reduction(rough64.u, region, ks=(0, 1))
    assert r.uncovered == 0 and r.transforms_ok and r.holds
    assert 0 < r.r1 <= r.r2


# ---------------------------------------------------------------- report

def test_pipeline_rows_cover_every_inequality(quad_pipeline):
    rep = quad_pipeline.report
    ids = {r["inequality_id"].split(":")[0] for r in rep.rows}
    assert ids == set(INEQUALITIES)
    assert rep.passed, rep.failures()
    assert rep.constants["C1"] == pytest.approx(1.0, rel=0.05)


def test_rough_pipeline_verdicts(rough_pipeline):
    rep = rough_pipeline.report
    # the divergence identity is the only discretization-limited row at 64^2
    assert set(rep.failures()) <= {"divergence"}
    for key in ("C1", "C2", "C3", "C4", "C_prime"):
        assert rep.constants[key] > 0


def test_report_roundtrip(quad_pipeline):
    rep = quad_pipeline.report
    back = EstimateReport.from_json(rep.to_json())
    assert back.to_csv() == rep.to_csv()
    doc = rep.to_json()
    doc["schema"] = "other/0"
    with pytest.raises(MixedSchema):
        EstimateReport.from_json(doc)
    with pytest.raises(KeyError):
        rep.add("made_up", 1, 1, 1, True)
