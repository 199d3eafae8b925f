import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ma_lab.convex.affine import AffineMap
from ma_lab.convex.body import ConvexBody, unit_ball_volume
from ma_lab.convex.envelope import convex_envelope
from ma_lab.convex.john import john_normalize, normalization_report
from ma_lab.errors import BoundaryStencil, DegenerateBody, NonConvexInput
from ma_lab.solver.measure import ma_measure


# ---------------------------------------------------------------- ConvexBody

def test_body_drops_interior_and_collinear_points():
    pts = [[0, 0], [1, 0], [2, 0], [2, 2], [0, 2], [1, 1]]
    B = ConvexBody(pts)
    assert len(B.vertices) == 4
    assert B.volume == pytest.approx(4.0)
    assert np.allclose(B.centroid, [1, 1])


def test_body_rejects_flat_input():
    with pytest.raises(DegenerateBody):
        ConvexBody([[0, 0], [1, 1], [2, 2]])
    with pytest.raises(DegenerateBody):
        ConvexBody([[0, 0], [1, 0]])


def test_membership_agrees_between_representations(rng):
    B = ConvexBody(rng.normal(size=(30, 2)))
    q = rng.normal(size=(2000, 2)) * 1.5
    by_facets = B.contains(q, tol=0)
    # vertex representation: q is in the hull of the vertices plus q
    by_hull = np.array([len(ConvexBody(np.vstack([B.vertices, p])).vertices)
                        == len(B.vertices)
                        and np.allclose(ConvexBody(np.vstack([B.vertices, p])).vertices,
                                        B.vertices)
                        for p in q[:300]])
    far = np.abs(B.distance_to_boundary(q[:300])) > 1e-9
    assert np.array_equal(by_facets[:300][far], by_hull[far])


def test_body_three_dimensional_box():
    B = ConvexBody.box([-1, -1, -1], [1, 1, 1])
    assert B.dim == 3 and B.volume == pytest.approx(8.0)
    assert B.inradius_at(np.zeros(3)) == pytest.approx(1.0)


def test_gauge_and_dilation():
    B = ConvexBody.box([-1, -1], [1, 1])
    assert B.gauge([[0.5, 0.0]], [0, 0])[0] == pytest.approx(0.5)
    D = B.dilate(0.5, [1, 1])
    assert np.allclose(D.bbox()[0], [0, 0]) and np.allclose(D.bbox()[1], [1, 1])


def test_body_json_roundtrip(rng):
    B = ConvexBody(rng.normal(size=(12, 2)))
    C = ConvexBody.from_json(B.to_json())
    assert np.allclose(B.vertices, C.vertices)


# ---------------------------------------------------------------- AffineMap

def test_affine_norm_identity_and_inverse(rng):
    for _ in range(50):
        A = rng.normal(size=(2, 2))
        if np.linalg.det(A) < 0:
            A[:, 0] *= -1
        T = AffineMap(A, rng.normal(size=2))
        assert abs(np.linalg.norm(A.T @ A, 2) - T.norm * T.adjoint_norm) <= 1e-9 * T.norm ** 2
        x = rng.normal(size=(5, 2))
        assert np.allclose(T.inverse(T(x)), x, atol=1e-9)
        assert np.allclose((T @ T.inverse).A, np.eye(2), atol=1e-9)


def test_affine_rejects_orientation_reversal():
    with pytest.raises(ValueError):
        AffineMap(np.diag([1.0, -1.0]))


def test_size_invariant_under_rotation(rng):
    T = AffineMap(np.array([[3.0, 1.0], [0.0, 0.5]]))
    for _ in range(10):
        th = rng.uniform(0, 2 * np.pi)
        R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        assert AffineMap(R @ T.A).size() == pytest.approx(T.size(), rel=1e-12)


# ---------------------------------------------------------------- John

def test_john_square_is_identity():
    T = john_normalize(ConvexBody.box([-1, -1], [1, 1]))
    assert np.allclose(T.A, np.eye(2), atol=1e-8)
    assert np.allclose(T.b, 0, atol=1e-8)


def test_john_ellipse_closed_form():
    E = ConvexBody.ellipse((2.0, 0.5), segments=720)
    T = john_normalize(E)
    # the John ellipse of a fine inscribed polygon tends to the ellipse
    assert np.allclose(np.sort(np.linalg.svd(T.A, compute_uv=False)), [0.5, 2.0],
                       rtol=2e-4)
    assert T.det == pytest.approx(1.0, rel=5e-4)


def test_john_triangle_against_brute_force():
    tri = ConvexBody([[0, 0], [4, 0], [0, 4]])
    T = john_normalize(tri)
    r = normalization_report(tri, T)
    assert r["inner_ok"] and r["outer_ok"] and r["det_ok"]
    # brute force: largest inscribed ellipse over a grid of centers and shapes
    A, b = tri.facets
    best = 0.0
    for cx in np.linspace(1.0, 1.7, 15):
        for cy in np.linspace(1.0, 1.7, 15):
            c = np.array([cx, cy])
            for a in np.linspace(0.6, 1.6, 21):
                for s in np.linspace(-0.6, 0.6, 13):
                    for d in np.linspace(0.6, 1.6, 21):
                        M = np.array([[a, s], [s, d]])
                        if np.linalg.det(M) <= 0:
                            continue
                        if np.all(np.linalg.norm(A @ M, axis=1) + A @ c <= b):
                            best = max(best, np.linalg.det(M))
    # John's inscribed ellipse is T^-1(B(0,1)) with area pi / det T
    assert 1.0 / T.det >= best * (1 - 1e-9)
    assert 1.0 / T.det <= best * 1.05


def test_john_det_bounds_and_inclusions_random(rng):
    for _ in range(25):
        B = ConvexBody(rng.normal(size=(rng.integers(4, 40), 2)) * rng.uniform(0.1, 5))
        r = normalization_report(B, john_normalize(B))
        assert r["inner_radius"] >= 1 - 1e-6
        assert r["outer_radius"] <= 2 + 1e-6
        assert r["det_ok"]


def test_john_three_dimensional():
    B = ConvexBody.box([0, 0, 0], [2, 1, 4])
    r = normalization_report(B, john_normalize(B))
    assert r["inner_ok"] and r["outer_ok"] and r["det_ok"]


def test_john_degenerate_body():
    with pytest.raises(DegenerateBody):
        john_normalize(ConvexBody([[0, 0], [1, 0], [0.5, 1e-14]], tol=1e-16))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(-10, 10), st.floats(-10, 10)),
                min_size=4, max_size=25))
def test_john_inclusion_property(points):
    try:
        B = ConvexBody(np.array(points))
    except DegenerateBody:
        return
    ext = np.ptp(B.vertices, axis=0)
    if B.volume < 1e-3 * max(ext.max(), 1e-12) ** 2:
        return
    try:
        T = john_normalize(B)
    except DegenerateBody:
        return
    r = normalization_report(B, T)
    assert r["inner_ok"] and r["outer_ok"] and r["det_ok"]


# ---------------------------------------------------------------- envelope

def test_envelope_of_convex_data_is_itself(rng):
    x = rng.uniform(-1, 1, size=(400, 2))
    w = np.sum(x ** 2, axis=1)
    env = convex_envelope(x, w)
    assert env.contact.all()
    assert np.allclose(env.values, w, atol=1e-12)


def test_envelope_below_data_and_convex(rng):
    x = rng.uniform(-1, 1, size=(400, 2))
    w = np.sin(3 * x[:, 0]) + np.cos(2 * x[:, 1])
    env = convex_envelope(x, w)
    assert np.all(env.values <= w + 1e-12)
    # convexity: envelope values stay on their own lower hull
    env2 = convex_envelope(x, env.values)
    assert np.allclose(env2.values, env.values, atol=1e-10)
    gap = w[env.contact] - env.values[env.contact]
    assert np.all(np.abs(gap) <= 1e-8 * (1 + np.abs(w[env.contact])))


def test_envelope_boundary_constraint():
    g = np.linspace(-1, 1, 41)
    X, Y = np.meshgrid(g, g)
    x = np.c_[X.ravel(), Y.ravel()]
    w = 0.5 * np.sum(x ** 2, axis=1) - 0.5
    corners = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], float)
    env = convex_envelope(x, w, boundary_points=corners, boundary_value=-2.0)
    assert np.all(env.values <= -2.0 + 1e-12)
    assert not env.contact.any()


# ---------------------------------------------------------------- PL functions

def test_pl_function_invariants(quad64, rough64):
    for sol in (quad64, rough64):
        u = sol.u
        assert u.is_convex(1e-8)
        rep = u.convexity_report()
        assert rep["min_eig"] >= -1e-8 * max(1.0, np.nanmax(u.hess_norm))
        H = u.hessians
        ok = u.has_stencil
        assert np.allclose(H[ok], np.swapaxes(H[ok], 1, 2))
        assert np.all(u.hess_norm[ok] <= u.laplacian[ok] + 1e-8)


def test_quadratic_hessian_exact(quad64):
    u = quad64.u
    ok = u.has_stencil
    assert np.allclose(u.hessians[ok], np.eye(2), atol=1e-9)


def test_boundary_stencil_error(quad64):
    u = quad64.u
    bad = np.flatnonzero(~u.has_stencil)[0]
    with pytest.raises(BoundaryStencil):
        u.discrete_hessian(bad)


def test_measure_of_subdifferential(quad64):
    u = quad64.u
    # f = 1: the total Monge-Ampere mass is close to the area of the domain
    assert ma_measure(u) == pytest.approx(u.domain.volume, rel=0.05)


def test_nonconvex_input_rejected(quad64):
    from ma_lab.convex.plfunc import PLConvexFunction
    u = quad64.u
    vals = u.values.copy()
    vals[u.interior[len(u.interior) // 2]] += 0.5
    v = PLConvexFunction(u.nodes, vals, u.boundary, u.lattice, u.domain)
    with pytest.raises(NonConvexInput):
        ma_measure(v)


def test_unit_ball_volume():
    assert unit_ball_volume(2) == pytest.approx(np.pi)
    assert unit_ball_volume(3) == pytest.approx(4 * np.pi / 3)
    assert unit_ball_volume(1) == pytest.approx(2.0)
