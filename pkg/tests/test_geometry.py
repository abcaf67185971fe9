import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, optimize

from hyplab.geometry import (
    ORIGIN,
    BoundaryArc,
    BoundaryPoint,
    DiskPoint,
    GeometryError,
    UnitTangent,
    apply_boundary,
    apply_point,
    busemann,
    busemann_limit,
    dist_array,
    flow_closed_form,
    geodesic_endpoints,
    geodesic_triangle_area,
    gromov_product,
    gromov_product_via,
    hyp_dist,
    ideal_triangle_area,
    random_isometry,
    ray_point,
    shadow_arc,
    tangent_between,
)

from helpers import boundary_points, disk_points, distinct_pair, random_disk_points, tangents


# -- types -------------------------------------------------------------------


def test_disk_point_rejects_outside():
    with pytest.raises(GeometryError):
        DiskPoint(1.0, 0.1)


def test_boundary_point_reduced_mod_two_pi():
    assert BoundaryPoint(2.0 * math.pi + 0.3) == BoundaryPoint(0.3)
    assert 0.0 <= BoundaryPoint(-0.1).theta < 2.0 * math.pi


def test_arc_measure_and_halfwidth_guard():
    assert BoundaryArc(1.0, 0.25).measure == pytest.approx(0.5)
    with pytest.raises(GeometryError):
        BoundaryArc(0.0, 0.0)


# -- distance ----------------------------------------------------------------


def test_distance_identity():
    assert hyp_dist(ORIGIN, ORIGIN) == 0.0


def test_distance_matches_line_integral():
    r = 0.5
    val, _ = integrate.quad(lambda t: 2.0 / (1.0 - t * t), 0.0, r, epsabs=1e-14)
    assert hyp_dist(ORIGIN, DiskPoint(r, 0.0)) == pytest.approx(val, rel=1e-12)


def test_distance_isometry_invariance():
    rng = np.random.default_rng(1)
    for _ in range(100):
        m = random_isometry(rng)
        p, q = random_disk_points(rng, 2, 0.9)
        assert hyp_dist(apply_point(m, p), apply_point(m, q)) == pytest.approx(hyp_dist(p, q), abs=1e-10)


def test_dist_array_matches_scalar():
    rng = np.random.default_rng(2)
    pts = random_disk_points(rng, 50)
    p = pts[0]
    zs = np.array([q.z for q in pts])
    np.testing.assert_allclose(dist_array(p.z, zs), [hyp_dist(p, q) for q in pts], atol=1e-10)


@given(disk_points(), disk_points(), disk_points())
def test_distance_metric_axioms(p, q, r):
    assert hyp_dist(p, q) == pytest.approx(hyp_dist(q, p), abs=1e-9)
    assert hyp_dist(p, r) <= hyp_dist(p, q) + hyp_dist(q, r) + 1e-9


# -- geodesics ---------------------------------------------------------------


def test_endpoints_of_diameter():
    minus, plus = geodesic_endpoints(UnitTangent(ORIGIN, 0.0))
    assert minus == BoundaryPoint(math.pi)
    assert plus == BoundaryPoint(0.0)


@given(tangents(), st.floats(0.1, 5.0))
def test_endpoints_invariant_under_flow(v, t):
    a = geodesic_endpoints(v)
    b = geodesic_endpoints(flow_closed_form(v, t))
    assert a[0] == b[0] or abs(a[0].theta - b[0].theta) < 1e-9
    assert min(abs(a[1].theta - b[1].theta), 2 * math.pi - abs(a[1].theta - b[1].theta)) < 1e-9


@given(tangents())
def test_endpoints_swap_under_reversal(v):
    m, p = geodesic_endpoints(v)
    m2, p2 = geodesic_endpoints(v.reversed())
    assert m == p2 and p == m2


@given(tangents(0.6), st.floats(0.0, 4.0))
def test_closed_form_flow_has_unit_speed(v, t):
    assert hyp_dist(v.base, flow_closed_form(v, t).base) == pytest.approx(t, abs=1e-8)


# -- Busemann functions --------------------------------------------------------


@given(boundary_points(), disk_points())
def test_busemann_normalisation(xi, p):
    assert busemann(xi, p, p) == 0.0


@pytest.mark.parametrize("t", [1.0, 2.0, 5.0])
def test_busemann_along_ray(t):
    rng = np.random.default_rng(int(t))
    for _ in range(20):
        (p,) = random_disk_points(rng, 1, 0.8)
        xi = BoundaryPoint(rng.uniform(0, 2 * math.pi))
        assert busemann(xi, ray_point(p, xi, t), p) == pytest.approx(-t, abs=1e-9)


def test_busemann_closed_form_vs_limit_definition():
    rng = np.random.default_rng(3)
    for _ in range(200):
        q, p = random_disk_points(rng, 2, 0.8)
        xi = BoundaryPoint(rng.uniform(0, 2 * math.pi))
        assert busemann(xi, q, p) == pytest.approx(busemann_limit(xi, q, p, 30.0), abs=1e-6)


@given(boundary_points(), disk_points(), disk_points(), disk_points())
def test_busemann_cocycle(xi, z, q, p):
    assert busemann(xi, z, p) == pytest.approx(busemann(xi, z, q) + busemann(xi, q, p), abs=1e-9)


@given(boundary_points(), disk_points(), disk_points())
def test_busemann_one_lipschitz(xi, q, p):
    assert abs(busemann(xi, q, p)) <= hyp_dist(q, p) + 1e-9


@given(boundary_points(), disk_points(), disk_points(), st.integers(0, 2**32 - 1))
def test_busemann_isometry_invariance(xi, q, p, seed):
    m = random_isometry(np.random.default_rng(seed), 1.0)
    lhs = busemann(apply_boundary(m, xi), apply_point(m, q), apply_point(m, p))
    assert lhs == pytest.approx(busemann(xi, q, p), abs=1e-8)


# -- Gromov products -------------------------------------------------------------


def test_gromov_zero_on_geodesic():
    rng = np.random.default_rng(4)
    for _ in range(50):
        xi, eta = BoundaryPoint(rng.uniform(0, 6)), BoundaryPoint(rng.uniform(0, 6) + 0.3)
        q = flow_closed_form(tangent_between(xi, eta), rng.uniform(-2, 2)).base
        assert gromov_product(xi, eta, q) == pytest.approx(0.0, abs=1e-9)


@given(distinct_pair(), disk_points(0.9))
def test_gromov_symmetric_and_nonnegative(pair, p):
    xi, eta = pair
    a, b = gromov_product(xi, eta, p), gromov_product(eta, xi, p)
    assert a >= 0.0
    assert a == pytest.approx(b, abs=1e-10)


@given(distinct_pair(0.05), disk_points(0.9), st.floats(-3.0, 3.0), st.floats(-3.0, 3.0))
def test_gromov_independent_of_point_on_geodesic(pair, p, s1, s2):
    xi, eta = pair
    v = tangent_between(xi, eta)
    a = gromov_product_via(xi, eta, p, flow_closed_form(v, s1).base)
    b = gromov_product_via(xi, eta, p, flow_closed_form(v, s2).base)
    assert a == pytest.approx(b, abs=1e-9)
    assert a == pytest.approx(gromov_product(xi, eta, p), abs=1e-8)


def test_gromov_is_gap_between_horospheres():
    # root-find where the geodesic (xi eta) crosses the horospheres through p
    rng = np.random.default_rng(5)
    for _ in range(40):
        xi = BoundaryPoint(rng.uniform(0, 2 * math.pi))
        eta = BoundaryPoint(xi.theta + rng.uniform(0.2, 2 * math.pi - 0.2))
        (p,) = random_disk_points(rng, 1, 0.8)
        v = tangent_between(xi, eta)

        def on(s):
            return flow_closed_form(v, s).base

        s_xi = optimize.brentq(lambda s: busemann(xi, on(s), p), -40, 40, xtol=1e-13)
        s_eta = optimize.brentq(lambda s: busemann(eta, on(s), p), -40, 40, xtol=1e-13)
        assert abs(s_eta - s_xi) == pytest.approx(gromov_product(xi, eta, p), abs=1e-7)


def test_gromov_rejects_coincident_points():
    with pytest.raises(GeometryError):
        gromov_product(BoundaryPoint(1.0), BoundaryPoint(1.0), ORIGIN)


# -- shadows -----------------------------------------------------------------


def _ray_ball_distance(theta, y):
    res = optimize.minimize_scalar(
        lambda t: hyp_dist(DiskPoint(math.tanh(t / 2) * math.cos(theta), math.tanh(t / 2) * math.sin(theta)), y),
        bounds=(0.0, 30.0),
        method="bounded",
        options={"xatol": 1e-12},
    )
    return res.fun


def test_shadow_halfwidth_matches_bisection():
    d, r = 3.0, 0.5
    y = DiskPoint(math.tanh(d / 2), 0.0)
    hw = shadow_arc(ORIGIN, y, r).halfwidth
    oracle = optimize.bisect(lambda th: _ray_ball_distance(th, y) - r, 1e-6, 1.0, xtol=1e-12)
    assert hw == pytest.approx(oracle, abs=1e-7)


def test_shadow_monotone_in_radius():
    y = DiskPoint(math.tanh(2.0), 0.0)
    widths = [shadow_arc(ORIGIN, y, r).halfwidth for r in (0.1, 0.5, 1.0, 2.0, 3.5)]
    assert np.all(np.diff(widths) > 0)


def test_shadow_visual_angle_scaling():
    vals = [shadow_arc(ORIGIN, DiskPoint(math.tanh(d / 2), 0.0), 1.0).halfwidth * math.exp(d) for d in np.linspace(3, 10, 15)]
    assert max(vals) / min(vals) < 10.0


def test_shadow_rejects_viewpoint_inside_ball():
    with pytest.raises(GeometryError):
        shadow_arc(ORIGIN, DiskPoint(0.1, 0.0), 1.0)


# -- areas -------------------------------------------------------------------


def test_ideal_triangle_symmetric():
    tri = [BoundaryPoint(k * 2 * math.pi / 3) for k in range(3)]
    assert ideal_triangle_area(*tri) == pytest.approx(math.pi, abs=1e-6)


def test_ideal_triangle_any_vertices():
    rng = np.random.default_rng(6)
    for _ in range(5):
        th = np.sort(rng.uniform(0, 2 * math.pi, 3))
        if np.min(np.diff(np.r_[th, th[0] + 2 * math.pi])) < 0.2:
            continue
        assert ideal_triangle_area(*(BoundaryPoint(t) for t in th)) == pytest.approx(math.pi, abs=1e-5)


def test_geodesic_triangle_area_below_pi_and_angle_defect():
    p, q, r = DiskPoint(0.5, 0.0), DiskPoint(-0.25, 0.4), DiskPoint(-0.25, -0.4)
    area = geodesic_triangle_area(p, q, r)
    assert 0.0 < area < math.pi
    from hyplab.geometry import polygon_interior_angle

    angles = [
        polygon_interior_angle(p.z, r.z, q.z),
        polygon_interior_angle(q.z, p.z, r.z),
        polygon_interior_angle(r.z, q.z, p.z),
    ]
    assert area == pytest.approx(math.pi - sum(angles), abs=1e-6)


def test_ideal_triangle_rejects_coincident_vertices():
    with pytest.raises(GeometryError):
        ideal_triangle_area(BoundaryPoint(0.0), BoundaryPoint(0.0), BoundaryPoint(2.0))
