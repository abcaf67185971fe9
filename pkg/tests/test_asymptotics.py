import math

import numpy as np
import pytest
from scipy.special import expi

from hyplab.asymptotics import (
    bm_total_mass,
    equidistribution_probe,
    geodesic_length_in_domain,
    margulis_count,
    margulis_function,
    orbit_count_asymptotic,
    sphere_volume_jacobi,
)
from hyplab.flow import Bump, MetricSpec
from hyplab.geometry import ORIGIN, DiskPoint, UnitTangent, flow_closed_form, hyp_dist
from hyplab.groups import conj_classes_up_to, preset
from hyplab.patterson import InsufficientData, critical_exponent

OCT = preset("genus2-octagon")
SCH = preset("schottky2")
HYP = MetricSpec.constant(-1.0)


@pytest.fixture(scope="module")
def delta():
    return critical_exponent(OCT, ORIGIN, (7.0, 8.0, 9.0, 10.0)).delta


@pytest.fixture(scope="module")
def delta_sch():
    return critical_exponent(SCH, ORIGIN, (7.0, 8.0, 9.0, 10.0)).delta


@pytest.fixture(scope="module")
def bm(delta):
    return bm_total_mass(OCT, delta, 10.0)


# -- closed-geodesic counting ---------------------------------------------------------


def test_counts_vanish_below_systole():
    systole = 2.0 * math.acosh(1.0 + math.sqrt(2.0))
    rep = margulis_count(OCT, systole - 0.1, 1.0)
    assert set(rep.counts) == {0}
    assert rep.trend() == pytest.approx((math.nan, math.nan), nan_ok=True)


def test_count_grid_and_monotone(delta_sch):
    rep = margulis_count(SCH, 10.0, delta_sch)
    assert np.allclose(np.diff(rep.t_grid), 0.5)
    assert np.all(np.diff(rep.counts) >= 0)
    r = np.array(rep.ratios)
    c = np.array(rep.counts)
    assert np.all(np.isfinite(r)) and np.all(r[c > 0] > 0)


def test_schottky_ratios_enter_band(delta_sch):
    rep = margulis_count(SCH, 10.0, delta_sch)
    r = np.array(rep.ratios)
    first = np.argmax(np.array(rep.counts) > 0)
    assert np.all((r[first:] >= 0.5) & (r[first:] <= 2.0))


def test_schottky_prime_counting_oracle(delta_sch):
    # the prime-geodesic count follows li(e^{ht}) = e^{ht}/(ht) (1 + 1/(ht) + ...);
    # normalised by li the trailing ratios approach 1
    rep = margulis_count(SCH, 10.0, delta_sch)
    t = np.array(rep.t_grid)
    n = np.array(rep.counts)
    keep = n > 0
    li = expi(delta_sch * t[keep]) - expi(math.log(2.0))
    q = n[keep] / li
    assert np.mean(np.abs(q[-3:] - 1.0)) < np.mean(np.abs(q[:3] - 1.0))
    assert np.mean(np.abs(q[-3:] - 1.0)) < 0.05


def test_ratio_sensitivity(delta_sch):
    eps = 0.02
    a = margulis_count(SCH, 10.0, delta_sch)
    b = margulis_count(SCH, 10.0, delta_sch * (1.0 + eps))
    ratio = b.ratios[-1] / a.ratios[-1]
    expected = (1.0 + eps) * math.exp(-10.0 * delta_sch * eps)
    assert ratio == pytest.approx(expected, rel=1e-12)
    assert ratio < 1.0


def test_octagon_ratios_in_band(delta):
    rep = margulis_count(OCT, 10.0, delta)
    t = np.array(rep.t_grid)
    r = np.array(rep.ratios)[t >= 8.0]
    assert np.all((r >= 0.3) & (r <= 3.0))


@pytest.mark.slow
def test_octagon_ratios_to_eleven(delta):
    rep = margulis_count(OCT, 11.0, delta)
    t = np.array(rep.t_grid)
    r = np.array(rep.ratios)[t >= 8.0]
    assert np.all((r >= 0.3) & (r <= 3.0))


def test_counting_orbit_consistency():
    # axes of the chosen representatives pass near the domain, so each class
    # is witnessed by an orbit element of displacement at most l + 2 diam
    diam = 2.0 * OCT.domain_radius
    for c in conj_classes_up_to(OCT, 6.2):
        assert c.representative.displacement() <= c.length + 2.0 * diam


# -- equidistribution -----------------------------------------------------------------


def test_equidistribution_whole_domain():
    rep = equidistribution_probe(OCT, 6.2, "domain", eps=1.0)
    assert rep.fraction == 1.0 and rep.reference == 1.0


def test_equidistribution_empty_window():
    with pytest.raises(InsufficientData):
        equidistribution_probe(OCT, 3.0, "domain")


def test_equidistribution_isometric_balls():
    # the quotient has the rotation by pi/4 as an isometry
    r = 0.3
    a = equidistribution_probe(OCT, 9.0, (DiskPoint(r, 0.0), 0.3))
    b = equidistribution_probe(OCT, 9.0, (DiskPoint(0.0, r), 0.3))
    c = equidistribution_probe(OCT, 9.0, (DiskPoint(r / math.sqrt(2.0), r / math.sqrt(2.0)), 0.3))
    for x in (b, c):
        assert abs(x.fraction - a.fraction) / a.fraction < 0.2


def test_equidistribution_liouville_reference():
    # ball of normalised Liouville mass 0.05: 2 pi (cosh r - 1) = 0.05 * 4 pi
    radius = math.acosh(1.0 + 0.1)
    rep = equidistribution_probe(OCT, 10.0, (ORIGIN, radius))
    assert rep.reference == pytest.approx(0.05, rel=1e-12)
    assert 0.025 <= rep.fraction <= 0.10


# -- volume growth --------------------------------------------------------------------


def test_sphere_volume_closed_form():
    rep = sphere_volume_jacobi(HYP, ORIGIN, 8.0, n_dirs=16, dt=1e-2)
    assert rep.sphere_vols[-1] == pytest.approx(2.0 * math.pi * math.sinh(8.0), rel=1e-5)
    t = np.array(rep.t_grid)
    assert np.allclose(rep.ball_vols, 2.0 * math.pi * (np.cosh(t) - 1.0), rtol=1e-4, atol=1e-8)


def test_ball_volume_normalisation_tends_to_pi():
    rep = sphere_volume_jacobi(HYP, ORIGIN, 10.0, n_dirs=16, dt=1e-2)
    assert rep.h_used == 1.0
    assert abs(rep.normalized[-1] - math.pi) / math.pi < 0.05
    assert np.all(np.diff(rep.ball_vols) > 0)


def test_sphere_volume_euclidean_limit():
    rep = sphere_volume_jacobi(HYP, ORIGIN, 1e-2, n_dirs=8, dt=1e-4)
    t = np.array(rep.t_grid)[1:]
    ratio = np.array(rep.sphere_vols)[1:] / t
    assert ratio[0] == pytest.approx(2.0 * math.pi, rel=1e-8)
    assert np.all(np.abs(ratio - 2.0 * math.pi) < 2.0 * math.pi * t**2)


def test_sphere_is_ball_derivative():
    rep = sphere_volume_jacobi(HYP, ORIGIN, 9.0, n_dirs=8, dt=1e-2)
    t = np.array(rep.t_grid)
    s = np.array(rep.sphere_vols)
    db = np.gradient(np.array(rep.ball_vols), t)
    sel = (t >= 2.0) & (t <= 8.0)
    assert np.max(np.abs(db[sel] / s[sel] - 1.0)) < 0.02


def test_fan_refinement_perturbed():
    metric = MetricSpec.conformal([Bump(0.0, 0.0, 0.05, 0.7)], group="genus2-octagon")
    x = DiskPoint(0.15, 0.05)
    a = sphere_volume_jacobi(metric, x, 2.0, n_dirs=8, dt=1e-2)
    b = sphere_volume_jacobi(metric, x, 2.0, n_dirs=16, dt=1e-2)
    assert abs(a.sphere_vols[-1] / b.sphere_vols[-1] - 1.0) < 1e-3
    t = np.array(b.t_grid)
    db = np.gradient(np.array(b.ball_vols), t)
    sel = t >= 0.5
    assert np.max(np.abs(db[sel] / np.array(b.sphere_vols)[sel] - 1.0)) < 0.02


# -- orbit counting -------------------------------------------------------------------


def test_orbit_count_below_distance():
    x, y = DiskPoint(0.1, 0.0), DiskPoint(-0.2, 0.1)
    d = hyp_dist(x, y)
    tab = orbit_count_asymptotic(OCT, x, y, [0.5 * d, 0.99 * d, d + 1e-9], 1.0)
    assert tab.counts[:2] == (0, 0) and tab.counts[2] == 1


def test_orbit_count_symmetric():
    x, y = DiskPoint(0.1, 0.05), DiskPoint(-0.2, 0.1)
    grid = [2.0, 4.0, 6.0, 7.5]
    assert orbit_count_asymptotic(OCT, x, y, grid, 1.0).counts == orbit_count_asymptotic(OCT, y, x, grid, 1.0).counts


def test_orbit_count_factor_two_band(delta):
    tab = orbit_count_asymptotic(OCT, ORIGIN, ORIGIN, np.arange(8.0, 11.01, 0.5), delta)
    a = np.array(tab.normalized)
    assert a.max() / a.min() < 2.0
    # constant curvature: a_t ~ b_t / Vol = pi e^t / (4 pi)
    assert np.all(np.abs(a * delta / 0.25 - 1.0) < 0.3)


# -- Margulis function ----------------------------------------------------------------


def test_bm_total_mass_liouville(delta, bm):
    # Liouville volume 2 pi Vol = 8 pi^2, scaled by 1/(2 pi^2)
    assert bm == pytest.approx(4.0, rel=0.02)


def test_length_in_domain_oracle():
    th = math.pi / 8.0
    out = geodesic_length_in_domain(OCT, np.array([0.0, th]), np.array([math.pi, th + math.pi]))
    # through side midpoints: twice the inradius; through vertices: twice the circumradius
    assert out[0] == pytest.approx(OCT.generators[0].displacement(), rel=1e-10)
    assert out[1] == pytest.approx(2.0 * OCT.domain_radius, rel=1e-10)


def test_margulis_function_agreement(delta, bm):
    e = margulis_function(OCT, ORIGIN, ORIGIN, delta=delta, R=10.0, t=10.0, bm_mass=bm)
    assert e.c_orbit > 0 and e.c_integral > 0
    assert e.rel_gap < 0.3
    for c in (e.c_orbit, e.c_integral):
        assert abs(c / 0.25 - 1.0) < 0.3


def test_margulis_function_equivariance(delta, bm):
    x, y = DiskPoint(0.2, 0.1), DiskPoint(-0.1, 0.15)
    e = margulis_function(OCT, x, y, delta=delta, bm_mass=bm)
    for gm in OCT.generators[:2]:
        f = margulis_function(OCT, gm.apply(x), gm.apply(y), delta=delta, bm_mass=bm)
        assert f.c_orbit == pytest.approx(e.c_orbit, rel=1e-6)
        assert f.c_integral == pytest.approx(e.c_integral, rel=1e-6)


def test_margulis_function_continuity(delta, bm):
    x = DiskPoint(0.2, 0.1)
    xp = flow_closed_form(UnitTangent(x, 0.9), 0.1).base
    assert hyp_dist(x, xp) == pytest.approx(0.1, rel=1e-9)
    e = margulis_function(OCT, x, x, delta=delta, bm_mass=bm)
    f = margulis_function(OCT, xp, xp, delta=delta, bm_mass=bm)
    for a, b in ((e.c_orbit, f.c_orbit), (e.c_integral, f.c_integral)):
        assert abs(a - b) / a < 0.1


def test_margulis_function_needs_atoms(delta):
    with pytest.raises(InsufficientData):
        margulis_function(OCT, ORIGIN, ORIGIN, delta=delta, R=2.0, t=2.0, min_atoms=200)
