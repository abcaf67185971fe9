import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyplab.geometry import ORIGIN, BoundaryArc, BoundaryPoint, DiskPoint, GeometryError, flow_closed_form, tangent_towards
from hyplab.groups import preset
from hyplab.patterson import (
    InsufficientData,
    bm_box_mass,
    conformality_check,
    critical_exponent,
    hopf_coords,
    liouville_box_mass,
    poincare_partial,
    ps_measure,
    shadow_lemma_check,
)

from helpers import tangents

OCT = preset("genus2-octagon")
SCH = preset("schottky2")
CYC = preset("cyclic")


@pytest.fixture(scope="module")
def delta():
    return critical_exponent(OCT, ORIGIN, (7.0, 8.0, 9.0, 10.0)).delta


# -- Poincare series ----------------------------------------------------------------


def test_partial_sum_below_systole_is_one():
    assert poincare_partial(OCT, ORIGIN, ORIGIN, 1.0, 1.0).partial_sum == 1.0


def test_partial_sum_monotone_in_s_and_R():
    assert poincare_partial(OCT, ORIGIN, ORIGIN, 2.0, 8.0).partial_sum < poincare_partial(OCT, ORIGIN, ORIGIN, 1.0, 8.0).partial_sum
    sums = [poincare_partial(OCT, ORIGIN, ORIGIN, 1.0, R).partial_sum for R in (4.0, 6.0, 8.0)]
    assert sums[0] <= sums[1] <= sums[2]


def test_partial_sums_grow_linearly_at_s_one():
    sums = np.array([poincare_partial(OCT, ORIGIN, ORIGIN, 1.0, R).partial_sum for R in (6.0, 8.0, 10.0)])
    inc = np.diff(sums)
    # divergence-type signature: shells of equal width add comparable mass
    assert 0.67 < inc[1] / inc[0] < 1.5


@settings(max_examples=30)
@given(st.floats(0.8, 3.0), st.floats(0.05, 1.0))
def test_partial_sums_log_convex_in_s(s, h):
    f = [math.log(poincare_partial(SCH, ORIGIN, ORIGIN, x, 8.0).partial_sum) for x in (s - h / 2, s, s + h / 2)]
    assert f[0] + f[2] >= 2 * f[1] - 1e-12


# -- critical exponent ----------------------------------------------------------------


def test_octagon_exponent_near_one_with_shrinking_band():
    ests = [critical_exponent(OCT, ORIGIN, np.linspace(R / 2, R, 5)) for R in (6.0, 8.0, 10.0)]
    assert 0.85 <= ests[-1].delta <= 1.15
    assert ests[0].band > ests[1].band > ests[2].band


def test_schottky_exponent_below_point_nine_matches_bisection():
    est = critical_exponent(SCH, ORIGIN, (8.0, 10.0, 12.0, 14.0))
    assert est.delta < 0.9

    # oracle: the s at which shell sums stop decaying, by bisection
    def shell_trend(s):
        a = [poincare_partial(SCH, ORIGIN, ORIGIN, s, R).partial_sum for R in (10.0, 12.0, 14.0)]
        return math.log((a[2] - a[1]) / (a[1] - a[0]))

    lo, hi = 0.2, 1.5
    for _ in range(30):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if shell_trend(mid) > 0 else (lo, mid)
    assert est.delta == pytest.approx(0.5 * (lo + hi), abs=0.05)


def test_cyclic_exponent_near_zero():
    with pytest.raises(InsufficientData):
        critical_exponent(CYC, ORIGIN, (0.5, 0.7, 0.9))
    est = critical_exponent(CYC, ORIGIN, (5.0, 10.0, 15.0, 20.0))
    assert abs(est.delta) < 0.1


# -- Patterson-Sullivan measures ------------------------------------------------------


def test_mass_is_one_at_the_orbit_base(delta):
    assert ps_measure(OCT, ORIGIN, delta + 0.05, 8.0).total_mass == pytest.approx(1.0, abs=1e-12)


def test_weight_hook(delta):
    s = delta + 0.05
    plain = ps_measure(OCT, ORIGIN, s, 8.0)
    const = ps_measure(OCT, ORIGIN, s, 8.0, weight=lambda d: np.full_like(d, 3.0))
    np.testing.assert_allclose(const.weights, plain.weights, rtol=1e-12)
    # g(d) = e^{a d} is the same measure at exponent s - a
    tilted = ps_measure(OCT, ORIGIN, s + 0.1, 8.0, weight=lambda d: np.exp(0.1 * d))
    np.testing.assert_allclose(tilted.weights, plain.weights, rtol=1e-9)
    with pytest.raises(ValueError):
        ps_measure(OCT, ORIGIN, s, 8.0, weight=lambda d: -np.ones_like(d))


@pytest.mark.parametrize("p", [DiskPoint(0.2, 0.1), DiskPoint(-0.3, 0.25), DiskPoint(0.0, -0.4)])
def test_mass_bounds(p, delta):
    s = delta + 0.05
    d = 2 * math.atanh(math.hypot(p.x, p.y))
    m = ps_measure(OCT, p, s, 8.0, truncate_at=ORIGIN).total_mass
    assert math.exp(-s * d) <= m <= math.exp(s * d)


def test_conformality_on_populated_arcs(delta):
    rows = conformality_check(OCT, ORIGIN, DiskPoint(0.3, 0.1), delta + 0.05, 10.0, min_atoms=200)
    assert len(rows) >= 8
    assert all(r.atoms >= 200 for r in rows)
    assert max(r.rel_err for r in rows) < 0.15


def test_equivariance_atoms_permute(delta):
    # mu_{g p}(g A) = mu_p(A): atoms and weights are carried over by g
    p = DiskPoint(0.1, 0.05)
    gam = OCT.generators[0]
    a = ps_measure(OCT, p, delta, 6.0)
    b = ps_measure(OCT, gam.apply(p), delta, 6.0)
    assert len(a.points) == len(b.points)
    moved = np.array([gam.apply(DiskPoint.from_complex(complex(z))).z for z in a.points])

    def order(z):
        return np.lexsort((np.round(z.imag, 8), np.round(z.real, 8)))

    ia, ib = order(moved), order(b.points)
    np.testing.assert_allclose(moved[ia], b.points[ib], atol=1e-8)
    np.testing.assert_allclose(a.weights[ia], b.weights[ib], rtol=1e-9)


def test_mass_leaves_compact_sets(delta):
    # at the critical exponent the mass of a fixed ball decays as R grows
    fr = []
    for R in (6.0, 8.0, 10.0):
        mu = ps_measure(OCT, ORIGIN, delta, R)
        fr.append(np.sum(mu.weights[mu.depths < 3.0]) / mu.total_mass)
    assert fr[0] > fr[1] > fr[2]


# -- shadow lemma ------------------------------------------------------------------


@pytest.fixture(scope="module")
def shadow_report(delta):
    return shadow_lemma_check(OCT, ORIGIN, 2.0, (4.0, 8.0), 100, delta=delta, R=14.0, seed=0)


def test_shadow_spread_bounded(shadow_report):
    assert len(shadow_report.samples) >= 90
    assert shadow_report.spread < 100.0


def test_shadow_spread_does_not_grow_with_distance(shadow_report):
    assert abs(shadow_report.log_slope) < 0.05
    assert shadow_report.spread_in(6.0, 8.0) <= 1.5 * shadow_report.spread_in(4.0, 6.0)


def test_shadow_rho_monotone_in_radius(delta):
    a = shadow_lemma_check(OCT, ORIGIN, 1.0, (4.0, 6.0), 40, delta=delta, R=11.0, seed=5)
    b = shadow_lemma_check(OCT, ORIGIN, 2.0, (4.0, 6.0), 40, delta=delta, R=11.0, seed=5)
    ra = {round(s.displacement, 9): s.rho for s in a.samples}
    rb = {round(s.displacement, 9): s.rho for s in b.samples}
    common = set(ra) & set(rb)
    assert common
    assert all(rb[k] >= ra[k] for k in common)
    assert b.spread <= a.spread


def test_shadow_rejects_small_radius(delta):
    with pytest.raises(ValueError):
        shadow_lemma_check(OCT, ORIGIN, 0.5, (4.0, 8.0), 10, delta=delta, R=12.0)


# -- Hopf coordinates and boxes ---------------------------------------------------------


def test_hopf_normalisation():
    xi = BoundaryPoint(0.4)
    p = DiskPoint(0.2, -0.3)
    h = hopf_coords(tangent_towards(p, xi), p)
    assert h.plus == xi
    assert h.s == pytest.approx(0.0, abs=1e-12)


@given(tangents(0.8), st.sampled_from([0.5, 1.0, 2.0]))
def test_hopf_flow_equivariance(v, t):
    p = DiskPoint(0.1, 0.2)
    a, b = hopf_coords(v, p), hopf_coords(flow_closed_form(v, t), p)
    assert b.s == pytest.approx(a.s + t, abs=1e-8)
    assert a.minus == b.minus and a.plus == b.plus


@given(tangents(0.8))
def test_hopf_reversal_swaps_endpoints(v):
    a, b = hopf_coords(v, ORIGIN), hopf_coords(v.reversed(), ORIGIN)
    assert a.minus == b.plus and a.plus == b.minus


@pytest.fixture(scope="module")
def outer_mu(delta):
    return ps_measure(OCT, ORIGIN, delta, 10.0).outer_layer(8.0)


def test_box_empty_arc_and_linear_depth(outer_mu):
    P, F = BoundaryArc(0.5, 0.2), BoundaryArc(3.5, 0.2)
    one = bm_box_mass(outer_mu, P, F, 1.0).bm_mass
    assert bm_box_mass(outer_mu, P, F, 2.0).bm_mass == 2.0 * one
    empty = outer_mu.restrict(np.zeros(len(outer_mu.weights), bool))
    assert bm_box_mass(empty, P, F, 1.0).bm_mass == 0.0
    with pytest.raises(GeometryError):
        bm_box_mass(outer_mu, P, BoundaryArc(0.6, 0.2), 1.0)


def test_box_mass_proportional_to_liouville(outer_mu, delta):
    ratios = []
    for k in range(5):
        c = 2 * math.pi * k / 5
        P, F = BoundaryArc(c, 0.3), BoundaryArc(c + math.pi, 0.3)
        ratios.append(bm_box_mass(outer_mu, P, F, 1.0, delta).bm_mass / liouville_box_mass(P, F, 1.0))
    ratios = np.array(ratios)
    assert ratios.max() / ratios.min() < 1.25
    # unit-mass uniform PS measures give e^beta / (4 pi^2) against the density 2/|a-b|^2
    assert np.mean(ratios) == pytest.approx(1.0 / (2.0 * math.pi**2), rel=0.15)


def test_liouville_box_quadrature_closed_form():
    # integral of 2/|e^{ia}-e^{ib}|^2 = 1/(2 sin^2((a-b)/2)) over opposite arcs
    P, F = BoundaryArc(0.0, 0.1), BoundaryArc(math.pi, 0.1)
    from scipy import integrate

    val, _ = integrate.dblquad(lambda b, a: 0.5 / math.sin((a - b) / 2) ** 2, -0.1, 0.1, math.pi - 0.1, math.pi + 0.1)
    assert liouville_box_mass(P, F, 1.0) == pytest.approx(val, rel=1e-9)
