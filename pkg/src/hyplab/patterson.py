"""Poincare series, critical exponents and Patterson-Sullivan measures."""
from __future__ import annotations

import csv
import math
import warnings
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .geometry import (
    ORIGIN,
    TWO_PI,
    BoundaryArc,
    BoundaryPoint,
    DiskPoint,
    GeometryError,
    UnitTangent,
    busemann,
    busemann_array,
    dist_array,
    geodesic_endpoints,
    gromov_product_array,
    hyp_dist,
    shadow_arc,
)
from .groups import GroupPreset, enumerate_orbit


class InsufficientData(ValueError):
    pass


@dataclass(frozen=True)
class PoincareSeriesReport:
    s: float
    R: float
    partial_sum: float
    term_count: int


@dataclass(frozen=True)
class ExponentEstimate:
    delta: float
    band: float
    radii: tuple[float, ...]
    counts: tuple[int, ...]


@dataclass(frozen=True, eq=False)
class AtomicBoundaryMeasure:
    """Weighted orbit points, read on the boundary by radial projection from `basepoint`.

    `points` are the interior atoms gamma p0; an atom sitting exactly at the
    basepoint has no direction and is kept only in the total mass.
    """

    points: np.ndarray
    weights: np.ndarray
    basepoint: DiskPoint
    s: float
    depths: np.ndarray = field(repr=False)

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))

    @property
    def thetas(self) -> np.ndarray:
        return _project(self.basepoint.z, self.points)

    @property
    def projected(self) -> tuple[np.ndarray, np.ndarray]:
        """(thetas, weights) of the atoms that have a direction from the basepoint."""
        keep = self.depths > 1e-9
        return _project(self.basepoint.z, self.points[keep]), self.weights[keep]

    def restrict(self, mask: np.ndarray, renormalize: bool = False) -> "AtomicBoundaryMeasure":
        w = self.weights[mask]
        if renormalize:
            w = w / np.sum(w)
        return AtomicBoundaryMeasure(self.points[mask], w, self.basepoint, self.s, self.depths[mask])

    def outer_layer(self, lo: float, renormalize: bool = True) -> "AtomicBoundaryMeasure":
        """Atoms at depth > lo from the basepoint, optionally rescaled to unit mass.

        Shallow atoms of a truncated series project onto arcs that do not
        contain their boundary limit; the outer shells carry the boundary
        reading of the measure.
        """
        return self.restrict(self.depths > lo, renormalize)

    def arc_mass(self, arc: BoundaryArc) -> float:
        th, w = self.projected
        return float(np.sum(w[arc.contains(th)]))

    def arc_count(self, arc: BoundaryArc) -> int:
        th, _ = self.projected
        return int(np.count_nonzero(arc.contains(th)))

    def histogram(self, nbins: int) -> tuple[np.ndarray, np.ndarray]:
        th, w = self.projected
        edges = np.linspace(0.0, TWO_PI, nbins + 1)
        mass, _ = np.histogram(np.mod(th, TWO_PI), bins=edges, weights=w)
        return 0.5 * (edges[:-1] + edges[1:]), mass

    def histogram_csv(self, path, nbins: int = 64) -> None:
        centers, mass = self.histogram(nbins)
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["bin_center_theta", "mass"])
            for c, m in zip(centers, mass):
                wr.writerow([f"{c:.17g}", f"{m:.17g}"])


@dataclass(frozen=True)
class HopfCoord:
    minus: BoundaryPoint
    plus: BoundaryPoint
    s: float


@dataclass(frozen=True)
class BoxMeasureReport:
    P_arc: BoundaryArc
    F_arc: BoundaryArc
    depth: float
    bm_mass: float


def _project(p: complex, zs: np.ndarray) -> np.ndarray:
    """Boundary angle of the geodesic ray from p through each point."""
    w = (zs - p) / (1.0 - np.conj(p) * zs)
    e = w / np.abs(w)
    b = (e + p) / (1.0 + np.conj(p) * e)
    return np.mod(np.angle(b), TWO_PI)


def orbit_atoms(g: GroupPreset, p: DiskPoint, p0: DiskPoint, R: float) -> tuple[np.ndarray, np.ndarray]:
    """Orbit points gamma p0 with d(p, gamma p0) <= R and their distances from p."""
    extra = hyp_dist(p, p0)
    table = enumerate_orbit(g, p0, R + extra)
    pts = table.orbit_points(p0)
    if p == p0:
        d = np.array(table.displacements)
    else:
        d = dist_array(p.z, pts)
    keep = d <= R
    return pts[keep], d[keep]


def poincare_partial(g: GroupPreset, p: DiskPoint, p0: DiskPoint, s: float, R: float) -> PoincareSeriesReport:
    if s < 0 or R <= 0:
        raise ValueError("need s >= 0 and R > 0")
    _, d = orbit_atoms(g, p, p0, R)
    # sum small terms first for a stable total
    terms = np.sort(np.exp(-s * d))
    return PoincareSeriesReport(float(s), float(R), float(math.fsum(terms)), int(d.size))


def critical_exponent(g: GroupPreset, o: DiskPoint, R_list) -> ExponentEstimate:
    """Least-squares slope of log N(R) against R.

    The band is the largest deviation of any pairwise slope from the fit.
    """
    radii = np.asarray(sorted(R_list), dtype=float)
    if radii.size < 3:
        raise InsufficientData("need at least three radii")
    table = enumerate_orbit(g, o, float(radii[-1]))
    counts = np.array([table.count_within(r) for r in radii])
    # a shell without new elements carries no growth information
    if np.any(np.diff(counts) <= 0):
        raise InsufficientData("an orbit shell is empty")
    y = np.log(counts)
    slope = float(np.polyfit(radii, y, 1)[0])
    band = 0.0
    for i in range(len(radii)):
        for j in range(i + 1, len(radii)):
            sij = (y[j] - y[i]) / (radii[j] - radii[i])
            band = max(band, abs(sij - slope))
    return ExponentEstimate(slope, band, tuple(float(r) for r in radii), tuple(int(c) for c in counts))


def ps_measure(
    g: GroupPreset,
    p: DiskPoint,
    s: float,
    R: float,
    *,
    p0: DiskPoint = ORIGIN,
    delta_hat: float | None = None,
    truncate_at: DiskPoint | None = None,
    weight: Callable[[np.ndarray], np.ndarray] | None = None,
) -> AtomicBoundaryMeasure:
    """mu_{p,s} truncated to orbit points within R of `truncate_at` (default p).

    Weights e^{-s d(p, gamma p0)} / sum_alpha e^{-s d(p0, alpha p0)} with the
    normaliser summed over the same radius.  An optional `weight` g(d) multiplies
    every term of both sums; it is the hook for a slowly increasing correction
    of convergent-type groups and must be positive.
    """
    if s <= 0 or R <= 0:
        raise ValueError("need s > 0 and R > 0")
    if delta_hat is not None and s <= delta_hat:
        warnings.warn(f"s = {s} is not above the critical exponent estimate {delta_hat}", stacklevel=2)
    centre = p if truncate_at is None else truncate_at
    pts, _ = orbit_atoms(g, centre, p0, R)
    d = dist_array(p.z, pts)
    d[np.abs(pts - p.z) < 1e-14] = 0.0
    if weight is None:
        norm = poincare_partial(g, p0, p0, s, R).partial_sum
        w = np.exp(-s * d) / norm
    else:
        _, d0 = orbit_atoms(g, p0, p0, R)
        g0, gd = np.asarray(weight(d0), dtype=float), np.asarray(weight(d), dtype=float)
        if g0.shape != d0.shape or gd.shape != d.shape or np.any(~(g0 > 0)) or np.any(~(gd > 0)):
            raise ValueError("weight must map distances to positive values elementwise")
        norm = math.fsum(np.sort(g0 * np.exp(-s * d0)))
        w = gd * np.exp(-s * d) / norm
    return AtomicBoundaryMeasure(pts, w, p, float(s), d)


# ---------------------------------------------------------------------------
# conformality


@dataclass(frozen=True)
class ConformalityRow:
    arc: BoundaryArc
    atoms: int
    ratio: float
    predicted: float

    @property
    def rel_err(self) -> float:
        return abs(self.ratio / self.predicted - 1.0)


def conformality_check(
    g: GroupPreset,
    p: DiskPoint,
    q: DiskPoint,
    s: float,
    R: float,
    nbins: int = 16,
    min_atoms: int = 200,
    p0: DiskPoint = ORIGIN,
    layer: float = 2.0,
) -> list[ConformalityRow]:
    """Compare mu_q(A)/mu_p(A) with the mu_p-average of e^{-s b_xi(q,p)} over arcs A.

    Both measures use the same atoms, orbit points at distance in
    (R - layer, R] from p0, so truncation cannot bias the ratio and no
    shallow atom is read on the boundary.
    """
    mp = ps_measure(g, p, s, R, p0=p0, truncate_at=p0)
    mq = ps_measure(g, q, s, R, p0=p0, truncate_at=p0)
    outer = dist_array(p0.z, mp.points) > R - layer
    mp = mp.restrict(outer)
    mq = mq.restrict(outer)
    th_p, w_p = mp.projected
    th_q, w_q = mq.projected
    kern = np.exp(-s * busemann_array(th_p, q.z, p.z))
    rows = []
    for k in range(nbins):
        arc = BoundaryArc((k + 0.5) * TWO_PI / nbins, math.pi / nbins)
        inp = arc.contains(th_p)
        n = int(np.count_nonzero(inp))
        if n < min_atoms:
            continue
        m_p = float(np.sum(w_p[inp]))
        m_q = float(np.sum(w_q[arc.contains(th_q)]))
        pred = float(np.sum(w_p[inp] * kern[inp]) / m_p)
        rows.append(ConformalityRow(arc, n, m_q / m_p, pred))
    return rows


# ---------------------------------------------------------------------------
# shadow lemma


@dataclass(frozen=True)
class ShadowSample:
    displacement: float
    atoms: int
    rho: float


@dataclass(frozen=True)
class ShadowReport:
    r: float
    delta: float
    samples: tuple[ShadowSample, ...]
    flagged: int

    @property
    def rhos(self) -> np.ndarray:
        return np.array([x.rho for x in self.samples])

    @property
    def min(self) -> float:
        return float(np.min(self.rhos))

    @property
    def max(self) -> float:
        return float(np.max(self.rhos))

    @property
    def spread(self) -> float:
        return self.max / self.min

    @property
    def log_slope(self) -> float:
        """Least-squares slope of log rho against displacement (0 when rho has no trend)."""
        d = np.array([x.displacement for x in self.samples])
        return float(np.polyfit(d, np.log(self.rhos), 1)[0]) if d.size >= 2 else 0.0

    def spread_in(self, lo: float, hi: float) -> float:
        r = np.array([x.rho for x in self.samples if lo <= x.displacement <= hi])
        return float(np.max(r) / np.min(r)) if r.size else math.nan


def shadow_lemma_check(
    g: GroupPreset,
    p: DiskPoint,
    r: float,
    d_range: tuple[float, float],
    sample_count: int,
    *,
    delta: float,
    R: float,
    seed: int = 0,
    min_atoms: int = 20,
    admissible_radius: float = 1.0,
) -> ShadowReport:
    """rho(gamma) = mu_p(shadow of B(gamma p, r)) e^{delta d(p, gamma p)} over sampled gamma.

    mu_p is read through its outer shells (depth > max(d_range) + r, unit
    mass), so every atom counted lies beyond the ball that casts the shadow.
    """
    if r < admissible_radius:
        raise ValueError(f"shadow radius {r} below the admissibility radius {admissible_radius}")
    lo, hi = d_range
    if R <= hi + r:
        raise ValueError("truncation radius must exceed max(d_range) + r")
    mu = ps_measure(g, p, delta, R, p0=p).outer_layer(hi + r)
    th, w = mu.projected
    table = enumerate_orbit(g, p, hi)
    pool = np.nonzero((table.displacements >= lo) & (table.displacements <= hi))[0]
    if pool.size == 0:
        raise InsufficientData("no orbit points in the displacement range")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    pick = rng.choice(pool, size=min(sample_count, pool.size), replace=False)
    pick.sort()
    pts = table.orbit_points(p)
    samples, flagged = [], 0
    for i in pick:
        y = DiskPoint.from_complex(complex(pts[i]))
        arc = shadow_arc(p, y, r)
        inside = arc.contains(th)
        n = int(np.count_nonzero(inside))
        if n < min_atoms:
            flagged += 1
            continue
        dd = float(table.displacements[i])
        samples.append(ShadowSample(dd, n, float(np.sum(w[inside])) * math.exp(delta * dd)))
    if not samples:
        raise InsufficientData("every shadow sample had too few atoms")
    return ShadowReport(float(r), float(delta), tuple(samples), flagged)


# ---------------------------------------------------------------------------
# Hopf coordinates and Bowen-Margulis boxes


def hopf_coords(v: UnitTangent, p: DiskPoint) -> HopfCoord:
    minus, plus = geodesic_endpoints(v)
    return HopfCoord(minus, plus, busemann(minus, v.base, p))


def bm_box_mass(
    mu_p: AtomicBoundaryMeasure,
    P_arc: BoundaryArc,
    F_arc: BoundaryArc,
    depth: float,
    delta: float | None = None,
) -> BoxMeasureReport:
    """depth * sum over atom pairs of e^{delta beta_p(xi, eta)} w(xi) w(eta)."""
    if not P_arc.disjoint(F_arc):
        raise GeometryError("past and future arcs overlap")
    if depth <= 0:
        raise ValueError("depth must be positive")
    delta = mu_p.s if delta is None else delta
    th, w = mu_p.projected
    a = P_arc.contains(th)
    b = F_arc.contains(th)
    if not a.any() or not b.any():
        return BoxMeasureReport(P_arc, F_arc, depth, 0.0)
    beta = gromov_product_array(th[a][:, None], th[b][None, :], mu_p.basepoint.z)
    mass = float(np.sum(np.exp(delta * beta) * w[a][:, None] * w[b][None, :]))
    return BoxMeasureReport(P_arc, F_arc, depth, depth * mass)


def liouville_density(alpha, beta):
    """Liouville density in Hopf coordinates based at the origin (per d alpha d beta d s)."""
    return 2.0 / np.abs(np.exp(1j * alpha) - np.exp(1j * beta)) ** 2


def liouville_box_mass(P_arc: BoundaryArc, F_arc: BoundaryArc, depth: float) -> float:
    """Quadrature of the Liouville measure of the box P x F x [0, depth] (basepoint 0)."""
    if not P_arc.disjoint(F_arc):
        raise GeometryError("past and future arcs overlap")
    a0 = P_arc.center - P_arc.halfwidth
    b0 = F_arc.center - F_arc.halfwidth
    val, _ = integrate.dblquad(
        lambda b, a: float(liouville_density(a, b)),
        a0,
        a0 + P_arc.measure,
        b0,
        b0 + F_arc.measure,
        epsabs=1e-11,
        epsrel=1e-10,
    )
    return depth * val
