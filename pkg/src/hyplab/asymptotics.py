"""Closed-geodesic counting, orbit counting, volume growth and the Margulis function."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import flow
from .geometry import ORIGIN, DiskPoint, UnitTangent, dist_array, gromov_product_array, hyp_dist
from .groups import GroupPreset, conj_classes_up_to, enumerate_orbit, fold_many, fold_to_domain, translation_length
from .patterson import InsufficientData, ps_measure


@dataclass(frozen=True)
class CountingReport:
    t_grid: tuple[float, ...]
    counts: tuple[int, ...]
    ratios: tuple[float, ...]
    h_used: float

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "count", "ratio"])
            for t, c, r in zip(self.t_grid, self.counts, self.ratios):
                w.writerow([f"{t:.17g}", c, f"{r:.17g}"])

    def trend(self, n: int = 3) -> tuple[float, float]:
        """Mean |ratio - 1| over the first and the last n grid points with counts > 0."""
        r = np.array([x for x, c in zip(self.ratios, self.counts) if c > 0])
        if r.size < 2 * n:
            return math.nan, math.nan
        return float(np.mean(np.abs(r[:n] - 1.0))), float(np.mean(np.abs(r[-n:] - 1.0)))


def margulis_count(g: GroupPreset, t_max: float, h_hat: float, step: float = 0.5, **kw) -> CountingReport:
    """#P(t) and the ratio #P(t) h t e^{-h t} on a grid of spacing `step`."""
    classes = conj_classes_up_to(g, t_max, **kw)
    lengths = np.sort([c.length for c in classes])
    grid = np.arange(step, t_max + 1e-9, step)
    counts = np.searchsorted(lengths, grid, side="right")
    ratios = counts * h_hat * grid * np.exp(-h_hat * grid)
    return CountingReport(
        tuple(float(t) for t in grid), tuple(int(c) for c in counts), tuple(float(r) for r in ratios), float(h_hat)
    )


# ---------------------------------------------------------------------------
# equidistribution


@dataclass(frozen=True)
class EquidistributionReport:
    t: float
    eps: float
    classes: int
    fraction: float
    reference: float
    box_center: DiskPoint | None
    box_radius: float | None


def axis_samples(gamma, n: int) -> np.ndarray:
    """n equally spaced points on one period of the axis of gamma."""
    rep, att = gamma.fixed_points()
    ell = translation_length(gamma)
    from .geometry import geodesic_samples

    s = (np.arange(n) + 0.5) * ell / n
    return geodesic_samples(rep, att, s)


def equidistribution_probe(
    g: GroupPreset,
    t: float,
    box: tuple[DiskPoint, float] | str,
    samples: int = 64,
    eps: float = 0.25,
    **kw,
) -> EquidistributionReport:
    """Fraction of closed-geodesic length in a ball of the Dirichlet domain.

    Classes with length in (t - eps, t]; each axis is sampled at `samples`
    points per unit length, folded into the domain, and the fractions are
    averaged with weights proportional to length.  The reference is the
    normalised Liouville mass of the ball.
    """
    classes = [c for c in conj_classes_up_to(g, t, **kw) if c.length > t - eps]
    if not classes:
        raise InsufficientData(f"no closed geodesics with length in ({t - eps}, {t}]")
    if box == "domain":
        return EquidistributionReport(t, eps, len(classes), 1.0, 1.0, None, None)
    center, radius = box
    inside = total = 0.0
    for c in classes:
        n = max(8, int(math.ceil(samples * c.length)))
        pts = fold_many(g, axis_samples(c.representative, n))
        hit = dist_array(center.z, pts) <= radius
        inside += c.length * np.count_nonzero(hit) / n
        total += c.length
    ref = 2.0 * math.pi * (math.cosh(radius) - 1.0) / g.area
    return EquidistributionReport(t, eps, len(classes), inside / total, ref, center, radius)


# ---------------------------------------------------------------------------
# volume growth


@dataclass(frozen=True)
class VolumeReport:
    t_grid: tuple[float, ...]
    sphere_vols: tuple[float, ...]
    ball_vols: tuple[float, ...]
    normalized: tuple[float, ...]
    h_used: float

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "sphere_vol", "ball_vol", "c_t"])
            for row in zip(self.t_grid, self.sphere_vols, self.ball_vols, self.normalized):
                w.writerow([f"{v:.17g}" for v in row])


def _fan_jacobi(metric: flow.MetricSpec, x: DiskPoint, t: float, n_dirs: int, dt: float) -> np.ndarray:
    """j_theta(s) on the time grid for each direction: array (n_dirs, n+1)."""
    if metric.kind == "constant":
        sol = flow.jacobi_solve(metric.K, 0.0, 1.0, t, dt)
        return np.broadcast_to(sol.j, (n_dirs, sol.j.size))
    rows = []
    for k in range(n_dirs):
        v = UnitTangent(x, 2.0 * math.pi * k / n_dirs)
        ks = flow.curvature_signal(metric, v, t, dt)
        rows.append(flow.jacobi_solve(ks, 0.0, 1.0, t, dt).j)
    return np.array(rows)


def sphere_volume_jacobi(
    metric: flow.MetricSpec,
    x: DiskPoint,
    t: float,
    n_dirs: int = 64,
    dt: float = 1e-2,
    h: float | None = None,
) -> VolumeReport:
    """s_t(x) = integral of j_theta(t) d theta over a fan of geodesics; b_t by cumulative trapezoid."""
    J = _fan_jacobi(metric, x, t, n_dirs, dt)
    if np.any(J[:, 1:] <= 0):
        raise flow.NonConvergence("a fan Jacobi field vanished: conjugate point before t")
    s = 2.0 * math.pi * J.mean(axis=0)
    times = np.arange(J.shape[1]) * dt
    from scipy.integrate import cumulative_trapezoid

    b = cumulative_trapezoid(s, times, initial=0.0)
    if h is None:
        h = math.sqrt(-metric.K) if metric.kind == "constant" and metric.K < 0 else volume_entropy(times, s)
    c = h * b * np.exp(-h * times)
    return VolumeReport(tuple(times), tuple(s), tuple(b), tuple(c), float(h))


def volume_entropy(times: np.ndarray, sphere: np.ndarray, t_min: float | None = None) -> float:
    """Slope of log s_t over the upper half of the time range."""
    times = np.asarray(times)
    lo = times[-1] / 2.0 if t_min is None else t_min
    sel = times >= lo
    return float(np.polyfit(times[sel], np.log(np.asarray(sphere)[sel]), 1)[0])


def flattening_entropy(times: np.ndarray, ball: np.ndarray, t_min: float | None = None) -> float:
    """h for which h b_t e^{-h t} is flattest, i.e. the slope of log b_t at large t."""
    return volume_entropy(times, ball, t_min)


# ---------------------------------------------------------------------------
# orbit counting


@dataclass(frozen=True)
class OrbitCountTable:
    t_grid: tuple[float, ...]
    counts: tuple[int, ...]
    normalized: tuple[float, ...]
    h_used: float

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "a_t", "a_t_exp"])
            for row in zip(self.t_grid, self.counts, self.normalized):
                w.writerow([f"{row[0]:.17g}", row[1], f"{row[2]:.17g}"])


def _orbit_distances(g: GroupPreset, x: DiskPoint, y: DiskPoint, t_max: float) -> np.ndarray:
    # a_t(x, y) only depends on the orbits of x and y: fold both into the domain
    if g.domain is not None:
        x, _ = fold_to_domain(g, x)
        y, _ = fold_to_domain(g, y)
    table = enumerate_orbit(g, y, t_max + hyp_dist(x, y))
    pts = table.orbit_points(y)
    return np.sort(dist_array(x.z, pts))


def orbit_count_asymptotic(g: GroupPreset, x: DiskPoint, y: DiskPoint, t_grid: Sequence[float], h_hat: float) -> OrbitCountTable:
    """a_t(x, y) = #{gamma : d(x, gamma y) <= t} and a_t e^{-h t}."""
    grid = np.asarray(sorted(t_grid), dtype=float)
    d = _orbit_distances(g, x, y, float(grid[-1]))
    counts = np.searchsorted(d, grid, side="right")
    return OrbitCountTable(tuple(grid), tuple(int(c) for c in counts), tuple(counts * np.exp(-h_hat * grid)), float(h_hat))


# ---------------------------------------------------------------------------
# Margulis function


@dataclass(frozen=True)
class MargulisFunctionEstimate:
    x: DiskPoint
    y: DiskPoint
    c_orbit: float
    c_integral: float
    rel_gap: float
    bm_mass: float


def _polygon_normals(g: GroupPreset) -> np.ndarray:
    """Minkowski normals (1, c_x, c_y) of the Dirichlet sides (circle centers c)."""
    if g.domain is None:
        raise InsufficientData("preset has no Dirichlet polygon")
    cs = np.array(g.domain._circles)
    return np.stack([np.ones(cs.size), cs.real, cs.imag], axis=1)


def geodesic_length_in_domain(g: GroupPreset, th_from: np.ndarray, th_to: np.ndarray) -> np.ndarray:
    """Length of the geodesic from th_from to th_to inside the Dirichlet polygon.

    On the hyperboloid the geodesic is (e^s L_to + e^{-s} L_from)/c with null
    vectors L; each side is a sign condition on a cosh + b sinh, i.e. a
    half-line in s.
    """
    N = _polygon_normals(g)
    lo = np.full(np.shape(th_from), -np.inf)
    hi = np.full(np.shape(th_from), np.inf)
    for n0, n1, n2 in N:
        a = -n0 + n1 * np.cos(th_to) + n2 * np.sin(th_to)
        b = -n0 + n1 * np.cos(th_from) + n2 * np.sin(th_from)
        with np.errstate(divide="ignore", invalid="ignore"):
            cut = 0.5 * np.log(np.abs(b / a))
        # inside where e^{2s} a + b <= 0
        both_pos = (a > 0) & (b > 0)
        upper = (a > 0) & (b <= 0)
        lower = (a <= 0) & (b > 0)
        hi = np.where(upper, np.minimum(hi, cut), hi)
        lo = np.where(lower, np.maximum(lo, cut), lo)
        hi = np.where(both_pos, -np.inf, hi)
    with np.errstate(invalid="ignore"):
        out = hi - lo
    return np.where(np.isfinite(out) & (out > 0), out, 0.0)


def bm_total_mass(g: GroupPreset, delta: float, R: float, nbins: int = 256, layer: float = 2.0) -> float:
    """Bowen-Margulis mass of the unit tangent bundle of the quotient.

    Pairs of boundary bins of the outer-layer PS measure at the origin (unit
    mass) weighted by e^{delta beta_0} and the length of their geodesic inside
    the Dirichlet polygon.
    """
    mu = ps_measure(g, ORIGIN, delta, R).outer_layer(R - layer)
    centers, mass = mu.histogram(nbins)
    A, B = np.meshgrid(centers, centers, indexing="ij")
    off = ~np.eye(nbins, dtype=bool)
    beta = gromov_product_array(A[off], B[off])
    length = geodesic_length_in_domain(g, A[off], B[off])
    wts = (mass[:, None] * mass[None, :])[off]
    return float(np.sum(np.exp(delta * beta) * wts * length))


def margulis_function(
    g: GroupPreset,
    x: DiskPoint,
    y: DiskPoint,
    *,
    delta: float,
    R: float = 10.0,
    t: float = 10.0,
    window: float = 1.0,
    bm_mass: float | None = None,
    min_atoms: int = 200,
    layer: float = 2.0,
) -> MargulisFunctionEstimate:
    """c(x, y) with a_t(x, y) ~ c(x, y) e^{h t} / h, estimated two ways.

    c_orbit: h a_s(x, y) e^{-h s} averaged over s in [t - window, t].
    c_integral: ||mu_y|| sum_xi e^{-h b_xi(x, y)} mu_y(xi) / ||m_BM||, with
    mu_y the PS measure at y (orbit ball of radius R around y) read on its
    outer shell, ||mu_y|| the shell mass relative to the shell at the origin,
    and ||m_BM|| the Bowen-Margulis mass for the unit-mass measure there.
    """
    from .geometry import busemann_array

    grid = np.linspace(t - window, t, 21)
    tab = orbit_count_asymptotic(g, x, y, grid, delta)
    c_orbit = float(delta * np.mean(tab.normalized))
    mu_y = ps_measure(g, y, delta, R)
    if mu_y.points.size < min_atoms:
        raise InsufficientData(f"only {mu_y.points.size} atoms at y")
    # shell ratio: the partial sums diverge at delta, their outer shells do not
    shell = mu_y.outer_layer(R - layer, renormalize=False)
    norm_y = shell.total_mass / ps_measure(g, ORIGIN, delta, R).outer_layer(R - layer, renormalize=False).total_mass
    outer = mu_y.outer_layer(R - layer)
    th, w = outer.projected
    kern = float(np.sum(np.exp(-delta * busemann_array(th, x.z, y.z)) * w))
    if bm_mass is None:
        bm_mass = bm_total_mass(g, delta, R)
    c_int = norm_y * norm_y * kern / bm_mass
    return MargulisFunctionEstimate(x, y, c_orbit, c_int, abs(c_orbit - c_int) / c_int, bm_mass)
