"""Entropy-curvature checks: Katok's bound, mean-curvature identities, spherical measures."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate

from . import flow
from .asymptotics import _fan_jacobi, flattening_entropy
from .geometry import ORIGIN, DiskPoint, UnitTangent
from .groups import GroupPreset
from .patterson import InsufficientData, critical_exponent, ps_measure


@dataclass(frozen=True)
class KatokReport:
    h_sq: float
    bound: float
    slack: float
    h_hat: float
    volume: float
    euler_characteristic: int


def conformal_volume(g: GroupPreset, metric: flow.MetricSpec, n_radial: int = 24, n_angular: int = 16) -> float:
    """Area of the quotient for e^{2 phi} times the hyperbolic metric.

    Polar Gauss-Legendre quadrature over the Dirichlet domain, with
    `n_angular` nodes on each angular sector between vertex directions (the
    boundary radius has kinks there).
    """
    if metric.kind == "constant":
        return g.area / abs(metric.K)
    if g.domain is None:
        raise InsufficientData("volume quadrature needs a compact Dirichlet domain")
    brk = g.domain._breakpoints()
    xa, wa = np.polynomial.legendre.leggauss(n_angular)
    x, w = np.polynomial.legendre.leggauss(n_radial)
    total = 0.0
    for a, b in zip(brk[:-1], brk[1:]):
        if b - a < 1e-15:
            continue
        th = 0.5 * (b - a) * xa + 0.5 * (a + b)
        rho_max = 2.0 * np.arctanh(g.domain.radial_extent(th))
        for t, rm, wt in zip(th, rho_max, wa):
            rho = 0.5 * rm * (x + 1.0)
            z = np.tanh(rho / 2.0) * complex(math.cos(t), math.sin(t))
            phi = np.array([metric.phi_terms(complex(zz))[0] for zz in z])
            total += 0.5 * (b - a) * wt * 0.5 * rm * float(np.sum(w * np.exp(2.0 * phi) * np.sinh(rho)))
    return total


def katok_bound_check(
    g: GroupPreset,
    *,
    metric: flow.MetricSpec | None = None,
    R_list: Sequence[float] = (7.0, 8.0, 9.0, 10.0),
    t_vol: float = 8.0,
    n_dirs: int = 32,
    dt: float = 1e-2,
) -> KatokReport:
    """h^2 against -2 pi E / Vol for a surface preset.

    Constant curvature -1 uses the orbit-growth exponent.  Other metrics use
    the growth of ball volumes from a Jacobi fan at the origin; the result is
    rescaled to the hyperbolic area so that the slack is scale free.
    """
    if not g.is_cocompact:
        raise InsufficientData("Katok's bound needs a closed surface")
    E = g.euler_characteristic
    if metric is None or (metric.kind == "constant" and metric.K == -1.0):
        h = critical_exponent(g, ORIGIN, R_list).delta
        vol = g.area
    elif metric.kind == "constant":
        h = math.sqrt(-metric.K)
        vol = g.area / abs(metric.K)
    else:
        vol = conformal_volume(g, metric)
        J = _fan_jacobi(metric, ORIGIN, t_vol, n_dirs, dt)
        times = np.arange(J.shape[1]) * dt
        ball = integrate.cumulative_trapezoid(2.0 * math.pi * J.mean(axis=0), times, initial=0.0)
        h = flattening_entropy(times, ball)
    # h^2 Vol is scale invariant: report at the hyperbolic area
    h_sq = h * h * vol / g.area
    bound = -2.0 * math.pi * E / g.area
    return KatokReport(h_sq, bound, h_sq - bound, float(h), float(vol), int(E))


@dataclass(frozen=True)
class IdentityReport:
    lhs: tuple[float, float, float]
    rhs: tuple[float, float, float]
    rel_err: tuple[float, float, float]
    samples: int
    T: float


def _riccati_averages(metric: flow.MetricSpec, v: UnitTangent, T: float, dt: float) -> tuple[float, float, float]:
    ks = flow.curvature_signal(metric, v, T, dt)
    if metric.kind == "constant":
        u0 = math.sqrt(-metric.K) if metric.K < 0 else 0.0
    else:
        try:
            u0 = flow.green_limit(metric, v, "unstable", [4.0, 8.0, 16.0], dt).limit
        except flow.NonConvergence:
            u0 = 0.0
    tr = flow.riccati_solve(ks, u0, T, dt, kind="unstable")
    k_half = tr.k_half
    K = k_half[::2]
    K_dot = np.gradient(k_half, dt / 2.0)[::2]
    u = tr.u
    u_dot = -u * u - K
    u_ddot = -2.0 * u * u_dot - K_dot
    avg = lambda f: float(integrate.trapezoid(f, dx=dt) / T)  # noqa: E731
    return avg(u), avg(-u_dot + u * u), avg(u_ddot - 3.0 * u_dot * u + u**3)


def mean_curvature_identity(
    metric: flow.MetricSpec,
    vs: Sequence[UnitTangent],
    T: float,
    dt: float,
    h: float | None = None,
) -> IdentityReport:
    """Time averages of u, -u' + u^2 = 2u^2 + K and u'' - 3u'u + u^3 against h, h^2, h^3.

    u is the unstable Riccati solution (positive in negative curvature).
    """
    if not vs:
        raise ValueError("need at least one sample vector")
    if h is None:
        if metric.kind != "constant" or metric.K >= 0:
            raise ValueError("pass the entropy estimate for non-constant metrics")
        h = math.sqrt(-metric.K)
    rows = np.array([_riccati_averages(metric, v, T, dt) for v in vs])
    lhs = tuple(float(x) for x in rows.mean(axis=0))
    rhs = (h, h * h, h**3)
    err = tuple(abs(a - b) / abs(b) for a, b in zip(lhs, rhs))
    return IdentityReport(lhs, rhs, err, len(vs), float(T))


@dataclass(frozen=True)
class SphericalRow:
    R: float
    total_mass: float
    tv: float


@dataclass(frozen=True)
class SphericalReport:
    x: DiskPoint
    h: float
    nbins: int
    rows: tuple[SphericalRow, ...]


def _direction_at(x: DiskPoint, th: np.ndarray) -> np.ndarray:
    """Angle at x of the unit tangent pointing at the boundary point e^{i th}."""
    xi = np.exp(1j * np.asarray(th))
    return np.mod(np.angle((xi - x.z) / (1.0 - np.conj(x.z) * xi)), 2.0 * math.pi)


def _tv(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.sum(np.abs(p / p.sum() - q / q.sum())))


def spherical_to_ps(
    g: GroupPreset,
    x: DiskPoint,
    R_list: Sequence[float],
    *,
    nbins: int = 32,
    h: float | None = None,
    metric: flow.MetricSpec | None = None,
    n_dirs: int | None = None,
    dt: float = 1e-2,
    layer: float = 2.0,
) -> SphericalReport:
    """Sphere measures nu_x^R = e^{-h R} j_theta(R) d theta against the PS measure at x.

    Directions at x are binned into `nbins` arcs; the PS side is the outer
    shell of the truncated orbit measure at x, each atom read as the
    direction at x of the ray towards its boundary projection.
    """
    if nbins < 16:
        raise InsufficientData("need at least 16 bins")
    metric = flow.MetricSpec.constant(-1.0) if metric is None else metric
    if h is None:
        h = critical_exponent(g, ORIGIN, (7.0, 8.0, 9.0, 10.0)).delta
    n = n_dirs or 8 * nbins
    thetas = 2.0 * math.pi * np.arange(n) / n
    edges = np.linspace(0.0, 2.0 * math.pi, nbins + 1)
    rows = []
    for R in sorted(R_list):
        J = _fan_jacobi(metric, x, R, n, dt)[:, -1]
        w = math.exp(-h * R) * J * (2.0 * math.pi / n)
        nu, _ = np.histogram(thetas, bins=edges, weights=w)
        th, wp = ps_measure(g, x, h, R).outer_layer(R - layer).projected
        ps, _ = np.histogram(_direction_at(x, th), bins=edges, weights=wp)
        rows.append(SphericalRow(float(R), float(w.sum()), _tv(nu, ps)))
    return SphericalReport(x, float(h), nbins, tuple(rows))
