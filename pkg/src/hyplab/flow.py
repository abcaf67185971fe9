"""Geodesic, Jacobi and Riccati dynamics on conformal metrics e^{2 phi} g_hyp.

Positions are complex coordinates in the Poincare disk chart; velocities are
chart velocities.  The hyperbolic metric itself is |dz|^2 4/(1-|z|^2)^2, so
a metric with conformal exponent phi has total log-factor
psi = phi + log(2/(1-|z|^2)).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import integrate, interpolate

from . import kernels
from .geometry import DiskPoint, UnitTangent, dist_array


class MetricValidationError(ValueError):
    pass


class StepFailure(RuntimeError):
    """Unit-speed drift exceeded the allowed bound; retry with a smaller step."""


class NonConvergence(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class Bump:
    """phi contribution eps * exp(-d(z, center)^2 / (2 sigma^2))."""

    center_x: float
    center_y: float
    eps: float
    sigma: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise MetricValidationError("bump width must be positive")
        if self.center_x**2 + self.center_y**2 >= 1.0:
            raise MetricValidationError("bump center outside the disk")

    @property
    def center(self) -> complex:
        return complex(self.center_x, self.center_y)


def _bump_terms(z: complex, centers: np.ndarray, eps: np.ndarray, sig: np.ndarray):
    """phi, grad phi (complex), hyperbolic Laplacian of phi at z."""
    r2 = abs(z) ** 2
    cc = np.abs(centers) ** 2
    diff = z - centers
    a = 2.0 * np.abs(diff) ** 2 / ((1.0 - r2) * (1.0 - cc))
    d = np.arccosh(1.0 + a)
    f = eps * np.exp(-(d * d) / (2.0 * sig * sig))
    fpp = (d * d / sig**4 - 1.0 / (sig * sig)) * f
    sh = np.sinh(d)
    small = d < 1e-6
    with np.errstate(invalid="ignore", divide="ignore"):
        dcoth = np.where(small, 1.0 + d * d / 3.0, d / np.tanh(d))
        d_over_sh = np.where(small, 1.0 - d * d / 6.0, d / sh)
    # Laplacian of a radial function: f'' + coth(d) f'
    lap = fpp + dcoth * (-(f / (sig * sig)))
    grad_a = (2.0 / (1.0 - cc)) * (2.0 * diff / (1.0 - r2) + np.abs(diff) ** 2 * 2.0 * z / (1.0 - r2) ** 2)
    # f'(d) grad d = f'(d)/sinh(d) grad a, and f'/sinh d = -(f/sigma^2) d/sinh d
    grad = (-(f / (sig * sig)) * d_over_sh) * grad_a
    return float(np.sum(f)), complex(np.sum(grad)), float(np.sum(lap))


@dataclass(eq=False)
class MetricSpec:
    """Metric g = e^{2 phi} g_hyp.

    kind "constant": phi is the constant -log|K|/2 (K < 0), or only a
    curvature value for K >= 0 (Jacobi/Riccati use only).
    kind "conformal": sum of Gaussian bumps in the hyperbolic distance,
    repeated over the orbit of a group preset when `group` is set.
    kind "flat-band": phi depends on the signed distance r to the real
    diameter, with phi' = -tanh(r) inside |r| <= width (curvature 0) and a
    Gaussian-damped continuation outside (curvature <= 0).
    """

    kind: str
    K: float = -1.0
    bumps: tuple[Bump, ...] = ()
    group: str | None = None
    equivariance_radius: float | None = None
    band_width: float = 0.5
    band_tail: float = 0.5
    whitelisted: bool = False
    _cache: dict = field(default_factory=dict, repr=False)

    # -- constructors -----------------------------------------------------

    @classmethod
    def constant(cls, K: float) -> "MetricSpec":
        return cls("constant", K=float(K))

    @classmethod
    def conformal(
        cls,
        bumps: Sequence[Bump],
        group: str | None = None,
        equivariance_radius: float | None = None,
        validate: bool = True,
    ) -> "MetricSpec":
        m = cls("conformal", bumps=tuple(bumps), group=group, equivariance_radius=equivariance_radius)
        if validate:
            m.validate()
        return m

    @classmethod
    def flat_band(cls, width: float = 0.5, tail: float = 0.5) -> "MetricSpec":
        return cls("flat-band", band_width=float(width), band_tail=float(tail), group="cyclic", whitelisted=True)

    # -- structure ---------------------------------------------------------

    @property
    def has_geometry(self) -> bool:
        return not (self.kind == "constant" and self.K >= 0)

    @cached_property
    def preset(self):
        if self.group is None:
            return None
        from .groups import preset

        return preset(self.group)

    @cached_property
    def _centers(self):
        if self.kind != "conformal" or not self.bumps:
            return np.zeros(0, complex), np.zeros(0), np.zeros(0)
        centers = np.array([b.center for b in self.bumps])
        eps = np.array([b.eps for b in self.bumps])
        sig = np.array([b.sigma for b in self.bumps])
        if self.preset is None:
            return centers, eps, sig
        from .geometry import ORIGIN
        from .groups import enumerate_orbit

        reach = self.preset.domain_radius if math.isfinite(self.preset.domain_radius) else 6.0
        R = self.equivariance_radius
        if R is None:
            R = reach + 6.0 * float(np.max(sig)) + 1.0
        # every bump within R of the origin contributes near the domain
        far = float(np.max(2.0 * np.arctanh(np.abs(centers))))
        table = enumerate_orbit(self.preset, ORIGIN, R + far)
        m = table.mats
        alpha = ((m[:, 0] + m[:, 3]) + 1j * (m[:, 1] - m[:, 2])) / 2.0
        beta = ((m[:, 0] - m[:, 3]) - 1j * (m[:, 1] + m[:, 2])) / 2.0
        out_c, out_e, out_s = [], [], []
        for c, e, s in zip(centers, eps, sig):
            img = (alpha * c + beta) / (np.conj(beta) * c + np.conj(alpha))
            keep = dist_array(0j, img) <= R
            out_c.append(img[keep])
            out_e.append(np.full(keep.sum(), e))
            out_s.append(np.full(keep.sum(), s))
        return np.concatenate(out_c), np.concatenate(out_e), np.concatenate(out_s)

    @cached_property
    def _band_phi(self):
        w, tau = self.band_width, self.band_tail
        rmax = w + 12.0 * tau
        rs = np.linspace(0.0, rmax, 200_001)
        dphi = -np.tanh(rs) * self._chi(rs)
        phi = integrate.cumulative_trapezoid(dphi, rs, initial=0.0)
        # exact inside the flat collar
        inside = rs <= w
        phi[inside] = -np.log(np.cosh(rs[inside]))
        shift = -math.log(math.cosh(w)) - phi[np.searchsorted(rs, w)]
        phi[~inside] += shift
        return interpolate.CubicSpline(rs, phi), rmax, float(phi[-1])

    def _chi(self, r):
        r = np.abs(r)
        w, tau = self.band_width, self.band_tail
        return np.where(r <= w, 1.0, np.exp(-((r - w) ** 2) / (2.0 * tau * tau)))

    def _chi_prime(self, r):
        s = np.sign(r)
        a = np.abs(r)
        w, tau = self.band_width, self.band_tail
        return np.where(a <= w, 0.0, -s * (a - w) / (tau * tau) * np.exp(-((a - w) ** 2) / (2.0 * tau * tau)))

    # -- evaluation --------------------------------------------------------

    def fold(self, z: complex) -> complex:
        if self.preset is None:
            return z
        from .groups import fold_to_domain

        zz, _ = fold_to_domain(self.preset, DiskPoint.from_complex(z))
        return zz.z

    def phi_terms(self, z: complex) -> tuple[float, complex, float]:
        """(phi, grad phi, hyperbolic Laplacian of phi) at chart point z (no folding)."""
        if self.kind == "constant":
            if self.K >= 0:
                raise MetricValidationError("constant K >= 0 has no disk realisation")
            return -0.5 * math.log(-self.K), 0j, 0.0
        if self.kind == "conformal":
            c, e, s = self._centers
            if c.size == 0:
                return 0.0, 0j, 0.0
            return _bump_terms(z, c, e, s)
        if self.kind == "flat-band":
            r2 = abs(z) ** 2
            S = 2.0 * z.imag / (1.0 - r2)
            r = math.asinh(S)
            spline, rmax, phi_far = self._band_phi
            ar = abs(r)
            phi = float(spline(ar)) if ar < rmax else phi_far
            dphi = -math.tanh(r) * float(self._chi(r))
            ddphi = -float(self._chi(r)) / math.cosh(r) ** 2 - math.tanh(r) * float(self._chi_prime(r))
            lap = ddphi + math.tanh(r) * dphi
            grad_S = complex(2.0 * z.imag * 2.0 * z.real, 2.0 * (1.0 - r2) + 2.0 * z.imag * 2.0 * z.imag) / (1.0 - r2) ** 2
            grad = dphi * grad_S / math.sqrt(1.0 + S * S)
            return phi, grad, lap
        raise MetricValidationError(f"unknown metric kind {self.kind!r}")

    def curvature_chart(self, z: complex) -> float:
        if self.kind == "constant":
            return self.K
        phi, _, lap = self.phi_terms(z)
        return math.exp(-2.0 * phi) * (-1.0 - lap)

    def validate(self, n_radial: int = 24, n_angular: int = 48) -> None:
        """Reject the metric unless K < 0 on a polar grid covering the domain."""
        if self.kind == "constant" or self.whitelisted:
            return
        reach = 3.0
        if self.preset is not None and math.isfinite(self.preset.domain_radius):
            reach = self.preset.domain_radius
        worst = -math.inf
        for rho in np.linspace(0.0, reach, n_radial):
            t = math.tanh(rho / 2.0)
            for th in np.linspace(0.0, 2 * math.pi, n_angular, endpoint=False):
                worst = max(worst, self.curvature_chart(t * complex(math.cos(th), math.sin(th))))
        if not worst < 0:
            raise MetricValidationError(f"curvature reaches {worst:.3g} >= 0 on the validation grid")
        self._cache["max_curvature"] = worst

    def curvature_range(self, n_radial: int = 24, n_angular: int = 48) -> tuple[float, float]:
        if self.kind == "constant":
            return self.K, self.K
        reach = 3.0
        if self.preset is not None and math.isfinite(self.preset.domain_radius):
            reach = self.preset.domain_radius
        vals = []
        for rho in np.linspace(0.0, reach, n_radial):
            t = math.tanh(rho / 2.0)
            for th in np.linspace(0.0, 2 * math.pi, n_angular, endpoint=False):
                vals.append(self.curvature_chart(t * complex(math.cos(th), math.sin(th))))
        return min(vals), max(vals)

    def speed(self, z: complex, w: complex) -> float:
        """Metric length of the chart velocity w at z."""
        phi, _, _ = self.phi_terms(z)
        return math.exp(phi) * 2.0 * abs(w) / (1.0 - abs(z) ** 2)

    def unit_velocity(self, v: UnitTangent) -> complex:
        z = v.base.z
        phi, _, _ = self.phi_terms(z)
        return cmath_exp(v.dir) * (1.0 - abs(z) ** 2) / (2.0 * math.exp(phi))


def cmath_exp(theta: float) -> complex:
    return complex(math.cos(theta), math.sin(theta))


def curvature_at(metric: MetricSpec, z: DiskPoint) -> float:
    if metric.kind == "constant":
        return metric.K
    return metric.curvature_chart(metric.fold(z.z))


def load_bumps(table: dict) -> tuple[list[Bump], str | None, float | None]:
    """Bump list from a parsed config table: [[bump]] entries plus group/equivariance_radius."""
    allowed = {"bump", "group", "equivariance_radius"}
    extra = set(table) - allowed
    if extra:
        raise MetricValidationError(f"unknown metric keys: {sorted(extra)}")
    bumps = []
    for entry in table.get("bump", []):
        keys = {"center_x", "center_y", "eps", "sigma"}
        if set(entry) != keys:
            raise MetricValidationError(f"bump entries need exactly {sorted(keys)}")
        bumps.append(Bump(float(entry["center_x"]), float(entry["center_y"]), float(entry["eps"]), float(entry["sigma"])))
    return bumps, table.get("group"), table.get("equivariance_radius")


# ---------------------------------------------------------------------------
# geodesics


@dataclass(frozen=True, eq=False)
class GeodesicTrace:
    """Samples of a unit-speed geodesic at spacing dt (positions folded if `folded`)."""

    t: np.ndarray
    z: np.ndarray
    w: np.ndarray
    dt: float
    T: float
    metric: MetricSpec
    folded: bool
    drift: float

    @cached_property
    def curvature(self) -> np.ndarray:
        return np.array([self.metric.curvature_chart(complex(z)) for z in self.z])

    def end_tangent(self) -> UnitTangent:
        z = complex(self.z[-1])
        w = complex(self.w[-1])
        return UnitTangent(DiskPoint.from_complex(z), math.atan2(w.imag, w.real))

    def to_csv(self, path, u: np.ndarray | None = None) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["t", "x", "y", "u"])
            for i in range(len(self.t)):
                uu = "" if u is None else f"{u[i]:.17g}"
                wr.writerow([f"{self.t[i]:.17g}", f"{self.z[i].real:.17g}", f"{self.z[i].imag:.17g}", uu])


def _accel(metric: MetricSpec, z: complex, w: complex) -> complex:
    _, gphi, _ = metric.phi_terms(z)
    g = gphi + 2.0 * z / (1.0 - abs(z) ** 2)
    dot = g.real * w.real + g.imag * w.imag
    return -2.0 * dot * w + (abs(w) ** 2) * g


def _needs_fold(preset, z: complex, centers: np.ndarray) -> bool:
    r2 = abs(z) ** 2
    d0 = r2 / (1.0 - r2)
    dc = np.abs(z - centers) ** 2 / ((1.0 - r2) * (1.0 - np.abs(centers) ** 2))
    return bool(np.any(dc < d0 - 1e-12 * (1.0 + d0)))


def _fold_state(preset, z: complex, w: complex) -> tuple[complex, complex]:
    from .groups import fold_to_domain

    zz, g = fold_to_domain(preset, DiskPoint.from_complex(z))
    a, b = g.su11
    der = 1.0 / (b.conjugate() * z + a.conjugate()) ** 2
    return zz.z, der * w


def _integrate(metric: MetricSpec, v: UnitTangent, T: float, h: float, fold: bool):
    n = int(round(T / h))
    if n <= 0:
        raise ValueError("horizon must be positive")
    z = v.base.z
    w = metric.unit_velocity(v)
    zs = np.empty(n + 1, complex)
    ws = np.empty(n + 1, complex)
    zs[0], ws[0] = z, w
    preset = metric.preset if fold else None
    centers = None
    if preset is not None:
        centers = np.array([p.apply(DiskPoint(0.0, 0.0)).z for p in preset.side_pairings])
        if _needs_fold(preset, z, centers):
            z, w = _fold_state(preset, z, w)
            zs[0], ws[0] = z, w
    drift = 0.0
    for i in range(n):
        k1z, k1w = w, _accel(metric, z, w)
        z2, w2 = z + 0.5 * h * k1z, w + 0.5 * h * k1w
        k2z, k2w = w2, _accel(metric, z2, w2)
        z3, w3 = z + 0.5 * h * k2z, w + 0.5 * h * k2w
        k3z, k3w = w3, _accel(metric, z3, w3)
        z4, w4 = z + h * k3z, w + h * k3w
        k4z, k4w = w4, _accel(metric, z4, w4)
        z = z + h / 6.0 * (k1z + 2 * k2z + 2 * k3z + k4z)
        w = w + h / 6.0 * (k1w + 2 * k2w + 2 * k3w + k4w)
        if abs(z) >= 1.0:
            raise StepFailure("geodesic left the disk chart; enable folding or shorten the horizon")
        if preset is not None and _needs_fold(preset, z, centers):
            z, w = _fold_state(preset, z, w)
        zs[i + 1], ws[i + 1] = z, w
        drift = max(drift, abs(metric.speed(z, w) - 1.0))
        if drift > 1e-5:
            raise StepFailure(f"unit-speed drift {drift:.2e} at t = {(i + 1) * h:.4g}")
    return zs, ws, drift


def geodesic_flow(
    metric: MetricSpec,
    v: UnitTangent,
    T: float,
    dt: float,
    *,
    fold: bool = False,
    max_halvings: int = 4,
) -> GeodesicTrace:
    """Fixed-step RK4 geodesic of the metric, retried with dt/2 when speed drifts."""
    if dt > 1e-2 + 1e-15:
        raise ValueError("dt must be at most 1e-2")
    if not metric.has_geometry:
        raise MetricValidationError("this metric has no disk realisation")
    h = dt
    for attempt in range(max_halvings + 1):
        try:
            zs, ws, drift = _integrate(metric, v, T, h, fold)
            break
        except StepFailure:
            if attempt == max_halvings:
                raise
            h /= 2.0
    n = len(zs) - 1
    return GeodesicTrace(np.arange(n + 1) * h, zs, ws, h, T, metric, fold and metric.preset is not None, drift)


# ---------------------------------------------------------------------------
# Jacobi and Riccati


def _k_half(K_signal, T: float, dt: float) -> np.ndarray:
    """Curvature at half steps: constant, or an array already sampled at dt/2."""
    n = int(round(T / dt))
    if np.isscalar(K_signal):
        return np.full(2 * n + 1, float(K_signal))
    k = np.asarray(K_signal, dtype=float)
    if k.size < 2 * n + 1:
        raise ValueError(f"curvature signal has {k.size} samples, need {2 * n + 1} at spacing dt/2")
    return k[: 2 * n + 1]


@dataclass(frozen=True, eq=False)
class JacobiSolution:
    t: np.ndarray
    j: np.ndarray
    jp: np.ndarray

    def first_zero(self) -> float | None:
        """First interior zero by linear interpolation between sign changes."""
        s = np.sign(self.j)
        for i in range(1, len(self.j) - 1):
            if s[i] == 0 and i > 0:
                return float(self.t[i])
            if s[i] * s[i + 1] < 0:
                a, b = self.j[i], self.j[i + 1]
                # cubic Hermite root refinement on [t_i, t_{i+1}]
                h = self.t[i + 1] - self.t[i]
                return float(_hermite_root(self.t[i], h, a, b, self.jp[i], self.jp[i + 1]))
        return None


def _hermite_root(t0, h, a, b, da, db):
    from scipy.optimize import brentq

    def p(s):
        x = s
        h00 = 2 * x**3 - 3 * x**2 + 1
        h10 = x**3 - 2 * x**2 + x
        h01 = -2 * x**3 + 3 * x**2
        h11 = x**3 - x**2
        return h00 * a + h10 * h * da + h01 * b + h11 * h * db

    return t0 + h * brentq(p, 0.0, 1.0, xtol=1e-15)


def jacobi_solve(K_signal, j0: float, j0p: float, T: float, dt: float) -> JacobiSolution:
    """j'' + K j = 0 by RK4; K_signal is a constant or samples at spacing dt/2."""
    k = _k_half(K_signal, T, dt)
    j, jp = kernels.jacobi_rk4(k, dt, j0, j0p)
    return JacobiSolution(np.arange(len(j)) * dt, j, jp)


@dataclass(frozen=True, eq=False)
class RiccatiTrace:
    t: np.ndarray
    u: np.ndarray
    lifted: np.ndarray
    kind: str
    k_half: np.ndarray = field(repr=False)
    dt: float = 0.0

    def residual(self) -> np.ndarray:
        """|u' + u^2 + K| at interval midpoints from the cubic Hermite interpolant,
        scaled by 1 + u^2; intervals touching the linear lift are skipped."""
        u = self.u
        k = self.k_half
        dt = self.dt
        d = -u * u - k[0::2]
        um = 0.5 * (u[:-1] + u[1:]) + dt / 8.0 * (d[:-1] - d[1:])
        dm = 1.5 * (u[1:] - u[:-1]) / dt - 0.25 * (d[:-1] + d[1:])
        res = np.abs(dm + um * um + k[1::2]) / (1.0 + um * um)
        ok = (self.lifted[:-1] == 0) & (self.lifted[1:] == 0) & np.isfinite(res)
        return np.where(ok, res, 0.0)


def riccati_solve(K_signal, u0: float, T: float, dt: float, kind: str = "custom-initial") -> RiccatiTrace:
    """u' + u^2 + K = 0; poles are crossed through the linear (j, j') lift."""
    k = _k_half(K_signal, T, dt)
    u, lifted = kernels.riccati_rk4(k, dt, u0)
    return RiccatiTrace(np.arange(len(u)) * dt, u, lifted.astype(np.int8), kind, k, dt)


def curvature_signal(metric: MetricSpec, v: UnitTangent, T: float, dt: float) -> np.ndarray | float:
    """K along the geodesic of v at spacing dt/2 over [0, T] (or the constant)."""
    if metric.kind == "constant":
        return metric.K
    trace = geodesic_flow(metric, v, T, dt / 2.0, fold=metric.preset is not None, max_halvings=0)
    return trace.curvature


# ---------------------------------------------------------------------------
# Green bundles


@dataclass(frozen=True)
class GreenLimit:
    side: str
    S: tuple[float, ...]
    values: tuple[float, ...]
    increments: tuple[float, ...]
    limit: float
    extrapolated: bool


def _boundary_value(k_rev: np.ndarray, dt: float) -> tuple[float, float]:
    # J'' + K J = 0 from J(0) = 0, J'(0) = 1 over the reversed signal
    j, jp = kernels.jacobi_rk4(k_rev, dt, 0.0, 1.0)
    return float(j[-1]), float(jp[-1])


def green_limit(metric: MetricSpec, v: UnitTangent, side: str, S_list: Sequence[float], dt: float) -> GreenLimit:
    """u_S(0) = j'(0) for j(0) = 1, j(+S) = 0 (stable) or j(-S) = 0 (unstable).

    The limit is the last value when increments shrink geometrically by
    more than 4x per step, otherwise a + b/S extrapolation from the last two.
    """
    S_list = sorted(float(s) for s in S_list)
    if len(S_list) < 3:
        raise ValueError("need at least three horizons")
    if side not in ("stable", "unstable"):
        raise ValueError("side must be 'stable' or 'unstable'")
    Smax = S_list[-1]
    vv = v if side == "stable" else v.reversed()
    ks = curvature_signal(metric, vv, Smax, dt)
    vals = []
    for S in S_list:
        n = int(round(S / dt))
        k = np.full(2 * n + 1, float(ks)) if np.isscalar(ks) else np.asarray(ks)[: 2 * n + 1][::-1]
        J, Jp = _boundary_value(k, dt)
        if J <= 0:
            raise NonConvergence(f"Jacobi field vanishes on (0, {S}]: conjugate point")
        # stable: j(t) = J(S - t), so j'(0) = -J'(S); unstable: j(t) = J(S + t)
        vals.append(-Jp / J if side == "stable" else Jp / J)
    inc = [abs(vals[i + 1] - vals[i]) for i in range(len(vals) - 1)]
    if any(inc[i + 1] > inc[i] * (1 + 1e-9) + 1e-14 for i in range(len(inc) - 1)):
        raise NonConvergence(f"Cauchy increments do not decrease: {inc}")
    geometric = all(inc[i + 1] <= inc[i] / 4.0 for i in range(len(inc) - 1))
    if geometric:
        lim, extra = vals[-1], False
    else:
        s1, s2 = S_list[-2], S_list[-1]
        u1, u2 = vals[-2], vals[-1]
        lim, extra = (s2 * u2 - s1 * u1) / (s2 - s1), True
    return GreenLimit(side, tuple(S_list), tuple(vals), tuple(inc), lim, extra)


@dataclass(frozen=True)
class RegularityVerdict:
    u_plus_at_0: float
    u_minus_at_0: float
    gap: float
    verdict: str
    tol: float
    bounded_asymptote_ratio: float


def classify_regularity(
    metric: MetricSpec, v: UnitTangent, S_list: Sequence[float], dt: float, tol: float = 1e-3
) -> RegularityVerdict:
    """u+ is the stable limit (j(+S) = 0), u- the unstable one (j(-S) = 0)."""
    st = green_limit(metric, v, "stable", S_list, dt)
    un = green_limit(metric, v, "unstable", S_list, dt)
    gap = un.limit - st.limit
    if gap > tol:
        verdict = "regular"
    elif gap < tol / 10.0:
        verdict = "singular"
    else:
        verdict = "undecided"
    # stable boundary solution at the largest horizon, read on [0, S/2]
    Smax = max(S_list)
    n = int(round(Smax / dt))
    ks = curvature_signal(metric, v, Smax, dt)
    k = np.full(2 * n + 1, float(ks)) if np.isscalar(ks) else np.asarray(ks)[: 2 * n + 1][::-1]
    J, _ = kernels.jacobi_rk4(k, dt, 0.0, 1.0)
    js = J[::-1]  # j(t) = J(S - t)
    half = n // 2
    ratio = float(np.max(js[: half + 1]) / js[0])
    return RegularityVerdict(st.limit, un.limit, gap, verdict, tol, ratio)


# ---------------------------------------------------------------------------
# Lyapunov exponents


@dataclass(frozen=True)
class LyapunovEstimate:
    chi: float
    tail_variance: float
    chi_growth: float
    T: float


def lyapunov_exponent(metric: MetricSpec, v: UnitTangent, T: float, dt: float, window: float = 5.0) -> LyapunovEstimate:
    """Time average of the unstable Riccati solution along the geodesic of v."""
    if T < 50:
        raise ValueError("horizon must be at least 50")
    ks = curvature_signal(metric, v, T, dt)
    S = [4.0, 8.0, 16.0]
    try:
        u0 = green_limit(metric, v, "unstable", S, dt).limit
    except NonConvergence:
        u0 = 0.0
    tr = riccati_solve(ks, u0, T, dt, kind="unstable")
    u = tr.u
    chi = float(integrate.trapezoid(u, dx=dt) / T)
    # independent route: growth of the Jacobi field with j'(0) = u0 j(0)
    sol = jacobi_solve(ks, 1.0, u0, T, dt)
    chi_growth = float(math.log(abs(sol.j[-1])) / T)
    n = len(u) - 1
    wn = max(1, int(round(window / dt)))
    tail = u[n // 2 :]
    chunks = [tail[i : i + wn].mean() for i in range(0, len(tail) - wn + 1, wn)]
    var = float(np.var(chunks)) if len(chunks) > 1 else 0.0
    return LyapunovEstimate(chi, var, chi_growth, float(T))


# ---------------------------------------------------------------------------
# strips


@dataclass(frozen=True)
class StripProbe:
    offsets: tuple[float, ...]
    max_separation: tuple[float, ...]
    growth: tuple[float, ...]
    strip: tuple[bool, ...]


def _offset_tangent(metric: MetricSpec, v: UnitTangent, offset: float, dt: float) -> UnitTangent:
    if offset == 0.0:
        return v
    side = math.pi / 2 if offset > 0 else -math.pi / 2
    n = UnitTangent(v.base, v.dir + side)
    tr = geodesic_flow(metric, n, abs(offset), min(dt, abs(offset) / 4.0))
    end = tr.end_tangent()
    # parallel transport of v along the transversal: its velocity rotated back
    return UnitTangent(end.base, end.dir - side)


def strip_probe(
    metric: MetricSpec, v: UnitTangent, offsets: Sequence[float], T: float, dt: float = 5e-3, bound: float = 2.0
) -> StripProbe:
    """Separation from the geodesic of v of geodesics started at transversal offsets.

    A separation that stays within `bound` times the initial offset on
    [-T, T] flags a strip candidate.
    """
    fwd0 = geodesic_flow(metric, v, T, dt)
    bwd0 = geodesic_flow(metric, v.reversed(), T, dt)
    seps, growth, flags = [], [], []
    for off in offsets:
        if off == 0.0:
            seps.append(0.0)
            growth.append(1.0)
            flags.append(False)
            continue
        w = _offset_tangent(metric, v, float(off), dt)
        fwd = geodesic_flow(metric, w, T, fwd0.dt)
        bwd = geodesic_flow(metric, w.reversed(), T, bwd0.dt)
        m = min(len(fwd.z), len(fwd0.z))
        mb = min(len(bwd.z), len(bwd0.z))
        d1 = np.array([_dist(a, b) for a, b in zip(fwd.z[:m], fwd0.z[:m])])
        d2 = np.array([_dist(a, b) for a, b in zip(bwd.z[:mb], bwd0.z[:mb])])
        s = float(max(d1.max(), d2.max()))
        seps.append(s)
        growth.append(s / abs(off))
        flags.append(s <= bound * abs(off) * (1.0 + 1e-6) + 1e-9)
    return StripProbe(tuple(float(o) for o in offsets), tuple(seps), tuple(growth), tuple(flags))


def _dist(a: complex, b: complex) -> float:
    from .geometry import _dist_c

    return max(0.0, _dist_c(complex(a), complex(b)))
