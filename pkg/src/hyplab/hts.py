"""Divergence-type and recurrence diagnostics for the geodesic flow of a quotient."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .flow import MetricSpec, MetricValidationError
from .geometry import ORIGIN, dist_array
from .groups import GroupPreset
from .patterson import InsufficientData, critical_exponent, poincare_partial

RECURRENCE_CHUNK = 64


@dataclass(frozen=True)
class DivergenceReport:
    s: float
    radii: tuple[float, ...]
    partial_sums: tuple[float, ...]
    increment_slope: float
    linear_residual: float
    verdict: str


def divergence_diagnostic(
    g: GroupPreset,
    R_list: Sequence[float],
    s: float | None = None,
    *,
    slope_tol: float = 0.1,
    residual_tol: float = 0.2,
) -> DivergenceReport:
    """Classify the growth of P(s, R) in R as linear, saturating or inconclusive.

    Shell increments of the partial sums behave like e^{(delta - s) R}: a
    log-slope near zero with a good linear fit reads as divergence at s, a
    clearly negative slope as convergence.
    """
    radii = np.asarray(sorted(R_list), dtype=float)
    if radii.size < 3:
        raise InsufficientData("need at least three radii")
    if s is None:
        s = critical_exponent(g, ORIGIN, radii).delta
    sums = np.array([poincare_partial(g, ORIGIN, ORIGIN, s, float(R)).partial_sum for R in radii])
    inc = np.diff(sums) / np.diff(radii)
    if np.any(inc <= 0):
        raise InsufficientData("an orbit shell is empty")
    mids = 0.5 * (radii[1:] + radii[:-1])
    slope = float(np.polyfit(mids, np.log(inc), 1)[0]) if mids.size >= 2 else 0.0
    fit = np.polyval(np.polyfit(radii, sums, 1), radii)
    resid = float(np.max(np.abs(sums - fit)) / max(sums[-1] - sums[0], 1e-300))
    if slope < -slope_tol:
        verdict = "saturating-convergent"
    elif abs(slope) <= slope_tol and resid <= residual_tol:
        verdict = "linear-divergent"
    else:
        verdict = "inconclusive"
    return DivergenceReport(float(s), tuple(radii), tuple(float(x) for x in sums), slope, resid, verdict)


@dataclass(frozen=True)
class RecurrenceSample:
    n_geodesics: int
    T: float
    core_radius: float
    min_returns: int
    returns: tuple[int, ...]
    escaped: tuple[bool, ...]

    @property
    def fraction_recurrent(self) -> float:
        return float(np.mean(np.asarray(self.returns) >= self.min_returns))


def _sample_domain(g: GroupPreset, n: int, radius: float, rng: np.random.Generator) -> np.ndarray:
    """Area-uniform points of the Dirichlet domain inside the ball of the given radius."""
    centers = np.array([p.apply(ORIGIN).z for p in g.side_pairings])
    out = np.empty(0, complex)
    while out.size < n:
        u = rng.random(2 * n)
        rho = np.arccosh(1.0 + u * (math.cosh(radius) - 1.0))
        z = np.tanh(rho / 2.0) * np.exp(2j * math.pi * rng.random(2 * n))
        d0 = 2.0 * np.arctanh(np.abs(z))
        ok = np.all([d0 <= dist_array(c, z) for c in centers], axis=0)
        out = np.concatenate([out, z[ok]])
    return out[:n]


def radial_recurrence_sample(
    g: GroupPreset,
    metric: MetricSpec | None,
    n_geodesics: int,
    T: float,
    core_radius: float,
    *,
    seed: int = 0,
    dt: float = 0.01,
    min_returns: int = 10,
    sample_radius: float | None = None,
    escape_radius: float = 30.0,
    threads: int = 1,
) -> RecurrenceSample:
    """Entries of folded constant-curvature geodesics into the core ball around o.

    Initial vectors are area-uniform in the domain (within `sample_radius`,
    default the circumradius or 1 for infinite domains) with uniform
    directions.  A geodesic whose folded position passes `escape_radius`
    has left every compact set and stops counting.
    """
    if core_radius <= 0 or n_geodesics <= 0:
        raise ValueError("need a positive core radius and sample size")
    if metric is not None and not (metric.kind == "constant" and metric.K == -1.0):
        raise MetricValidationError("folded recurrence sampling runs the curvature -1 flow only")
    if sample_radius is None:
        sample_radius = g.domain_radius if math.isfinite(g.domain_radius) else 1.0
    alpha, beta = g.pairing_su11
    nsteps = int(round(T / dt))
    # fixed chunks with spawned seeds: the result does not depend on `threads`
    sizes = [min(RECURRENCE_CHUNK, n_geodesics - k) for k in range(0, n_geodesics, RECURRENCE_CHUNK)]
    streams = np.random.SeedSequence(seed).spawn(len(sizes))

    def run(job):
        size, ss = job
        rng = np.random.default_rng(ss)
        z0 = _sample_domain(g, size, sample_radius, rng)
        dirs = 2.0 * math.pi * rng.random(size)
        r = kernels.flow_fold(alpha, beta, z0, dirs, dt, nsteps, escape_radius)
        inside = r <= core_radius
        return np.sum(inside[:, 1:] & ~inside[:, :-1], axis=1), ~np.isfinite(r[:, -1])

    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        parts = list(pool.map(run, zip(sizes, streams)))
    entries = np.concatenate([p[0] for p in parts])
    escaped = np.concatenate([p[1] for p in parts])
    return RecurrenceSample(
        n_geodesics, float(T), float(core_radius), int(min_returns),
        tuple(int(e) for e in entries), tuple(bool(e) for e in escaped),
    )
