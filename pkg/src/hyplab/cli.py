"""Command-line entry point: one subcommand per experiment family.

Every run writes <experiment>.json (resolved config, schema version,
timestamp, results) plus the experiment's CSV artifacts into --out.
Exit codes: 0 success, 2 configuration error, 3 budget exceeded,
4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import asymptotics, entropy, flow, hts, patterson
from .config import EXPERIMENTS, KNOBS, SCHEMA_VERSION, ConfigError, RunConfig, load_file, resolve
from .geometry import ORIGIN, BoundaryArc, DiskPoint, GeometryError, UnitTangent
from .groups import BudgetExceeded, FoldingFailed, GroupError, NonHyperbolicError, enumerate_orbit, preset

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_NUMERIC = 0, 2, 3, 4
SHADOW_MARGIN = 4.0

NUMERICAL_ERRORS = (
    flow.StepFailure, flow.NonConvergence, FoldingFailed, NonHyperbolicError,
    patterson.InsufficientData, FloatingPointError, ZeroDivisionError,
)


def _point(xy) -> DiskPoint:
    return DiskPoint(float(xy[0]), float(xy[1]))


def _fmt(v) -> str:
    return f"{v:.17g}" if isinstance(v, float) else str(v)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(float(v)) if isinstance(v, (float, np.floating)) else _fmt(v) for v in row])


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def _metric(cfg: RunConfig) -> flow.MetricSpec:
    if cfg.metric == "constant":
        return flow.MetricSpec.constant(cfg.K)
    if cfg.metric == "flat-band":
        return flow.MetricSpec.flat_band(cfg.band_width)
    bumps, _, _ = flow.load_bumps({"bump": cfg.bumps})
    return flow.MetricSpec.conformal(bumps, group=cfg.preset, equivariance_radius=cfg.equivariance_radius)


def _delta(cfg: RunConfig, g) -> float:
    return patterson.critical_exponent(g, ORIGIN, cfg.radii).delta


def _tangent(cfg: RunConfig) -> UnitTangent:
    return UnitTangent(_point(cfg.x), cfg.theta)


# ---------------------------------------------------------------------------
# experiments: each returns (results, artifact file names)


def run_orbit(cfg, out):
    g = preset(cfg.preset)
    table = enumerate_orbit(g, _point(cfg.x), cfg.R, cap=cfg.cap)
    table.to_csv(out / "orbit.csv")
    d = table.displacements
    return {"elements": len(table), "radius": cfg.R, "max_displacement": float(d.max())}, ["orbit.csv"]


def run_exponent(cfg, out):
    g = preset(cfg.preset)
    est = patterson.critical_exponent(g, ORIGIN, cfg.radii)
    res = {"delta": est.delta, "band": est.band, "radii": list(est.radii), "counts": list(est.counts)}
    if g.is_cocompact:
        # volume entropy from the flattening of h b_t e^{-h t} in curvature -1
        vol = asymptotics.sphere_volume_jacobi(flow.MetricSpec.constant(-1.0), ORIGIN, max(cfg.radii), n_dirs=1, dt=1e-2, h=1.0)
        h_vol = asymptotics.flattening_entropy(np.array(vol.t_grid), np.array(vol.ball_vols))
        res.update(h_vol=h_vol, delta_minus_h_vol=est.delta - h_vol)
    return res, []


def run_ps(cfg, out):
    g = preset(cfg.preset)
    delta = _delta(cfg, g)
    s = cfg.s if cfg.s is not None else delta + 0.05
    x, y = _point(cfg.x), _point(cfg.y)
    mu = patterson.ps_measure(g, x, s, cfg.R)
    mu.outer_layer(cfg.R - cfg.layer).histogram_csv(out / "ps_histogram.csv", cfg.nbins)
    res = {"delta_hat": delta, "s": s, "R": cfg.R, "atoms": int(mu.points.size), "total_mass": mu.total_mass}
    if x != y:
        rows = patterson.conformality_check(g, x, y, s, cfg.R, nbins=16, p0=ORIGIN, layer=cfg.layer)
        res["conformality"] = [{"center": r.arc.center, "atoms": r.atoms, "ratio": r.ratio, "predicted": r.predicted, "rel_err": r.rel_err} for r in rows]
        res["max_rel_err"] = max((r.rel_err for r in rows), default=None)
    return res, ["ps_histogram.csv"]


def run_shadow(cfg, out):
    g = preset(cfg.preset)
    delta = _delta(cfg, g)
    # the measure is read beyond the largest ball: keep a few shells past d_max + r
    R = max(cfg.R, cfg.d_max + cfg.r + SHADOW_MARGIN)
    rep = patterson.shadow_lemma_check(
        g, _point(cfg.x), cfg.r, (cfg.d_min, cfg.d_max), cfg.samples, delta=delta, R=R, seed=cfg.seed
    )
    _write_csv(out / "shadow.csv", ["displacement", "atoms", "rho"], [(s.displacement, s.atoms, s.rho) for s in rep.samples])
    mid = 0.5 * (cfg.d_min + cfg.d_max)
    res = {
        "delta_hat": delta, "samples": len(rep.samples), "flagged": rep.flagged, "min": rep.min, "max": rep.max,
        "spread": rep.spread, "spread_lower": rep.spread_in(cfg.d_min, mid), "spread_upper": rep.spread_in(mid, cfg.d_max),
        "log_slope": rep.log_slope, "R_used": R,
    }
    return res, ["shadow.csv"]


def run_bm(cfg, out):
    g = preset(cfg.preset)
    delta = _delta(cfg, g) if cfg.s is None else cfg.s
    mu = patterson.ps_measure(g, ORIGIN, delta, cfg.R).outer_layer(cfg.R - cfg.layer)
    rows = []
    for k in range(cfg.boxes):
        c = 2.0 * math.pi * k / cfg.boxes
        P, F = BoundaryArc(c, 0.3), BoundaryArc(c + math.pi, 0.3)
        bm = patterson.bm_box_mass(mu, P, F, 1.0, delta).bm_mass
        lv = patterson.liouville_box_mass(P, F, 1.0)
        rows.append((c, bm, lv, bm / lv))
    _write_csv(out / "bm_boxes.csv", ["center", "bm_mass", "liouville_mass", "ratio"], rows)
    ratios = np.array([r[3] for r in rows])
    return {"delta_hat": delta, "ratios": list(ratios), "ratio_spread": float(ratios.max() / ratios.min())}, ["bm_boxes.csv"]


def run_flow(cfg, out):
    m = _metric(cfg)
    tr = flow.geodesic_flow(m, _tangent(cfg), cfg.T, cfg.dt, fold=m.preset is not None)
    tr.to_csv(out / "flow.csv")
    end = tr.end_tangent()
    return {"end_x": end.base.x, "end_y": end.base.y, "end_dir": end.dir, "drift": tr.drift, "dt_used": tr.dt}, ["flow.csv"]


def run_green(cfg, out):
    m = _metric(cfg)
    v = _tangent(cfg)
    st = flow.green_limit(m, v, "stable", cfg.S, cfg.dt)
    un = flow.green_limit(m, v, "unstable", cfg.S, cfg.dt)
    verdict = flow.classify_regularity(m, v, cfg.S, cfg.dt, cfg.tol)
    res = {
        "stable": {"values": list(st.values), "increments": list(st.increments), "limit": st.limit},
        "unstable": {"values": list(un.values), "increments": list(un.increments), "limit": un.limit},
        "gap": verdict.gap, "verdict": verdict.verdict,
    }
    return res, []


def run_lyapunov(cfg, out):
    est = flow.lyapunov_exponent(_metric(cfg), _tangent(cfg), cfg.T, cfg.dt, cfg.window)
    return {"chi": est.chi, "chi_growth": est.chi_growth, "tail_variance": est.tail_variance, "T": est.T}, []


def run_count(cfg, out):
    g = preset(cfg.preset)
    h = cfg.h if cfg.h is not None else _delta(cfg, g)
    rep = asymptotics.margulis_count(g, cfg.t_max, h, step=cfg.step, cap=cfg.cap)
    rep.to_csv(out / "count.csv")
    first, last = rep.trend()
    return {"h_used": h, "final_count": rep.counts[-1], "final_ratio": rep.ratios[-1], "trend_first": first, "trend_last": last}, ["count.csv"]


def run_equi(cfg, out):
    g = preset(cfg.preset)
    rep = asymptotics.equidistribution_probe(g, cfg.t, (_point(cfg.x), cfg.box_radius), eps=cfg.eps)
    return {"classes": rep.classes, "fraction": rep.fraction, "reference": rep.reference}, []


def run_volume(cfg, out):
    m = _metric(cfg)
    rep = asymptotics.sphere_volume_jacobi(m, _point(cfg.x), cfg.t, n_dirs=cfg.n_dirs, dt=cfg.dt, h=cfg.h)
    rep.to_csv(out / "volume.csv")
    return {"h_used": rep.h_used, "sphere": rep.sphere_vols[-1], "ball": rep.ball_vols[-1], "c_t": rep.normalized[-1]}, ["volume.csv"]


def run_margulis_fn(cfg, out):
    g = preset(cfg.preset)
    delta = cfg.h if cfg.h is not None else _delta(cfg, g)
    x, y = _point(cfg.x), _point(cfg.y)
    est = asymptotics.margulis_function(g, x, y, delta=delta, R=cfg.R, t=cfg.t, layer=cfg.layer)
    tab = asymptotics.orbit_count_asymptotic(g, x, y, np.arange(cfg.step, cfg.t + 1e-9, cfg.step), delta)
    tab.to_csv(out / "orbit_count.csv")
    return {"delta_hat": delta, "c_orbit": est.c_orbit, "c_integral": est.c_integral, "rel_gap": est.rel_gap, "bm_mass": est.bm_mass}, ["orbit_count.csv"]


def run_entropy(cfg, out):
    g = preset(cfg.preset)
    m = _metric(cfg)
    res = {}
    if g.is_cocompact:
        k = entropy.katok_bound_check(g, metric=None if cfg.metric == "constant" and cfg.K == -1.0 else m, R_list=cfg.radii)
        res["katok"] = {"h_sq": k.h_sq, "bound": k.bound, "slack": k.slack, "volume": k.volume, "euler_characteristic": k.euler_characteristic}
    if m.kind == "constant" or cfg.h is not None:
        rng = np.random.default_rng(cfg.seed)
        vs = [UnitTangent(_point(cfg.x), a) for a in 2.0 * math.pi * rng.random(min(cfg.samples, 16))]
        ident = entropy.mean_curvature_identity(m, vs, cfg.T, cfg.dt, cfg.h)
        res["identities"] = {"lhs": list(ident.lhs), "rhs": list(ident.rhs), "rel_err": list(ident.rel_err)}
    sph = entropy.spherical_to_ps(g, _point(cfg.x), cfg.radii, nbins=cfg.nbins, h=cfg.h, layer=cfg.layer)
    _write_csv(out / "spherical.csv", ["R", "total_mass", "tv"], [(r.R, r.total_mass, r.tv) for r in sph.rows])
    res["spherical"] = {"h": sph.h, "tv": [r.tv for r in sph.rows], "total_mass": [r.total_mass for r in sph.rows]}
    return res, ["spherical.csv"]


def run_hts(cfg, out):
    g = preset(cfg.preset)
    div = hts.divergence_diagnostic(g, cfg.radii, cfg.s)
    rec = hts.radial_recurrence_sample(
        g, None, cfg.n_geodesics, cfg.T, cfg.core_radius, seed=cfg.seed, min_returns=cfg.min_returns, threads=cfg.threads
    )
    _write_csv(out / "hts_returns.csv", ["geodesic", "returns", "escaped"], [(i, r, str(e).lower()) for i, (r, e) in enumerate(zip(rec.returns, rec.escaped))])
    res = {
        "delta_hat": div.s, "partial_sums": list(div.partial_sums), "increment_slope": div.increment_slope,
        "linear_residual": div.linear_residual, "growth_fit": div.verdict, "recurrence_fraction": rec.fraction_recurrent,
    }
    return res, ["hts_returns.csv"]


def run_riccati(cfg, out):
    tr = flow.riccati_solve(cfg.K, cfg.u0, cfg.T, cfg.dt)
    _write_csv(out / "riccati.csv", ["t", "u"], zip(tr.t, tr.u))
    return {"u_final": float(tr.u[-1]), "max_residual": float(np.max(tr.residual())), "lifted_steps": int(np.sum(tr.lifted))}, ["riccati.csv"]


RUNNERS = {
    "orbit": run_orbit, "exponent": run_exponent, "ps": run_ps, "shadow": run_shadow, "bm": run_bm,
    "flow": run_flow, "green": run_green, "lyapunov": run_lyapunov, "count": run_count, "equi": run_equi,
    "volume": run_volume, "margulis-fn": run_margulis_fn, "entropy": run_entropy, "hts": run_hts,
    "riccati": run_riccati,
}


# ---------------------------------------------------------------------------
# plumbing


def report_schema() -> dict:
    return json.loads(resources.files("hyplab").joinpath("schemas/report-v1.json").read_text())


def run(cfg: RunConfig) -> dict:
    """Run one experiment and write its artifacts; returns the JSON report."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    results, artifacts = RUNNERS[cfg.experiment](cfg, out)
    report = _clean({
        "schema_version": SCHEMA_VERSION,
        "experiment": cfg.experiment,
        "config": cfg.to_dict(),
        "results": results,
        "artifacts": artifacts,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    })
    jsonschema.validate(report, report_schema())
    name = cfg.experiment.replace("-", "_") + ".json"
    with open(out / name, "w") as fh:
        json.dump(report, fh, sort_keys=True, indent=2, allow_nan=False)
        fh.write("\n")
    return report


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hyplab", description="Numerical experiments on hyperbolic surfaces.")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for exp in EXPERIMENTS:
        sp = sub.add_parser(exp, argument_default=argparse.SUPPRESS)
        sp.add_argument("--config", help="TOML file with knob values; flags override it")
        for name, knob in KNOBS.items():
            if knob.kind == "tables":
                continue  # structured values only from the file
            kw = {"dest": name, "help": knob.help}
            if knob.kind in ("floats", "point"):
                kw.update(nargs="+", type=float)
            elif knob.kind == "int":
                kw["type"] = int
            elif knob.kind == "float":
                kw["type"] = float
            sp.add_argument(_flag(name), **kw)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = vars(parser.parse_args(argv))  # argparse exits with status 2 on bad flags
    experiment = args.pop("experiment")
    cfg_path = args.pop("config", None)
    try:
        file_values = load_file(cfg_path) if cfg_path else {}
        cfg = resolve(experiment, file_values, args)
        run(cfg)
    except BudgetExceeded as exc:
        print(f"hyplab {experiment}: budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except NUMERICAL_ERRORS as exc:
        print(f"hyplab {experiment}: numerical failure in {experiment} ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, flow.MetricValidationError, GroupError, GeometryError, jsonschema.ValidationError, ValueError) as exc:
        # remaining ValueErrors are argument checks of the experiment itself
        print(f"hyplab {experiment}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
