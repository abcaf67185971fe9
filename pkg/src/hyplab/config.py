"""Run configuration: TOML file plus command-line flags, validated against a knob table."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Any

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from .groups import PRESET_NAMES

SCHEMA_VERSION = "1.0"
THREADS_ENV = "HYPLAB_THREADS"
EXECUTION_KNOBS = ("threads", "out")

EXPERIMENTS = (
    "orbit", "exponent", "ps", "shadow", "bm", "flow", "green", "lyapunov",
    "count", "equi", "volume", "margulis-fn", "entropy", "hts", "riccati",
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Knob:
    kind: str  # int, float, str, floats, point, tables
    default: Any
    lo: float | None = None
    hi: float | None = None
    choices: tuple[str, ...] | None = None
    optional: bool = False
    help: str = ""


def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


KNOBS: dict[str, Knob] = {
    "preset": Knob("str", "genus2-octagon", choices=PRESET_NAMES + ("cyclic",), help="group preset"),
    "seed": Knob("int", 0, 0, 2**63 - 1, help="root seed of all random streams"),
    "threads": Knob("int", None, 1, 256, help=f"worker threads (default ${THREADS_ENV} or 1)"),
    "out": Knob("str", ".", help="output directory"),
    "cap": Knob("int", 5_000_000, 1_000, 50_000_000, help="orbit enumeration element cap"),
    "R": Knob("float", 10.0, 0.5, 30.0, help="orbit truncation radius"),
    "radii": Knob("floats", [7.0, 8.0, 9.0, 10.0], 0.5, 30.0, help="radius grid for exponent fits"),
    "s": Knob("float", None, 0.0, 10.0, optional=True, help="Poincare exponent (default from the fit)"),
    "h": Knob("float", None, 0.0, 10.0, optional=True, help="entropy override for ratios and identities"),
    "t_max": Knob("float", 10.0, 0.1, 20.0, help="largest closed-geodesic length"),
    "t": Knob("float", 10.0, 0.01, 30.0, help="time or length scale"),
    "step": Knob("float", 0.5, 0.01, 5.0, help="counting grid spacing"),
    "eps": Knob("float", 0.25, 1e-3, 1.0, help="length window for equidistribution"),
    "dt": Knob("float", 1e-2, 1e-5, 0.1, help="integration step"),
    "T": Knob("float", 10.0, 1e-3, 1e4, help="flow horizon"),
    "K": Knob("float", -1.0, -100.0, 100.0, help="constant curvature"),
    "u0": Knob("float", 0.0, -1e6, 1e6, help="Riccati initial value"),
    "x": Knob("point", [0.0, 0.0], help="base point (disk coordinates)"),
    "y": Knob("point", [0.0, 0.0], help="second point (disk coordinates)"),
    "theta": Knob("float", 0.0, -1e3, 1e3, help="direction angle of the initial vector"),
    "S": Knob("floats", [4.0, 8.0, 16.0], 0.1, 200.0, help="Green-limit horizons"),
    "nbins": Knob("int", 32, 2, 4096, help="histogram bins"),
    "n_dirs": Knob("int", 64, 1, 100_000, help="fan directions"),
    "samples": Knob("int", 100, 1, 1_000_000, help="Monte-Carlo sample count"),
    "d_min": Knob("float", 4.0, 0.0, 30.0, help="smallest shadow displacement"),
    "d_max": Knob("float", 8.0, 0.0, 30.0, help="largest shadow displacement"),
    "r": Knob("float", 2.0, 0.0, 10.0, help="shadow ball radius"),
    "layer": Knob("float", 2.0, 0.1, 10.0, help="outer-shell thickness for boundary readings"),
    "boxes": Knob("int", 5, 1, 64, help="number of Hopf boxes"),
    "core_radius": Knob("float", 1.5, 1e-3, 30.0, help="core ball radius for recurrence"),
    "n_geodesics": Knob("int", 200, 1, 1_000_000, help="sampled geodesics"),
    "min_returns": Knob("int", 10, 1, 1_000_000, help="returns needed to count as recurrent"),
    "box_radius": Knob("float", 0.5, 1e-3, 5.0, help="equidistribution ball radius"),
    "tol": Knob("float", 1e-3, 0.0, 1.0, help="regularity gap tolerance"),
    "window": Knob("float", 5.0, 0.01, 1e3, help="Lyapunov averaging window"),
    "metric": Knob("str", "constant", choices=("constant", "conformal", "flat-band"), help="metric family"),
    "bumps": Knob("tables", [], help="conformal bumps: center_x, center_y, eps, sigma"),
    "equivariance_radius": Knob("float", None, 0.0, 50.0, optional=True, help="bump expansion radius"),
    "band_width": Knob("float", 0.5, 0.01, 5.0, help="flat-band half width"),
    "offsets": Knob("floats", [0.05, 0.1], -5.0, 5.0, help="strip probe offsets"),
}


def _coerce(name: str, knob: Knob, value: Any) -> Any:
    if value is None:
        if knob.optional:
            return None
        raise ConfigError(f"{name} may not be empty")
    try:
        if knob.kind == "int":
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise TypeError
            out = int(value)
        elif knob.kind == "float":
            out = float(value)
            if not math.isfinite(out):
                raise ConfigError(f"{name} must be finite")
        elif knob.kind == "str":
            out = str(value)
        elif knob.kind in ("floats", "point"):
            out = [float(v) for v in value]
            if not all(math.isfinite(v) for v in out):
                raise ConfigError(f"{name} entries must be finite")
        elif knob.kind == "tables":
            out = [dict(v) for v in value]
        else:  # pragma: no cover
            raise ConfigError(f"unknown knob type {knob.kind}")
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{name}: cannot read {value!r} as {knob.kind}") from None
    if knob.choices is not None and out not in knob.choices:
        raise ConfigError(f"{name} must be one of {list(knob.choices)}, got {out!r}")
    items = out if knob.kind == "floats" else [out] if knob.kind in ("int", "float") else []
    for v in items:
        if knob.lo is not None and v < knob.lo or knob.hi is not None and v > knob.hi:
            raise ConfigError(f"{name} = {v} outside [{knob.lo}, {knob.hi}]")
    if knob.kind == "point":
        if len(out) != 2 or out[0] ** 2 + out[1] ** 2 >= 1.0:
            raise ConfigError(f"{name} must be two coordinates inside the unit disk")
    if knob.kind == "floats" and not out:
        raise ConfigError(f"{name} needs at least one value")
    return out


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    values: dict

    def __getattr__(self, name):
        try:
            return self.__dict__["values"][name]
        except KeyError:
            raise AttributeError(name) from None

    def to_dict(self) -> dict:
        """Resolved experiment settings; execution-only knobs are left out so
        reports do not depend on where or with how many threads they ran."""
        keep = sorted(k for k in self.values if k not in EXECUTION_KNOBS)
        return {"experiment": self.experiment, **{k: self.values[k] for k in keep}}


def load_file(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file is not valid TOML: {exc}") from None


def resolve(experiment: str, file_values: dict | None = None, flag_values: dict | None = None) -> RunConfig:
    """Defaults, then the file, then flags; unknown keys are rejected."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    merged: dict[str, Any] = {}
    for source in (file_values or {}, flag_values or {}):
        unknown = sorted(set(source) - set(KNOBS))
        if unknown:
            raise ConfigError(f"unknown configuration keys: {unknown}")
        merged.update(source)
    values = {}
    for name, knob in KNOBS.items():
        raw = merged.get(name, knob.default)
        if name == "threads" and raw is None:
            raw = _default_threads()
        values[name] = _coerce(name, knob, raw)
    if values["d_min"] > values["d_max"]:
        raise ConfigError("d_min must not exceed d_max")
    if sorted(values["radii"]) != values["radii"]:
        raise ConfigError("radii must be increasing")
    return RunConfig(experiment, values)
