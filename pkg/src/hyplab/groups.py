"""Fuchsian groups: presets, orbit enumeration, conjugacy classes, folding."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .geometry import (
    ORIGIN,
    BoundaryPoint,
    DiskPoint,
    HypPolygon,
    angular_distance,
    hyp_dist,
    mobius_apply,
    polygon_interior_angle,
    sl2_from_su11,
    su11,
    translation_matrix,
)


DESCENT_MARGIN = 1e-6


class GroupError(ValueError):
    pass


class NonHyperbolicError(GroupError):
    pass


class BudgetExceeded(RuntimeError):
    """Enumeration would pass the configured element cap."""


class FoldingFailed(RuntimeError):
    pass


def _normalize(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float).reshape(2, 2)
    tr = m[0, 0] + m[1, 1]
    if tr < -1e-9:
        return -m
    if abs(tr) <= 1e-9:
        flat = m.ravel()
        first = flat[np.argmax(np.abs(flat) > 1e-9)]
        if first < 0:
            return -m
    return m


@dataclass(frozen=True, eq=False)
class GroupElement:
    """Unit-determinant 2x2 matrix with the word that produced it.

    Words use signed 1-based generator indices; -i is the inverse of
    generator i.  Equality ignores the word and the global sign.
    """

    m: np.ndarray
    word: tuple[int, ...] = ()

    def __post_init__(self):
        m = _normalize(self.m)
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        if abs(det - 1.0) > 1e-10 * max(1.0, float(np.max(np.abs(m))) ** 2):
            raise GroupError(f"determinant {det} is not 1")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "word", tuple(int(w) for w in self.word))

    @classmethod
    def identity(cls) -> "GroupElement":
        return cls(np.eye(2), ())

    def __mul__(self, other: "GroupElement") -> "GroupElement":
        return GroupElement(self.m @ other.m, _reduce_word(self.word + other.word))

    def inverse(self) -> "GroupElement":
        a, b, c, d = self.m.ravel()
        return GroupElement(np.array([[d, -b], [-c, a]]), tuple(-w for w in reversed(self.word)))

    def __pow__(self, n: int) -> "GroupElement":
        if n < 0:
            return self.inverse() ** (-n)
        out = GroupElement.identity()
        for _ in range(n):
            out = out * self
        return out

    def __eq__(self, other):
        if not isinstance(other, GroupElement):
            return NotImplemented
        return bool(np.all(np.abs(self.m - other.m) <= 1e-8))

    def __hash__(self):
        return hash(tuple(np.round(self.m.ravel(), 6)))

    def __repr__(self):
        return f"GroupElement(word={format_word(self.word)}, trace={self.trace:.6g})"

    @property
    def trace(self) -> float:
        return float(self.m[0, 0] + self.m[1, 1])

    @property
    def su11(self) -> tuple[complex, complex]:
        return su11(self.m)

    def is_hyperbolic(self) -> bool:
        return abs(self.trace) > 2.0 + 1e-9

    def apply(self, p: DiskPoint) -> DiskPoint:
        return DiskPoint.from_complex(mobius_apply(self.m, p.z))

    def displacement(self, o: DiskPoint = ORIGIN) -> float:
        if o == ORIGIN:
            c = 0.5 * float(np.sum(self.m * self.m))
            return math.acosh(max(c, 1.0))
        from .geometry import hyp_dist

        return hyp_dist(o, self.apply(o))

    def fixed_points(self) -> tuple[BoundaryPoint, BoundaryPoint]:
        """(repelling, attracting) fixed points of a hyperbolic element."""
        if not self.is_hyperbolic():
            raise NonHyperbolicError("only hyperbolic elements have an axis")
        alpha, beta = self.su11
        # conj(beta) z^2 + (conj(alpha) - alpha) z - beta = 0
        roots = np.roots([beta.conjugate(), alpha.conjugate() - alpha, -beta])
        pts = [complex(r) / abs(r) for r in roots]
        # attracting point has |derivative| < 1
        ders = [abs(1.0 / (beta.conjugate() * z + alpha.conjugate()) ** 2) for z in pts]
        rep, att = (pts[0], pts[1]) if ders[0] > ders[1] else (pts[1], pts[0])
        return BoundaryPoint.from_complex(rep), BoundaryPoint.from_complex(att)


def _reduce_word(w: Sequence[int]) -> tuple[int, ...]:
    out: list[int] = []
    for x in w:
        if out and out[-1] == -x:
            out.pop()
        else:
            out.append(x)
    return tuple(out)


def format_word(w: Sequence[int]) -> str:
    return " ".join(str(x) for x in w) if w else "e"


def translation_length(g: GroupElement) -> float:
    tr = abs(g.trace)
    if tr <= 2.0 + 1e-9:
        raise NonHyperbolicError(f"|trace| = {tr} <= 2: not hyperbolic")
    return 2.0 * math.acosh(tr / 2.0)


# ---------------------------------------------------------------------------
# presets


@dataclass(eq=False)
class GroupPreset:
    name: str
    generators: list[GroupElement]
    kind: str  # "cocompact-surface" | "schottky-free"
    relator_aware: bool
    domain: HypPolygon | None = None
    domain_radius: float = math.inf
    area: float = math.inf
    euler_characteristic: int | None = None
    _orbit_cache: dict = field(default_factory=dict, repr=False)

    @cached_property
    def letters(self) -> list[int]:
        n = len(self.generators)
        return list(range(1, n + 1)) + [-i for i in range(1, n + 1)]

    @cached_property
    def side_pairings(self) -> list[GroupElement]:
        return list(self.generators) + [g.inverse() for g in self.generators]

    @cached_property
    def inverse_of(self) -> np.ndarray:
        n = len(self.generators)
        return np.array([(k + n) % (2 * n) for k in range(2 * n)], dtype=np.int64)

    @property
    def is_cocompact(self) -> bool:
        return self.kind == "cocompact-surface"

    @property
    def is_free(self) -> bool:
        return self.kind == "schottky-free"

    @cached_property
    def max_generator_displacement(self) -> float:
        return max(g.displacement() for g in self.side_pairings)

    @property
    def default_slack(self) -> float:
        # every side of the domain lies on the bisector of o and s(o), so the
        # segment from g(o) back to o leaves gD into a tile gsD whose center
        # is strictly closer to o: the ball is connected without slack
        return DESCENT_MARGIN

    @property
    def generator_slack(self) -> float:
        return 2.0 * self.max_generator_displacement

    @cached_property
    def pairing_su11(self) -> tuple[np.ndarray, np.ndarray]:
        ab = [g.su11 for g in self.side_pairings]
        return np.array([a for a, _ in ab]), np.array([b for _, b in ab])

    def word_element(self, word: Sequence[int]) -> GroupElement:
        m = np.eye(2)
        for x in word:
            g = self.generators[abs(x) - 1]
            m = m @ (g.m if x > 0 else g.inverse().m)
        return GroupElement(m, _reduce_word(word))

    @cached_property
    def systole(self) -> float:
        """Shortest translation length among elements of word length <= 3."""
        best = math.inf
        for w in _all_reduced_words(len(self.generators), 3):
            g = self.word_element(w)
            if g.is_hyperbolic():
                best = min(best, translation_length(g))
        return best


def _all_reduced_words(n_gens: int, max_len: int):
    letters = list(range(1, n_gens + 1)) + [-i for i in range(1, n_gens + 1)]
    stack: list[tuple[int, ...]] = [()]
    while stack:
        w = stack.pop()
        if w:
            yield w
        if len(w) < max_len:
            for x in letters:
                if not w or w[-1] != -x:
                    stack.append(w + (x,))


def _regular_polygon_angle(n: int, circumradius: float) -> float:
    r = math.tanh(circumradius / 2.0)
    verts = [r * complex(math.cos((2 * k + 1) * math.pi / n), math.sin((2 * k + 1) * math.pi / n)) for k in range(n)]
    return polygon_interior_angle(verts[0], verts[-1], verts[1])


def regular_polygon_circumradius(n: int, angle: float) -> float:
    """Circumradius of the regular hyperbolic n-gon with the given interior angle (bisection)."""
    lo, hi = 1e-6, 20.0
    # interior angle decreases as the polygon grows
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _regular_polygon_angle(n, mid) > angle:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _octagon_preset() -> GroupPreset:
    n = 8
    rc = regular_polygon_circumradius(n, math.pi / 4)
    rv = math.tanh(rc / 2.0)
    v0 = rv * complex(math.cos(-math.pi / 8), math.sin(-math.pi / 8))
    v1 = rv * complex(math.cos(math.pi / 8), math.sin(math.pi / 8))
    # side 0 is the geodesic through v0, v1; its distance from 0 is the inradius
    from .geometry import _line_through

    a, b = _line_through(v0, v1)
    half = angular_distance(a, b) / 2.0
    inr = 2.0 * math.atanh(1.0 / math.cos(half) - math.tan(half))
    gens = [
        GroupElement(translation_matrix(k * math.pi / 4, 2.0 * inr), (k + 1,)) for k in range(4)
    ]
    lines = []
    for k in range(n):
        vk = rv * complex(math.cos((2 * k - 1) * math.pi / 8), math.sin((2 * k - 1) * math.pi / 8))
        vk1 = rv * complex(math.cos((2 * k + 1) * math.pi / 8), math.sin((2 * k + 1) * math.pi / 8))
        lines.append(_line_through(vk, vk1))
    domain = HypPolygon(lines)
    return GroupPreset(
        name="genus2-octagon",
        generators=gens,
        kind="cocompact-surface",
        relator_aware=True,
        domain=domain,
        domain_radius=rc,
        area=4.0 * math.pi,
        euler_characteristic=-2,
    )


# Schottky presets: (translation lengths, axis directions).  Generic values
# avoid the large length multiplicities of symmetric configurations, which
# make closed-geodesic counts move in coarse steps.
SCHOTTKY_PARAMS = {
    2: ((1.95, 2.45), (0.0, 1.4)),
    3: ((2.9, 3.2, 3.5), (0.0, 1.0, 2.1)),
}


def schottky_preset(
    n_gens: int,
    lengths: Sequence[float] | float | None = None,
    directions: Sequence[float] | None = None,
) -> GroupPreset:
    """Hyperbolic translations through the origin with disjoint isometric circles."""
    if lengths is None:
        lengths, default_dirs = SCHOTTKY_PARAMS[n_gens]
        directions = default_dirs if directions is None else directions
    if np.isscalar(lengths):
        lengths = [float(lengths)] * n_gens
    if directions is None:
        directions = [k * math.pi / n_gens for k in range(n_gens)]
    if len(lengths) != n_gens or len(directions) != n_gens:
        raise GroupError("need one length and one direction per generator")
    gens = [
        GroupElement(translation_matrix(d, L), (k + 1,)) for k, (L, d) in enumerate(zip(lengths, directions))
    ]
    preset = GroupPreset(
        name=f"schottky{n_gens}",
        generators=gens,
        kind="schottky-free",
        relator_aware=False,
    )
    lines = [_bisector_line(g) for g in preset.side_pairings]
    if not _ping_pong_ok(lines):
        raise GroupError("isometric circles overlap: generators fail the ping-pong check")
    preset.domain = HypPolygon(lines)
    return preset


def cyclic_preset(length: float = 2.0) -> GroupPreset:
    """Elementary group generated by one hyperbolic translation."""
    g = GroupElement(translation_matrix(0.0, length), (1,))
    preset = GroupPreset(name="cyclic", generators=[g], kind="schottky-free", relator_aware=False)
    preset.domain = HypPolygon([_bisector_line(h) for h in preset.side_pairings])
    return preset


def _bisector_line(g: GroupElement) -> tuple[float, float]:
    """Boundary endpoints of the perpendicular bisector of 0 and g(0)."""
    w = g.apply(ORIGIN).z
    d = 2.0 * math.atanh(abs(w))
    e = w / abs(w)
    m = math.tanh(d / 4.0)
    # circle orthogonal to the unit circle through m*e, perpendicular to the diameter
    k = (1.0 + m * m) / (2.0 * m)
    half = math.acos(1.0 / k)
    phi = math.atan2(e.imag, e.real)
    return (phi - half, phi + half)


def _ping_pong_ok(lines: list[tuple[float, float]]) -> bool:
    arcs = []
    for a, b in lines:
        span = (b - a) % (2 * math.pi)
        arcs.append((a, span))
    for i in range(len(arcs)):
        for j in range(i + 1, len(arcs)):
            ci = arcs[i][0] + arcs[i][1] / 2
            cj = arcs[j][0] + arcs[j][1] / 2
            if angular_distance(ci, cj) < (arcs[i][1] + arcs[j][1]) / 2 + 1e-12:
                return False
    return True


_PRESETS = {}


def preset(name: str) -> GroupPreset:
    """One of genus2-octagon, schottky2, schottky3 (cached; presets are immutable)."""
    if name not in _PRESETS:
        if name == "genus2-octagon":
            _PRESETS[name] = _octagon_preset()
        elif name == "schottky2":
            _PRESETS[name] = schottky_preset(2)
        elif name == "schottky3":
            _PRESETS[name] = schottky_preset(3)
        elif name == "cyclic":
            _PRESETS[name] = cyclic_preset()
        else:
            raise GroupError(f"unknown preset {name!r}")
    return _PRESETS[name]


PRESET_NAMES = ("genus2-octagon", "schottky2", "schottky3")


# ---------------------------------------------------------------------------
# orbit tables


class OrbitTable:
    """Group elements with d(o, g o) <= radius, sorted by displacement.

    Stored column-wise; `entries` materialises GroupElement objects lazily.
    """

    def __init__(self, preset: GroupPreset, o: DiskPoint, radius: float, mats, disp, parent, letter, rows):
        self.preset = preset
        self.o = o
        self.radius = radius
        order = np.argsort(disp[rows], kind="stable")
        self._rows = rows[order]
        self.mats = mats[self._rows]
        self.mats.setflags(write=False)
        self.displacements = disp[self._rows]
        self.displacements.setflags(write=False)
        self._parent = parent
        self._letter = letter

    def __len__(self):
        return len(self._rows)

    def word(self, i: int) -> tuple[int, ...]:
        letters = self.preset.letters
        out = []
        r = int(self._rows[i])
        while self._parent[r] >= 0:
            out.append(letters[int(self._letter[r])])
            r = int(self._parent[r])
        return tuple(reversed(out))

    def element(self, i: int) -> GroupElement:
        return GroupElement(self.mats[i].reshape(2, 2), self.word(i))

    @property
    def entries(self) -> list[tuple[GroupElement, float]]:
        return [(self.element(i), float(self.displacements[i])) for i in range(len(self))]

    def count_within(self, r: float) -> int:
        return int(np.searchsorted(self.displacements, r, side="right"))

    def traces(self) -> np.ndarray:
        return self.mats[:, 0] + self.mats[:, 3]

    def orbit_points(self, p0: DiskPoint | None = None) -> np.ndarray:
        """Complex coordinates of g(p0) for every entry (p0 defaults to o)."""
        p0 = self.o if p0 is None else p0
        a = self.mats[:, 0]
        b = self.mats[:, 1]
        c = self.mats[:, 2]
        d = self.mats[:, 3]
        alpha = ((a + d) + 1j * (b - c)) / 2.0
        beta = ((a - d) - 1j * (b + c)) / 2.0
        z = p0.z
        return (alpha * z + beta) / (np.conj(beta) * z + np.conj(alpha))

    def to_csv(self, path) -> None:
        tr = self.traces()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["word", "trace", "displacement"])
            for i in range(len(self)):
                w.writerow([format_word(self.word(i)), f"{tr[i]:.17g}", f"{self.displacements[i]:.17g}"])


def _conj_to_origin(o: DiskPoint) -> np.ndarray:
    """SL(2,R) matrix of the isometry z -> (z - o)/(1 - conj(o) z)."""
    oz = o.z
    s = 1.0 / math.sqrt(1.0 - abs(oz) ** 2)
    return sl2_from_su11(complex(s, 0.0), -oz * s)


def enumerate_orbit(
    g: GroupPreset,
    o: DiskPoint,
    R: float,
    *,
    slack: float | None = None,
    cap: int = 5_000_000,
    quantum: float = 1e-7,
) -> OrbitTable:
    """Every element with d(o, g o) <= R exactly once.

    Words are extended breadth-first while d(o, g o) <= R + slack.  Around
    the domain center every element has a neighbour g s with smaller
    displacement, so the default slack is a rounding margin; another
    basepoint o adds 4 d(center, o) (displacements at the two basepoints
    differ by at most 2 d(center, o)).
    """
    if R <= 0:
        raise GroupError("radius must be positive")
    if slack is None:
        slack = g.default_slack + 4.0 * hyp_dist(ORIGIN, o)
    slack = float(slack)
    explore = R + slack
    key = (round(o.x, 15), round(o.y, 15), slack, quantum)
    cached = g._orbit_cache.get(key)
    if cached is None or cached[0] < explore:
        T = _conj_to_origin(o)
        Ti = np.linalg.inv(T)
        gens = np.array([T @ h.m @ Ti for h in g.side_pairings])
        try:
            mats, disp, parent, letter = kernels.orbit_bfs(gens, g.inverse_of, explore, quantum, cap)
        except Exception as exc:  # both backends raise their own BudgetExceeded
            if kernels.is_budget_error(exc):
                raise BudgetExceeded(str(exc)) from exc
            raise
        if o != ORIGIN:
            m2 = mats.reshape(-1, 2, 2)
            mats = np.einsum("ij,njk,kl->nil", Ti, m2, T).reshape(-1, 4)
            mats = np.array([_normalize(x).ravel() for x in mats.reshape(-1, 2, 2)])
        cached = (explore, mats, disp, parent, letter)
        g._orbit_cache[key] = cached
    _, mats, disp, parent, letter = cached
    # a cached larger table must not bypass the cap of this call
    if np.count_nonzero(disp <= explore) > cap:
        raise BudgetExceeded(f"orbit enumeration exceeded the cap of {cap} elements")
    rows = np.nonzero(disp <= R)[0]
    return OrbitTable(g, o, R, mats, disp, parent, letter, rows)


# ---------------------------------------------------------------------------
# conjugacy classes


@dataclass(frozen=True)
class ConjClass:
    representative: GroupElement
    length: float
    primitive: bool
    multiplicity_key: str


def cyclic_reduce(word: Sequence[int]) -> tuple[int, ...]:
    w = list(_reduce_word(word))
    while len(w) >= 2 and w[0] == -w[-1]:
        w = w[1:-1]
    return tuple(w)


def canonical_rotation(word: Sequence[int]) -> tuple[int, ...]:
    w = tuple(word)
    if not w:
        return w
    return min(w[i:] + w[:i] for i in range(len(w)))


def is_proper_power(word: Sequence[int]) -> bool:
    w = tuple(word)
    n = len(w)
    for p in range(1, n // 2 + 1):
        if n % p == 0 and w[:p] * (n // p) == w:
            return True
    return False


def conj_classes_up_to(
    g: GroupPreset,
    t: float,
    *,
    conj_search_radius: float | None = None,
    candidate_slack: float | None = None,
    cap: int = 5_000_000,
) -> list[ConjClass]:
    """Primitive oriented conjugacy classes with translation length <= t.

    Free groups: exact, via canonical cyclic words.  Surface groups:
    candidates grouped by length and tested for conjugacy by searching
    conjugators of displacement <= conj_search_radius (default 2t/3 + 4);
    an undersized search radius can only over-count.
    """
    if t <= 0:
        raise GroupError("t must be positive")
    key = ("classes", conj_search_radius, candidate_slack)
    cached = g._orbit_cache.get(key)
    if cached is None or cached[0] < t:
        if g.is_free:
            found = _free_classes(g, t, candidate_slack, cap)
        else:
            found = _surface_classes(g, t, conj_search_radius, candidate_slack, cap)
        cached = (t, found)
        g._orbit_cache[key] = cached
    return [c for c in cached[1] if c.length <= t + 1e-12]


def _free_classes(g, t, candidate_slack, cap):
    slack = g.generator_slack if candidate_slack is None else candidate_slack
    table = enumerate_orbit(g, ORIGIN, t + slack, cap=cap)
    tr = np.abs(table.traces())
    lengths = 2.0 * np.arccosh(np.maximum(tr / 2.0, 1.0))
    sel = np.nonzero((tr > 2.0 + 1e-9) & (lengths <= t + 1e-12))[0]
    seen: dict[tuple[int, ...], ConjClass] = {}
    for i in sel:
        w = cyclic_reduce(table.word(int(i)))
        if not w:
            continue
        key = canonical_rotation(w)
        if key in seen:
            continue
        rep = g.word_element(key)
        seen[key] = ConjClass(rep, translation_length(rep), not is_proper_power(key), format_word(key))
    out = [c for c in seen.values() if c.primitive and c.length <= t]
    out.sort(key=lambda c: (c.length, c.multiplicity_key))
    return out


def _surface_classes(g, t, conj_search_radius, candidate_slack, cap):
    # an axis meeting the Dirichlet domain passes within its circumradius of o
    slack = 2.0 * g.domain_radius + 1e-6 if candidate_slack is None else candidate_slack
    table = enumerate_orbit(g, ORIGIN, t + slack, cap=cap)
    # representatives whose axis passes within the circumradius of o are
    # conjugate through elements moving o by at most t/2 + 2*circumradius
    csr = conj_search_radius
    if csr is None:
        csr = max(2.0 * t / 3.0 + 4.0, t / 2.0 + 2.0 * g.domain_radius + 0.1)
    conj_table = enumerate_orbit(g, ORIGIN, csr, cap=cap)
    cm = conj_table.mats.reshape(-1, 2, 2)
    cinv = np.stack([cm[:, 1, 1], -cm[:, 0, 1], -cm[:, 1, 0], cm[:, 0, 0]], axis=1).reshape(-1, 2, 2)
    tr = np.abs(table.traces())
    lengths = 2.0 * np.arccosh(np.maximum(tr / 2.0, 1.0))
    hyp = (tr > 2.0 + 1e-9) & (lengths <= t + 1e-12)
    with np.errstate(divide="ignore", invalid="ignore"):
        axis_cosh = np.sinh(table.displacements / 2.0) / np.sinh(lengths / 2.0)
    near = axis_cosh <= math.cosh(g.domain_radius) + 1e-9
    sel = np.nonzero(hyp & near)[0]
    sel = sel[np.argsort(lengths[sel], kind="stable")]

    classes: list[dict] = []  # rep index, length, conjugate hash set
    owner: dict[tuple, int] = {}  # hashed conjugate -> class index

    axis_bound = math.cosh(g.domain_radius) + 1e-6

    def conj_keys(m, ell):
        conj = np.einsum("nij,jk,nkl->nil", cm, m, cinv).reshape(-1, 4)
        # hyperbolic conjugates have |trace| > 2, so the trace fixes the sign
        conj *= np.where(conj[:, 0] + conj[:, 3] < 0, -1.0, 1.0)[:, None]
        # only conjugates that can occur as candidates need a hash entry
        disp = np.arccosh(np.maximum(0.5 * np.sum(conj * conj, axis=1), 1.0))
        conj = conj[np.sinh(disp / 2.0) / math.sinh(ell / 2.0) <= axis_bound]
        return {tuple(k) for k in np.rint(conj / 1e-6).astype(np.int64).tolist()}

    cand = table.mats[sel].copy()
    cand *= np.where(cand[:, 0] + cand[:, 3] < 0, -1.0, 1.0)[:, None]
    cand_keys = [tuple(k) for k in np.rint(cand / 1e-6).astype(np.int64).tolist()]
    for i, key in zip(sel, cand_keys):
        if key in owner or _probe(key, owner) is not None:
            continue
        m = table.mats[i].reshape(2, 2)
        keys = conj_keys(m, lengths[i])
        classes.append({"row": int(i), "length": float(lengths[i]), "keys": keys, "m": m})
        for k in keys:
            owner.setdefault(k, len(classes) - 1)

    out = []
    for c in classes:
        primitive = True
        for root in classes:
            if root["length"] >= c["length"] - 1e-9:
                break
            k = c["length"] / root["length"]
            kr = round(k)
            if kr >= 2 and abs(k - kr) < 1e-6:
                pw = np.linalg.matrix_power(root["m"], kr)
                key = tuple(np.rint(_normalize(pw).ravel() / 1e-6).astype(np.int64))
                if _in_conj_set(key, c["keys"]):
                    primitive = False
                    break
        rep = table.element(c["row"])
        out.append(
            ConjClass(rep, c["length"], primitive, f"{abs(rep.trace):.9f}|{c['length']:.9f}")
        )
    return [c for c in out if c.primitive]


_NEIGHBOURS = [(a, b, c, d) for a in (-1, 0, 1) for b in (-1, 0, 1) for c in (-1, 0, 1) for d in (-1, 0, 1)]


def _probe(key, table):
    """Value stored at key or at a neighbouring cell (rounding at cell boundaries)."""
    for d in _NEIGHBOURS:
        hit = table.get((key[0] + d[0], key[1] + d[1], key[2] + d[2], key[3] + d[3]))
        if hit is not None:
            return hit
    return None


def _in_conj_set(key, keys) -> bool:
    if key in keys:
        return True
    return any((key[0] + d[0], key[1] + d[1], key[2] + d[2], key[3] + d[3]) in keys for d in _NEIGHBOURS)


def classes_to_csv(classes: Iterable[ConjClass], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["length", "primitive", "multiplicity_key"])
        for c in classes:
            w.writerow([f"{c.length:.17g}", str(c.primitive).lower(), c.multiplicity_key])


# ---------------------------------------------------------------------------
# folding


def fold_to_domain(g: GroupPreset, z: DiskPoint, max_steps: int = 1_000_000) -> tuple[DiskPoint, GroupElement]:
    """Greedy folding into the Dirichlet domain at the origin.

    Returns (z', gamma) with z' = gamma(z) and d(z', 0) <= d(z', beta 0) for
    every side pairing beta.
    """
    pairings = g.side_pairings
    centers = [p.apply(ORIGIN).z for p in pairings]
    inverses = [p.inverse() for p in pairings]
    w = z.z
    acc = GroupElement.identity()
    for _ in range(max_steps):
        r2 = abs(w) ** 2
        d0 = r2 / (1.0 - r2)
        best, gain = -1, 0.0
        for k, c in enumerate(centers):
            dc = abs(w - c) ** 2 / ((1.0 - r2) * (1.0 - abs(c) ** 2))
            if d0 - dc > gain:
                best, gain = k, d0 - dc
        if best < 0 or gain <= 1e-12 * (1.0 + d0):
            return DiskPoint.from_complex(w), acc
        w = mobius_apply(inverses[best].m, w)
        acc = inverses[best] * acc
    raise FoldingFailed(f"folding did not terminate after {max_steps} steps")


def fold_many(g: GroupPreset, zs: np.ndarray) -> np.ndarray:
    """Vectorised folding of complex points (positions only)."""
    alpha, beta = g.pairing_su11
    z, _, _, _ = kernels.fold_points(alpha, beta, np.asarray(zs, dtype=complex))
    return z


def in_domain(g: GroupPreset, z: DiskPoint, tol: float = 1e-9) -> bool:
    from .geometry import hyp_dist

    d0 = hyp_dist(z, ORIGIN)
    return all(d0 <= hyp_dist(z, p.apply(ORIGIN)) + tol for p in g.side_pairings)
