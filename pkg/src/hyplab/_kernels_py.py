"""Pure-Python/numpy implementations of the hot loops.

Same signatures and results as the compiled `_kernels` extension; used when
the extension is not built or when HYPLAB_PURE_PYTHON is set.
"""
from __future__ import annotations

import math

import numpy as np

BACKEND = "python"
LIFT_ENTER = 0.1
LIFT_LEAVE = 0.05


class BudgetExceeded(RuntimeError):
    pass


def _normalize_sign(m: np.ndarray) -> np.ndarray:
    """Flip rows (n, 4) so the trace is positive; near-zero traces use the first big entry."""
    tr = m[:, 0] + m[:, 3]
    sgn = np.sign(tr)
    small = np.abs(tr) < 1e-9
    if np.any(small):
        sub = m[small]
        first = np.argmax(np.abs(sub) > 1e-9, axis=1)
        sgn[small] = np.sign(sub[np.arange(len(sub)), first])
    sgn[sgn == 0] = 1.0
    return m * sgn[:, None]


def _displacement(m: np.ndarray) -> np.ndarray:
    c = 0.5 * np.einsum("ij,ij->i", m, m)
    return np.arccosh(np.maximum(c, 1.0))


def _keys(m: np.ndarray, quantum: float) -> np.ndarray:
    return np.rint(m / quantum).astype(np.int64)


def _probe_keys(m: np.ndarray, quantum: float) -> list[np.ndarray]:
    """Primary key plus alternates for entries sitting near a rounding boundary."""
    scaled = m / quantum
    base = np.rint(scaled)
    frac = scaled - base
    near = np.abs(np.abs(frac) - 0.5) < 0.01
    alt = base + np.where(frac > 0, 1.0, -1.0)
    out = [base.astype(np.int64)]
    if np.any(near):
        for mask in range(1, 16):
            sel = np.array([(mask >> k) & 1 for k in range(4)], dtype=bool)
            rows = np.all(near[:, sel], axis=1)
            if not np.any(rows):
                continue
            k = base.copy()
            k[:, sel] = alt[:, sel]
            k[~rows] = np.iinfo(np.int64).min // 4  # sentinel that never matches
            out.append(k.astype(np.int64))
    return out


class _KeyIndex:
    """Sorted store of quantized keys mapping to row indices."""

    def __init__(self):
        self.keys = np.empty((0, 4), dtype=np.int64)
        self.idx = np.empty(0, dtype=np.int64)
        self._view = self.keys.view([("", np.int64)] * 4).ravel()

    @staticmethod
    def _as_view(k: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(k).view([("", np.int64)] * 4).ravel()

    def lookup(self, k: np.ndarray) -> np.ndarray:
        """Index of a matching key or -1."""
        if len(self.idx) == 0:
            return np.full(len(k), -1, dtype=np.int64)
        v = self._as_view(k)
        pos = np.searchsorted(self._view, v)
        pos = np.minimum(pos, len(self._view) - 1)
        hit = self._view[pos] == v
        return np.where(hit, self.idx[pos], -1)

    def add(self, k: np.ndarray, rows: np.ndarray) -> None:
        keys = np.concatenate([self.keys, k])
        idx = np.concatenate([self.idx, rows])
        view = self._as_view(keys)
        order = np.argsort(view, kind="stable")
        self.keys = keys[order]
        self.idx = idx[order]
        self._view = self._as_view(self.keys)


def orbit_bfs(gens, inverse_of, explore_radius, quantum=1e-7, cap=5_000_000):
    """Breadth-first orbit enumeration from the origin.

    gens: (n, 2, 2) SL(2,R) matrices (basepoint at i in the half-plane chart).
    inverse_of: letter index of each generator's inverse (or -1).
    Returns (mats (m, 4), disp (m,), parent (m,), letter (m,)) for every
    element reached with displacement <= explore_radius, identity first.
    """
    gens = np.asarray(gens, dtype=float).reshape(-1, 4)
    inverse_of = np.asarray(inverse_of, dtype=np.int64)
    ng = len(gens)
    ident = np.array([[1.0, 0.0, 0.0, 1.0]])
    mats = [ident]
    disp = [np.zeros(1)]
    parent = [np.array([-1], dtype=np.int64)]
    letter = [np.array([-1], dtype=np.int64)]
    index = _KeyIndex()
    index.add(_keys(ident, quantum), np.array([0], dtype=np.int64))
    store = ident.copy()
    count = 1
    frontier = np.array([0], dtype=np.int64)
    frontier_letter = np.array([-1], dtype=np.int64)
    frontier_mats = ident
    g = gens.reshape(ng, 2, 2)
    while len(frontier):
        fm = frontier_mats.reshape(-1, 2, 2)
        cand = np.einsum("fij,gjk->fgik", fm, g).reshape(-1, 4)
        cpar = np.repeat(frontier, ng)
        clet = np.tile(np.arange(ng, dtype=np.int64), len(frontier))
        plet = np.repeat(frontier_letter, ng)
        ok = np.ones(len(cand), dtype=bool)
        has_prev = plet >= 0
        ok[has_prev] = inverse_of[plet[has_prev]] != clet[has_prev]
        cand, cpar, clet = cand[ok], cpar[ok], clet[ok]
        cand = _normalize_sign(cand)
        d = _displacement(cand)
        keep = d <= explore_radius
        cand, cpar, clet, d = cand[keep], cpar[keep], clet[keep], d[keep]
        if len(cand) == 0:
            break
        # dedup against the store
        probes = _probe_keys(cand, quantum)
        found = np.full(len(cand), -1, dtype=np.int64)
        for k in probes:
            hit = index.lookup(k)
            sel = (found < 0) & (hit >= 0)
            if np.any(sel):
                same = np.all(np.abs(store[hit[sel]] - cand[sel]) <= 1e-8, axis=1)
                tmp = found[sel]
                tmp[same] = hit[sel][same]
                found[sel] = tmp
        new = found < 0
        cand, cpar, clet, d = cand[new], cpar[new], clet[new], d[new]
        probes = [k[new] for k in probes]
        if len(cand):
            uniq = _batch_unique(cand, probes)
            cand, cpar, clet, d = cand[uniq], cpar[uniq], clet[uniq], d[uniq]
        if count + len(cand) > cap:
            raise BudgetExceeded(f"orbit enumeration exceeded the cap of {cap} elements")
        rows = np.arange(count, count + len(cand), dtype=np.int64)
        index.add(_keys(cand, quantum), rows)
        store = np.concatenate([store, cand])
        mats.append(cand)
        disp.append(d)
        parent.append(cpar)
        letter.append(clet)
        count += len(cand)
        frontier = rows
        frontier_letter = clet
        frontier_mats = cand
    return (
        np.concatenate(mats),
        np.concatenate(disp),
        np.concatenate(parent),
        np.concatenate(letter),
    )


def _batch_unique(cand, probes):
    """First occurrence of each element within a batch of candidates."""
    batch = _KeyIndex()
    kq = probes[0]
    view = _KeyIndex._as_view(kq)
    _, first, inv = np.unique(view, return_index=True, return_inverse=True)
    rep = first[inv]
    keep = rep == np.arange(len(cand))
    clash = ~keep & np.any(np.abs(cand[rep] - cand) > 1e-8, axis=1)
    if np.any(clash):
        raise RuntimeError("quantized matrix hash collision between distinct elements")
    batch.add(kq[keep], np.nonzero(keep)[0])
    for k in probes[1:]:
        hit = batch.lookup(k)
        cand_rows = np.nonzero(keep & (hit >= 0) & (hit < np.arange(len(cand))))[0]
        if len(cand_rows):
            same = np.all(np.abs(cand[hit[cand_rows]] - cand[cand_rows]) <= 1e-8, axis=1)
            keep[cand_rows[same]] = False
    return keep


# ---------------------------------------------------------------------------
# scalar ODE kernels (fixed-step RK4; K sampled on the half-step grid)


def jacobi_rk4(k_half, dt, j0, jp0):
    k_half = np.asarray(k_half, dtype=float)
    n = (len(k_half) - 1) // 2
    j = np.empty(n + 1)
    jp = np.empty(n + 1)
    a, b = float(j0), float(jp0)
    j[0], jp[0] = a, b
    h2 = 0.5 * dt
    for i in range(n):
        k0, k1, k2 = k_half[2 * i], k_half[2 * i + 1], k_half[2 * i + 2]
        a1, b1 = b, -k0 * a
        a2, b2 = b + h2 * b1, -k1 * (a + h2 * a1)
        a3, b3 = b + h2 * b2, -k1 * (a + h2 * a2)
        a4, b4 = b + dt * b3, -k2 * (a + dt * a3)
        a += dt / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
        b += dt / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)
        j[i + 1], jp[i + 1] = a, b
    return j, jp


def riccati_rk4(k_half, dt, u0):
    """Integrate u' = -u^2 - K; through poles switch to the (j, j') lift.

    Returns (u, lifted) where lifted[i] is 1 if sample i was produced in the
    linear mode.
    """
    k_half = np.asarray(k_half, dtype=float)
    n = (len(k_half) - 1) // 2
    u = np.empty(n + 1)
    lifted = np.zeros(n + 1, dtype=np.int8)
    # RK4 on u loses accuracy once |u| dt is not small: hand over to the
    # linear lift well before the 1/dt blow-up and come back with hysteresis
    enter = LIFT_ENTER / dt
    leave = LIFT_LEAVE / dt
    x = float(u0)
    linear = abs(x) > enter
    ja, jb = 1.0, x
    u[0] = x
    h2 = 0.5 * dt
    for i in range(n):
        k0, k1, k2 = k_half[2 * i], k_half[2 * i + 1], k_half[2 * i + 2]
        if not linear:
            f1 = -x * x - k0
            y = x + h2 * f1
            f2 = -y * y - k1
            y = x + h2 * f2
            f3 = -y * y - k1
            y = x + dt * f3
            f4 = -y * y - k2
            x = x + dt / 6.0 * (f1 + 2 * f2 + 2 * f3 + f4)
            if abs(x) > enter or not math.isfinite(x):
                linear = True
                # restart the lift from the last good value
                prev = u[i]
                ja, jb = 1.0, prev
                ja, jb = _lin_step(ja, jb, k0, k1, k2, dt)
                x = jb / ja if ja != 0.0 else math.copysign(math.inf, jb)
        else:
            ja, jb = _lin_step(ja, jb, k0, k1, k2, dt)
            nrm = math.hypot(ja, jb)
            ja, jb = ja / nrm, jb / nrm
            x = jb / ja if ja != 0.0 else math.copysign(math.inf, jb)
        if linear:
            lifted[i + 1] = 1
            if abs(x) <= leave:
                linear = False
        u[i + 1] = x
    return u, lifted


def _lin_step(a, b, k0, k1, k2, dt):
    h2 = 0.5 * dt
    a1, b1 = b, -k0 * a
    a2, b2 = b + h2 * b1, -k1 * (a + h2 * a1)
    a3, b3 = b + h2 * b2, -k1 * (a + h2 * a2)
    a4, b4 = b + dt * b3, -k2 * (a + dt * a3)
    return a + dt / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4), b + dt / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)


# ---------------------------------------------------------------------------
# constant-curvature flow with folding into a Dirichlet domain


def fold_points(alpha, beta, z, max_steps=1_000_000):
    """Fold points into the Dirichlet domain at 0 of the side pairings (alpha, beta).

    The side pairing g_k maps 0 to beta_k / conj(alpha_k); a point closer to
    g_k(0) than to 0 is moved by g_k^{-1}.  Returns (folded z, word matrices
    as (alpha, beta) of the accumulated isometry, step counts).
    """
    alpha = np.asarray(alpha, dtype=complex)
    beta = np.asarray(beta, dtype=complex)
    z = np.array(z, dtype=complex, copy=True)
    centers = beta / np.conj(alpha)
    acc_a = np.ones(z.shape, dtype=complex)
    acc_b = np.zeros(z.shape, dtype=complex)
    steps = np.zeros(z.shape, dtype=np.int64)
    active = np.ones(z.shape, dtype=bool)
    while np.any(active):
        zi = z[active]
        # d(z, c) < d(z, 0)  <=>  |z - c|^2 (1-0) < |z|^2 |1 - conj(c) z|^2 ... use cosh form
        d0 = np.abs(zi) ** 2 / (1.0 - np.abs(zi) ** 2)
        dc = np.abs(zi[:, None] - centers[None, :]) ** 2 / (
            (1.0 - np.abs(zi[:, None]) ** 2) * (1.0 - np.abs(centers[None, :]) ** 2)
        )
        best = np.argmin(dc, axis=1)
        gain = d0 - dc[np.arange(len(zi)), best]
        move = gain > 1e-12 * (1.0 + d0)
        idx = np.nonzero(active)[0]
        done = idx[~move]
        active[done] = False
        if not np.any(move):
            break
        mi = idx[move]
        k = best[move]
        # apply inverse pairing: (conj(a) z - b) / (-conj(b) z + a)
        a, b = alpha[k], beta[k]
        zz = z[mi]
        z[mi] = (np.conj(a) * zz - b) / (-np.conj(b) * zz + a)
        # accumulate g^{-1} o acc
        aa, bb = acc_a[mi], acc_b[mi]
        na = np.conj(a) * aa - b * np.conj(bb)
        nb = np.conj(a) * bb - b * np.conj(aa)
        acc_a[mi], acc_b[mi] = na, nb
        steps[mi] += 1
        if np.any(steps > max_steps):
            raise RuntimeError("folding did not terminate")
    return z, acc_a, acc_b, steps


def flow_fold(alpha, beta, z0, dir0, dt, nsteps, escape_radius=30.0):
    """Unit-speed K=-1 geodesics sampled every dt and folded after each step.

    Returns an (m, nsteps+1) array of hyperbolic distances from 0 of the
    folded positions; entries after escape (distance > escape_radius) are inf.
    """
    z = np.array(z0, dtype=complex, copy=True)
    ang = np.array(dir0, dtype=float, copy=True)
    alpha = np.asarray(alpha, dtype=complex)
    beta = np.asarray(beta, dtype=complex)
    out = np.empty((len(z), nsteps + 1))
    out[:, 0] = 2.0 * np.arctanh(np.abs(z))
    alive = out[:, 0] <= escape_radius
    th = math.tanh(dt / 2.0)
    for s in range(1, nsteps + 1):
        idx = np.nonzero(alive)[0]
        if len(idx) == 0:
            out[:, s:] = np.inf
            break
        zi, ai = z[idx], ang[idx]
        u = th * np.exp(1j * ai)
        znew = (u + zi) / (1.0 + np.conj(zi) * u)
        ai = ai - 2.0 * np.angle(1.0 + np.conj(zi) * u)
        zf, acc_a, acc_b, _ = fold_points(alpha, beta, znew)
        # derivative of the accumulated map at the pre-image is 1 / (conj(b) z + conj(a))^2
        den = np.conj(acc_b) * znew + np.conj(acc_a)
        ai = ai - 2.0 * np.angle(den)
        z[idx], ang[idx] = zf, ai
        r = 2.0 * np.arctanh(np.minimum(np.abs(zf), 1.0 - 1e-16))
        alive[idx] = r <= escape_radius
        out[:, s] = np.inf
        out[idx, s] = np.where(alive[idx], r, np.inf)
    return out
