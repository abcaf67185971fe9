# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
# distutils: language = c++
"""Compiled hot loops; mirrors hyplab._kernels_py exactly."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, acosh, llround, floor, isfinite, tanh, atan2, cos, sin, atanh, INFINITY, copysign, hypot
from libc.stdint cimport int64_t, uint64_t
from libcpp.unordered_map cimport unordered_map
from libcpp.vector cimport vector

cnp.import_array()

BACKEND = "cython"
# hand-over thresholds of the Riccati integrator, in units of 1/dt
cdef double LIFT_ENTER = 0.1
cdef double LIFT_LEAVE = 0.05


class BudgetExceeded(RuntimeError):
    pass


cdef inline uint64_t _mix(int64_t a, int64_t b, int64_t c, int64_t d) noexcept nogil:
    cdef uint64_t h = <uint64_t>1469598103934665603ULL
    h = (h ^ <uint64_t>a) * <uint64_t>1099511628211ULL
    h ^= h >> 29
    h = (h ^ <uint64_t>b) * <uint64_t>1099511628211ULL
    h ^= h >> 29
    h = (h ^ <uint64_t>c) * <uint64_t>1099511628211ULL
    h ^= h >> 29
    h = (h ^ <uint64_t>d) * <uint64_t>1099511628211ULL
    h ^= h >> 31
    return h


cdef extern from *:
    """
    template <class It> inline long long deref_second(It it) { return it->second; }
    """
    int64_t deref_second(unordered_map[uint64_t, int64_t].iterator it) nogil


cdef inline int64_t _q(double x, double quantum) noexcept nogil:
    return llround(x / quantum)


cdef int64_t _find(unordered_map[uint64_t, int64_t]& head, vector[int64_t]& nxt,
                   vector[double]& mats, double* m, double quantum) noexcept nogil:
    """Index of a stored matrix equal to m (within 1e-8) or -1; probes neighbouring cells."""
    cdef int64_t base[4]
    cdef int64_t alt[4]
    cdef int near[4]
    cdef int k, mask, ok
    cdef double s, fr
    cdef int64_t key[4]
    cdef int64_t idx
    cdef uint64_t h
    cdef unordered_map[uint64_t, int64_t].iterator it
    for k in range(4):
        s = m[k] / quantum
        base[k] = llround(s)
        fr = s - <double>base[k]
        near[k] = fabs(fabs(fr) - 0.5) < 0.01
        alt[k] = base[k] + (1 if fr > 0 else -1)
    for mask in range(16):
        ok = 1
        for k in range(4):
            if (mask >> k) & 1:
                if not near[k]:
                    ok = 0
                    break
                key[k] = alt[k]
            else:
                key[k] = base[k]
        if not ok:
            continue
        h = _mix(key[0], key[1], key[2], key[3])
        it = head.find(h)
        if it == head.end():
            continue
        idx = deref_second(it)
        while idx >= 0:
            if (fabs(mats[4 * idx] - m[0]) <= 1e-8 and fabs(mats[4 * idx + 1] - m[1]) <= 1e-8
                    and fabs(mats[4 * idx + 2] - m[2]) <= 1e-8 and fabs(mats[4 * idx + 3] - m[3]) <= 1e-8):
                return idx
            idx = nxt[idx]
    return -1


cdef void _insert(unordered_map[uint64_t, int64_t]& head, vector[int64_t]& nxt,
                  double* m, int64_t idx, double quantum) noexcept nogil:
    cdef uint64_t h = _mix(_q(m[0], quantum), _q(m[1], quantum), _q(m[2], quantum), _q(m[3], quantum))
    cdef unordered_map[uint64_t, int64_t].iterator it = head.find(h)
    if it == head.end():
        nxt.push_back(-1)
        head[h] = idx
    else:
        nxt.push_back(deref_second(it))
        head[h] = idx


def orbit_bfs(gens, inverse_of, double explore_radius, double quantum=1e-7, long long cap=5_000_000):
    cdef double[:, ::1] g = np.ascontiguousarray(np.asarray(gens, dtype=float).reshape(-1, 4))
    cdef int64_t[::1] inv = np.ascontiguousarray(np.asarray(inverse_of, dtype=np.int64))
    cdef int ng = g.shape[0]
    cdef vector[double] mats
    cdef vector[double] disp
    cdef vector[int64_t] parent
    cdef vector[int64_t] letter
    cdef vector[int64_t] nxt
    cdef unordered_map[uint64_t, int64_t] head
    cdef double m[4]
    cdef double a, b, c, d, tr, sg, cc, dd
    cdef int64_t i, start, stop, idx, pl
    cdef int k, j
    for k in range(4):
        mats.push_back(1.0 if (k == 0 or k == 3) else 0.0)
    disp.push_back(0.0)
    parent.push_back(-1)
    letter.push_back(-1)
    m[0] = 1.0; m[1] = 0.0; m[2] = 0.0; m[3] = 1.0
    _insert(head, nxt, m, 0, quantum)
    start = 0
    stop = 1
    with nogil:
        while start < stop:
            for i in range(start, stop):
                a = mats[4 * i]; b = mats[4 * i + 1]; c = mats[4 * i + 2]; d = mats[4 * i + 3]
                pl = letter[i]
                for k in range(ng):
                    if pl >= 0 and inv[pl] == k:
                        continue
                    m[0] = a * g[k, 0] + b * g[k, 2]
                    m[1] = a * g[k, 1] + b * g[k, 3]
                    m[2] = c * g[k, 0] + d * g[k, 2]
                    m[3] = c * g[k, 1] + d * g[k, 3]
                    tr = m[0] + m[3]
                    sg = 1.0
                    if tr < -1e-9:
                        sg = -1.0
                    elif fabs(tr) <= 1e-9:
                        for j in range(4):
                            if fabs(m[j]) > 1e-9:
                                sg = 1.0 if m[j] > 0 else -1.0
                                break
                    if sg < 0:
                        for j in range(4):
                            m[j] = -m[j]
                    cc = 0.5 * (m[0] * m[0] + m[1] * m[1] + m[2] * m[2] + m[3] * m[3])
                    if cc < 1.0:
                        cc = 1.0
                    dd = acosh(cc)
                    if dd > explore_radius:
                        continue
                    if _find(head, nxt, mats, m, quantum) >= 0:
                        continue
                    idx = <int64_t>disp.size()
                    if idx + 1 > cap:
                        with gil:
                            raise BudgetExceeded(f"orbit enumeration exceeded the cap of {cap} elements")
                    for j in range(4):
                        mats.push_back(m[j])
                    disp.push_back(dd)
                    parent.push_back(i)
                    letter.push_back(k)
                    _insert(head, nxt, m, idx, quantum)
            start = stop
            stop = <int64_t>disp.size()
    n = disp.size()
    out_m = np.empty((n, 4))
    out_d = np.empty(n)
    out_p = np.empty(n, dtype=np.int64)
    out_l = np.empty(n, dtype=np.int64)
    cdef double[:, ::1] om = out_m
    cdef double[::1] od = out_d
    cdef int64_t[::1] op = out_p
    cdef int64_t[::1] ol = out_l
    for i in range(<int64_t>n):
        for k in range(4):
            om[i, k] = mats[4 * i + k]
        od[i] = disp[i]
        op[i] = parent[i]
        ol[i] = letter[i]
    return out_m, out_d, out_p, out_l


cdef inline void _lin_step(double* a, double* b, double k0, double k1, double k2, double dt) noexcept nogil:
    cdef double h2 = 0.5 * dt
    cdef double x = a[0], y = b[0]
    cdef double a1 = y, b1 = -k0 * x
    cdef double a2 = y + h2 * b1, b2 = -k1 * (x + h2 * a1)
    cdef double a3 = y + h2 * b2, b3 = -k1 * (x + h2 * a2)
    cdef double a4 = y + dt * b3, b4 = -k2 * (x + dt * a3)
    a[0] = x + dt / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
    b[0] = y + dt / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)


def jacobi_rk4(k_half, double dt, double j0, double jp0):
    cdef double[::1] K = np.ascontiguousarray(k_half, dtype=float)
    cdef Py_ssize_t n = (K.shape[0] - 1) // 2
    j = np.empty(n + 1)
    jp = np.empty(n + 1)
    cdef double[::1] jv = j
    cdef double[::1] jpv = jp
    cdef double a = j0, b = jp0
    cdef Py_ssize_t i
    jv[0] = a
    jpv[0] = b
    with nogil:
        for i in range(n):
            _lin_step(&a, &b, K[2 * i], K[2 * i + 1], K[2 * i + 2], dt)
            jv[i + 1] = a
            jpv[i + 1] = b
    return j, jp


def riccati_rk4(k_half, double dt, double u0):
    cdef double[::1] K = np.ascontiguousarray(k_half, dtype=float)
    cdef Py_ssize_t n = (K.shape[0] - 1) // 2
    u = np.empty(n + 1)
    lifted = np.zeros(n + 1, dtype=np.int8)
    cdef double[::1] uv = u
    cdef signed char[::1] lv = lifted
    cdef double enter = LIFT_ENTER / dt
    cdef double leave = LIFT_LEAVE / dt
    cdef double x = u0, y, f1, f2, f3, f4, k0, k1, k2, nrm
    cdef double ja = 1.0, jb = u0
    cdef bint linear = fabs(x) > enter
    cdef double h2 = 0.5 * dt
    cdef Py_ssize_t i
    uv[0] = x
    with nogil:
        for i in range(n):
            k0 = K[2 * i]; k1 = K[2 * i + 1]; k2 = K[2 * i + 2]
            if not linear:
                f1 = -x * x - k0
                y = x + h2 * f1
                f2 = -y * y - k1
                y = x + h2 * f2
                f3 = -y * y - k1
                y = x + dt * f3
                f4 = -y * y - k2
                x = x + dt / 6.0 * (f1 + 2 * f2 + 2 * f3 + f4)
                if fabs(x) > enter or not isfinite(x):
                    linear = True
                    ja = 1.0
                    jb = uv[i]
                    _lin_step(&ja, &jb, k0, k1, k2, dt)
                    x = jb / ja if ja != 0.0 else copysign(INFINITY, jb)
            else:
                _lin_step(&ja, &jb, k0, k1, k2, dt)
                nrm = hypot(ja, jb)
                ja = ja / nrm
                jb = jb / nrm
                x = jb / ja if ja != 0.0 else copysign(INFINITY, jb)
            if linear:
                lv[i + 1] = 1
                if fabs(x) <= leave:
                    linear = False
            uv[i + 1] = x
    return u, lifted


cdef inline double _fold_one(double* zr, double* zi, double* ar_, double* ai_, double* br_, double* bi_,
                             double[::1] gar, double[::1] gai, double[::1] gbr, double[::1] gbi,
                             double[::1] cr, double[::1] ci, long long max_steps, long long* steps) noexcept nogil:
    """Greedy fold of one point; accumulates the applied isometry in (a, b)."""
    cdef int ng = gar.shape[0]
    cdef int k, best
    cdef double x, y, r2, d0, dc, bestd, gain, er, ei, nr, ni, dr, di, den
    cdef double Ar, Ai, Br, Bi, aa_r, aa_i, bb_r, bb_i
    while True:
        x = zr[0]; y = zi[0]
        r2 = x * x + y * y
        d0 = r2 / (1.0 - r2)
        best = -1
        bestd = d0
        for k in range(ng):
            er = x - cr[k]; ei = y - ci[k]
            dc = (er * er + ei * ei) / ((1.0 - r2) * (1.0 - cr[k] * cr[k] - ci[k] * ci[k]))
            if dc < bestd:
                bestd = dc
                best = k
        if best < 0 or d0 - bestd <= 1e-12 * (1.0 + d0):
            return 0.0
        Ar = gar[best]; Ai = gai[best]; Br = gbr[best]; Bi = gbi[best]
        # z <- (conj(A) z - B) / (-conj(B) z + A)
        nr = (Ar * x + Ai * y) - Br
        ni = (Ar * y - Ai * x) - Bi
        dr = -(Br * x + Bi * y) + Ar
        di = -(Br * y - Bi * x) + Ai
        den = dr * dr + di * di
        zr[0] = (nr * dr + ni * di) / den
        zi[0] = (ni * dr - nr * di) / den
        # acc <- g^{-1} o acc: a' = conj(A) a - B conj(b), b' = conj(A) b - B conj(a)
        aa_r = ar_[0]; aa_i = ai_[0]; bb_r = br_[0]; bb_i = bi_[0]
        ar_[0] = (Ar * aa_r + Ai * aa_i) - (Br * bb_r + Bi * bb_i)
        ai_[0] = (Ar * aa_i - Ai * aa_r) - (Bi * bb_r - Br * bb_i)
        br_[0] = (Ar * bb_r + Ai * bb_i) - (Br * aa_r + Bi * aa_i)
        bi_[0] = (Ar * bb_i - Ai * bb_r) - (Bi * aa_r - Br * aa_i)
        steps[0] += 1
        if steps[0] > max_steps:
            return -1.0


def fold_points(alpha, beta, z, long long max_steps=1_000_000):
    alpha = np.asarray(alpha, dtype=complex)
    beta = np.asarray(beta, dtype=complex)
    zz = np.array(z, dtype=complex, copy=True).ravel()
    cen = beta / np.conj(alpha)
    cdef double[::1] gar = np.ascontiguousarray(alpha.real)
    cdef double[::1] gai = np.ascontiguousarray(alpha.imag)
    cdef double[::1] gbr = np.ascontiguousarray(beta.real)
    cdef double[::1] gbi = np.ascontiguousarray(beta.imag)
    cdef double[::1] cr = np.ascontiguousarray(cen.real)
    cdef double[::1] ci = np.ascontiguousarray(cen.imag)
    cdef Py_ssize_t n = zz.shape[0], i
    zr_a = np.ascontiguousarray(zz.real)
    zi_a = np.ascontiguousarray(zz.imag)
    cdef double[::1] zr = zr_a
    cdef double[::1] zi = zi_a
    ar = np.ones(n); ai = np.zeros(n); br = np.zeros(n); bi = np.zeros(n)
    cdef double[::1] arv = ar, aiv = ai, brv = br, biv = bi
    steps = np.zeros(n, dtype=np.int64)
    cdef long long[::1] sv = steps
    cdef double res
    cdef bint failed = False
    with nogil:
        for i in range(n):
            res = _fold_one(&zr[i], &zi[i], &arv[i], &aiv[i], &brv[i], &biv[i],
                            gar, gai, gbr, gbi, cr, ci, max_steps, &sv[i])
            if res < 0:
                failed = True
                break
    if failed:
        raise RuntimeError("folding did not terminate")
    shape = np.shape(z)
    return ((zr_a + 1j * zi_a).reshape(shape), (ar + 1j * ai).reshape(shape),
            (br + 1j * bi).reshape(shape), steps.reshape(shape))


def flow_fold(alpha, beta, z0, dir0, double dt, long long nsteps, double escape_radius=30.0):
    alpha = np.asarray(alpha, dtype=complex)
    beta = np.asarray(beta, dtype=complex)
    cen = beta / np.conj(alpha)
    cdef double[::1] gar = np.ascontiguousarray(alpha.real)
    cdef double[::1] gai = np.ascontiguousarray(alpha.imag)
    cdef double[::1] gbr = np.ascontiguousarray(beta.real)
    cdef double[::1] gbi = np.ascontiguousarray(beta.imag)
    cdef double[::1] cr = np.ascontiguousarray(cen.real)
    cdef double[::1] ci = np.ascontiguousarray(cen.imag)
    z0 = np.asarray(z0, dtype=complex).ravel()
    d0 = np.asarray(dir0, dtype=float).ravel()
    cdef Py_ssize_t m = z0.shape[0], i
    cdef long long s
    out = np.empty((m, nsteps + 1))
    cdef double[:, ::1] ov = out
    cdef double[::1] zr0 = np.ascontiguousarray(z0.real)
    cdef double[::1] zi0 = np.ascontiguousarray(z0.imag)
    cdef double[::1] dd0 = np.ascontiguousarray(d0)
    cdef double th = tanh(dt / 2.0)
    cdef double x, y, ang, ur, ui, nr, ni, dr, di, den, wx, wy, r, ar, ai, br, bi, pr, pi_
    cdef long long steps
    cdef bint alive, failed = False
    with nogil:
        for i in range(m):
            x = zr0[i]; y = zi0[i]; ang = dd0[i]
            r = 2.0 * atanh(sqrt(x * x + y * y))
            ov[i, 0] = r
            alive = r <= escape_radius
            for s in range(1, nsteps + 1):
                if not alive:
                    ov[i, s] = INFINITY
                    continue
                ur = th * cos(ang); ui = th * sin(ang)
                # w = (u + z) / (1 + conj(z) u)
                nr = ur + x; ni = ui + y
                dr = 1.0 + (x * ur + y * ui)
                di = x * ui - y * ur
                den = dr * dr + di * di
                wx = (nr * dr + ni * di) / den
                wy = (ni * dr - nr * di) / den
                ang = ang - 2.0 * atan2(di, dr)
                ar = 1.0; ai = 0.0; br = 0.0; bi = 0.0
                steps = 0
                pr = wx; pi_ = wy
                if _fold_one(&wx, &wy, &ar, &ai, &br, &bi, gar, gai, gbr, gbi, cr, ci, 1000000, &steps) < 0:
                    failed = True
                    break
                # derivative of accumulated map at pre-image: (conj(b) p + conj(a))^-2
                dr = (br * pr + bi * pi_) + ar
                di = (br * pi_ - bi * pr) - ai
                ang = ang - 2.0 * atan2(di, dr)
                x = wx; y = wy
                r = x * x + y * y
                if r >= 1.0:
                    r = 1.0 - 1e-16
                r = 2.0 * atanh(sqrt(r))
                alive = r <= escape_radius
                ov[i, s] = r if alive else INFINITY
            if failed:
                break
    if failed:
        raise RuntimeError("folding did not terminate")
    return out
