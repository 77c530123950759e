# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. Semantics mirror ``setinv._pycore`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, isfinite, ceil, NAN

cnp.import_array()

cdef double TAU = 1e-12
cdef double INF = float("inf")


cdef inline void _kernel_row(const double[:, ::1] X, Py_ssize_t i, double inv2g2,
                             double[::1] out) noexcept nogil:
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], k, a
    cdef double s, t
    for k in range(n):
        s = 0.0
        for a in range(d):
            t = X[i, a] - X[k, a]
            s += t * t
        out[k] = exp(-s * inv2g2)


def smo_solve(double[::1] y, double[::1] beta, double L, double tol, long max_iter,
              double[:, ::1] K=None, double[:, ::1] X=None, double gamma=1.0):
    """Two-coordinate dual ascent with second-order pair selection.

    ``beta`` is updated in place and must be feasible on entry. The kernel
    is read from ``K`` when given, otherwise rows are computed from ``X``.
    Returns ``(iterations, gap, G)`` where ``G = Q beta - 1``.
    """
    cdef Py_ssize_t n = y.shape[0], t, i, j
    cdef bint cached = K is not None
    cdef double inv2g2 = 0.5 / (gamma * gamma)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] G_arr = np.empty(n)
    cdef double[::1] G = G_arr
    cdef double* Ki
    cdef double* Kj
    cdef double[::1] buf_i = np.empty(n), buf_j = np.empty(n)
    cdef double[::1] KD = np.empty(n)
    cdef double gmax, gmax2, gd, qc, od, odmin, bi_old, bj_old, delta, diff, ssum, dai, daj
    cdef double yi, yj, gap
    cdef long it = 0
    cdef int k_i, k_j

    if cached:
        for t in range(n):
            KD[t] = K[t, t]
    else:
        for t in range(n):
            KD[t] = 1.0

    # gradient from the warm start
    for t in range(n):
        G[t] = -1.0
    for j in range(n):
        if beta[j] != 0.0:
            if cached:
                Kj = &K[j, 0]
            else:
                _kernel_row(X, j, inv2g2, buf_j)
                Kj = &buf_j[0]
            for t in range(n):
                G[t] += y[t] * y[j] * Kj[t] * beta[j]

    gap = INF
    while True:
        # i: maximal violator in I_up
        gmax = -INF
        k_i = -1
        for t in range(n):
            if y[t] > 0:
                if beta[t] < L and -G[t] >= gmax:
                    gmax = -G[t]
                    k_i = t
            else:
                if beta[t] > 0.0 and G[t] >= gmax:
                    gmax = G[t]
                    k_i = t
        if k_i < 0:
            gap = 0.0
            break
        i = k_i
        if cached:
            Ki = &K[i, 0]
        else:
            _kernel_row(X, i, inv2g2, buf_i)
            Ki = &buf_i[0]
        yi = y[i]
        gmax2 = -INF
        k_j = -1
        odmin = INF
        for t in range(n):
            if y[t] > 0:
                if beta[t] > 0.0:
                    gd = gmax + G[t]
                    if G[t] >= gmax2:
                        gmax2 = G[t]
                    if gd > 0:
                        qc = KD[i] + KD[t] - 2.0 * Ki[t]
                        od = -(gd * gd) / (qc if qc > 0 else TAU)
                        if od <= odmin:
                            k_j = t
                            odmin = od
            else:
                if beta[t] < L:
                    gd = gmax - G[t]
                    if -G[t] >= gmax2:
                        gmax2 = -G[t]
                    if gd > 0:
                        qc = KD[i] + KD[t] - 2.0 * Ki[t]
                        od = -(gd * gd) / (qc if qc > 0 else TAU)
                        if od <= odmin:
                            k_j = t
                            odmin = od
        gap = gmax + gmax2
        if gap < tol or k_j < 0:
            break
        if it >= max_iter:
            break
        it += 1
        j = k_j
        yj = y[j]
        if cached:
            Kj = &K[j, 0]
        else:
            _kernel_row(X, j, inv2g2, buf_j)
            Kj = &buf_j[0]

        bi_old = beta[i]
        bj_old = beta[j]
        if yi != yj:
            qc = KD[i] + KD[j] + 2.0 * (yi * yj * Ki[j])
            if qc <= 0:
                qc = TAU
            delta = (-G[i] - G[j]) / qc
            diff = beta[i] - beta[j]
            beta[i] += delta
            beta[j] += delta
            if diff > 0:
                if beta[j] < 0:
                    beta[j] = 0.0
                    beta[i] = diff
            else:
                if beta[i] < 0:
                    beta[i] = 0.0
                    beta[j] = -diff
            if diff > 0:
                if beta[i] > L:
                    beta[i] = L
                    beta[j] = L - diff
            else:
                if beta[j] > L:
                    beta[j] = L
                    beta[i] = L + diff
        else:
            qc = KD[i] + KD[j] - 2.0 * (yi * yj * Ki[j])
            if qc <= 0:
                qc = TAU
            delta = (G[i] - G[j]) / qc
            ssum = beta[i] + beta[j]
            beta[i] -= delta
            beta[j] += delta
            if ssum > L:
                if beta[i] > L:
                    beta[i] = L
                    beta[j] = ssum - L
            else:
                if beta[j] < 0:
                    beta[j] = 0.0
                    beta[i] = ssum
            if ssum > L:
                if beta[j] > L:
                    beta[j] = L
                    beta[i] = ssum - L
            else:
                if beta[i] < 0:
                    beta[i] = 0.0
                    beta[j] = ssum

        dai = beta[i] - bi_old
        daj = beta[j] - bj_old
        for t in range(n):
            G[t] += y[t] * (yi * Ki[t] * dai + yj * Kj[t] * daj)
    return it, gap, G_arr


def rbf_decision(const double[:, ::1] P, const double[:, ::1] S, const double[::1] coef,
                 double bias, double gamma):
    """``bias + sum_k coef_k exp(-|p - s_k|^2 / (2 gamma^2))`` for each row of P."""
    cdef Py_ssize_t m = P.shape[0], ns = S.shape[0], d = P.shape[1], r, k, a
    cdef double inv2g2 = 0.5 / (gamma * gamma), acc, s, t
    out_arr = np.empty(m)
    cdef double[::1] out = out_arr
    with nogil:
        for r in range(m):
            acc = 0.0
            for k in range(ns):
                s = 0.0
                for a in range(d):
                    t = P[r, a] - S[k, a]
                    s += t * t
                acc += coef[k] * exp(-s * inv2g2)
            out[r] = bias + acc
    return out_arr


def scan_classify(const double[:, ::1] P, const double[:, ::1] lo, const double[:, ::1] hi,
                  const signed char[::1] kind):
    """First containing box per point, boxes pre-sorted by precedence.

    Returns the box kind code, or -1 when no box contains the point.
    """
    cdef Py_ssize_t m = P.shape[0], nb = lo.shape[0], d = P.shape[1], r, k, a
    cdef bint inside
    out_arr = np.full(m, -1, dtype=np.int8)
    cdef signed char[::1] out = out_arr
    with nogil:
        for r in range(m):
            for k in range(nb):
                inside = True
                for a in range(d):
                    if P[r, a] < lo[k, a] or P[r, a] > hi[k, a]:
                        inside = False
                        break
                if inside:
                    out[r] = kind[k]
                    break
    return out_arr


cdef inline void _lv_step(double p1, double p2, double p3, double p4, double h,
                          double u, double v, double* uo, double* vo) noexcept nogil:
    cdef double k1u, k1v, k2u, k2v, k3u, k3v, k4u, k4v, uu, vv
    k1u = u * (p1 - p2 * v)
    k1v = -v * (p3 - p4 * u)
    uu = u + 0.5 * h * k1u
    vv = v + 0.5 * h * k1v
    k2u = uu * (p1 - p2 * vv)
    k2v = -vv * (p3 - p4 * uu)
    uu = u + 0.5 * h * k2u
    vv = v + 0.5 * h * k2v
    k3u = uu * (p1 - p2 * vv)
    k3v = -vv * (p3 - p4 * uu)
    uu = u + h * k3u
    vv = v + h * k3v
    k4u = uu * (p1 - p2 * vv)
    k4v = -vv * (p3 - p4 * uu)
    uo[0] = u + h * (k1u + 2.0 * k2u + 2.0 * k3u + k4u) / 6.0
    vo[0] = v + h * (k1v + 2.0 * k2v + 2.0 * k3v + k4v) / 6.0


cdef double _refine_min(double p1, double p2, double p3, double p4,
                        double ua, double va, double H) noexcept nogil:
    """Minimum of u on a cell starting at (ua, va) of length H, or INF.

    Safeguarded Newton on the sub-step length tau for u'(tau) = 0, where the
    state at tau is one RK4 step of length tau from the cell start.
    """
    cdef double a = 0.0, b = H, tau, ut, vt, g, dg, ga, gb, du, dv, tn
    cdef int it
    ga = ua * (p1 - p2 * va)
    _lv_step(p1, p2, p3, p4, H, ua, va, &ut, &vt)
    gb = ut * (p1 - p2 * vt)
    if not (ga < 0.0 and gb > 0.0):
        return INF
    tau = H * ga / (ga - gb)
    for it in range(60):
        _lv_step(p1, p2, p3, p4, tau, ua, va, &ut, &vt)
        du = ut * (p1 - p2 * vt)
        dv = -vt * (p3 - p4 * ut)
        g = du
        if g == 0.0:
            break
        if g < 0.0:
            a = tau
        else:
            b = tau
        dg = du * (p1 - p2 * vt) - ut * p2 * dv
        tn = tau - g / dg if dg != 0.0 else 0.5 * (a + b)
        if not (tn > a and tn < b):
            tn = 0.5 * (a + b)
        if fabs(tn - tau) <= 1e-15 * H:
            tau = tn
            break
        tau = tn
    _lv_step(p1, p2, p3, p4, tau, ua, va, &ut, &vt)
    return ut


def lv_min_prey(const double[::1] p1, const double[::1] p2, const double[::1] p3,
                const double[::1] p4, double u0, double v0, double T, double dt):
    """Prey minimum over [0, T] for each parameter row.

    Returns ``(minimum, fail_time)``; ``fail_time`` is NaN unless the state
    became non-finite, in which case ``minimum`` is NaN.
    """
    cdef Py_ssize_t m = p1.shape[0], r
    cdef long n = <long>ceil(T / dt - 1e-9), i, imin
    cdef double h, hlast = T - (n - 1) * dt, u, v, un, vn, umin, t
    cdef double ua, va, ub, vb, hprev, hnext, du, cand, uprev, vprev
    cdef double a1, a2, a3, a4
    if n < 1:
        n = 1
        hlast = T
    out_arr = np.empty(m)
    fail_arr = np.full(m, np.nan)
    cdef double[::1] out = out_arr, fail = fail_arr
    with nogil:
        for r in range(m):
            a1 = p1[r]; a2 = p2[r]; a3 = p3[r]; a4 = p4[r]
            u = u0; v = v0
            umin = u0; imin = 0
            ua = u0; va = v0; ub = u0; vb = v0
            hprev = 0.0
            hnext = dt if n > 1 else hlast
            t = 0.0
            for i in range(n):
                h = dt if i < n - 1 else hlast
                uprev = u; vprev = v
                _lv_step(a1, a2, a3, a4, h, u, v, &un, &vn)
                t += h
                u = un; v = vn
                if not (isfinite(u) and isfinite(v)):
                    fail[r] = t
                    break
                if u < umin:
                    umin = u
                    imin = i + 1
                    ua = uprev; va = vprev
                    ub = u; vb = v
                    hprev = h
                    hnext = dt if i + 1 < n - 1 else hlast
            if fail[r] == fail[r]:
                out[r] = NAN
                continue
            du = ub * (a1 - a2 * vb)
            cand = INF
            if du < 0.0 and imin < n:
                cand = _refine_min(a1, a2, a3, a4, ub, vb, hnext)
            elif du > 0.0 and imin > 0:
                cand = _refine_min(a1, a2, a3, a4, ua, va, hprev)
            out[r] = cand if cand < umin else umin
    return out_arr, fail_arr
