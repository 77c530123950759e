"""NumPy implementations of the hot loops in ``setinv._core``.

Used when the compiled extension is unavailable, or when
``SETINV_PURE_PYTHON=1`` is set. Pair selection, clipping and refinement
follow the compiled code step for step so both backends reach the same
fixed points.
"""

import numpy as np

TAU = 1e-12


def _kernel_row(X, i, inv2g2):
    diff = X - X[i]
    return np.exp(-np.einsum("ij,ij->i", diff, diff) * inv2g2)


def _last_argmax(a):
    return a.shape[0] - 1 - int(np.argmax(a[::-1]))


def smo_solve(y, beta, L, tol, max_iter, K=None, X=None, gamma=1.0):
    n = y.shape[0]
    cached = K is not None
    inv2g2 = 0.5 / (gamma * gamma)
    KD = np.diag(K).copy() if cached else np.ones(n)

    def row(i):
        return K[i] if cached else _kernel_row(X, i, inv2g2)

    G = -np.ones(n)
    for j in np.flatnonzero(beta != 0.0):
        G += y * y[j] * row(j) * beta[j]

    pos = y > 0
    it = 0
    while True:
        below = beta < L
        above = beta > 0.0
        up = np.where(pos, below, above)
        low = np.where(pos, above, below)
        score = -y * G
        if not up.any():
            gap = 0.0
            break
        i = _last_argmax(np.where(up, score, -np.inf))
        gmax = score[i]
        Ki = row(i)
        yi = y[i]
        gd = gmax - score
        if low.any():
            gmax2 = float(np.max(-score[low]))
        else:
            gmax2 = -np.inf
        cand = low & (gd > 0)
        gap = gmax + gmax2
        if not cand.any() or gap < tol:
            break
        if it >= max_iter:
            break
        qc = KD[i] + KD - 2.0 * Ki
        qc = np.where(qc > 0, qc, TAU)
        od = np.where(cand, -(gd * gd) / qc, np.inf)
        j = od.shape[0] - 1 - int(np.argmin(od[::-1]))
        it += 1
        yj = y[j]
        Kj = row(j)

        bi_old, bj_old = beta[i], beta[j]
        bi, bj = bi_old, bj_old
        if yi != yj:
            q = KD[i] + KD[j] + 2.0 * (yi * yj * Ki[j])
            if q <= 0:
                q = TAU
            delta = (-G[i] - G[j]) / q
            diff = bi - bj
            bi += delta
            bj += delta
            if diff > 0:
                if bj < 0:
                    bj, bi = 0.0, diff
            elif bi < 0:
                bi, bj = 0.0, -diff
            if diff > 0:
                if bi > L:
                    bi, bj = L, L - diff
            elif bj > L:
                bj, bi = L, L + diff
        else:
            q = KD[i] + KD[j] - 2.0 * (yi * yj * Ki[j])
            if q <= 0:
                q = TAU
            delta = (G[i] - G[j]) / q
            ssum = bi + bj
            bi -= delta
            bj += delta
            if ssum > L:
                if bi > L:
                    bi, bj = L, ssum - L
            elif bj < 0:
                bj, bi = 0.0, ssum
            if ssum > L:
                if bj > L:
                    bj, bi = L, ssum - L
            elif bi < 0:
                bi, bj = 0.0, ssum
        beta[i], beta[j] = bi, bj
        dai = bi - bi_old
        daj = bj - bj_old
        G += y * (yi * Ki * dai + yj * Kj * daj)
    return it, float(gap), G


def rbf_decision(P, S, coef, bias, gamma):
    P = np.asarray(P, dtype=float)
    inv2g2 = 0.5 / (gamma * gamma)
    out = np.empty(P.shape[0])
    step = max(1, 2_000_000 // max(1, S.shape[0] * P.shape[1]))
    for s in range(0, P.shape[0], step):
        chunk = P[s:s + step]
        diff = chunk[:, None, :] - S[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        out[s:s + step] = bias + np.exp(-d2 * inv2g2) @ coef
    return out


def scan_classify(P, lo, hi, kind):
    P = np.asarray(P, dtype=float)
    out = np.full(P.shape[0], -1, dtype=np.int8)
    nb, d = lo.shape
    if nb == 0:
        return out
    step = max(1, 4_000_000 // (nb * d))
    for s in range(0, P.shape[0], step):
        chunk = P[s:s + step]
        inside = np.all((chunk[:, None, :] >= lo) & (chunk[:, None, :] <= hi), axis=2)
        hit = inside.any(axis=1)
        first = np.argmax(inside, axis=1)
        out[s:s + step] = np.where(hit, kind[first], -1)
    return out


def _lv_step(p1, p2, p3, p4, h, u, v):
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
    return (u + h * (k1u + 2.0 * k2u + 2.0 * k3u + k4u) / 6.0,
            v + h * (k1v + 2.0 * k2v + 2.0 * k3v + k4v) / 6.0)


def _refine_min(p1, p2, p3, p4, ua, va, H):
    """Vectorised twin of the compiled cell refinement; INF where skipped."""
    out = np.full(ua.shape[0], np.inf)
    ga = ua * (p1 - p2 * va)
    ut, vt = _lv_step(p1, p2, p3, p4, H, ua, va)
    gb = ut * (p1 - p2 * vt)
    act = (ga < 0.0) & (gb > 0.0)
    if not act.any():
        return out
    idx = np.flatnonzero(act)
    p1, p2, p3, p4 = p1[idx], p2[idx], p3[idx], p4[idx]
    ua, va, H, ga, gb = ua[idx], va[idx], H[idx], ga[idx], gb[idx]
    a = np.zeros_like(H)
    b = H.copy()
    tau = H * ga / (ga - gb)
    live = np.ones(idx.shape[0], dtype=bool)
    for _ in range(60):
        if not live.any():
            break
        ut, vt = _lv_step(p1, p2, p3, p4, tau, ua, va)
        du = ut * (p1 - p2 * vt)
        dv = -vt * (p3 - p4 * ut)
        g = du
        zero = live & (g == 0.0)
        live &= ~zero
        a = np.where(live & (g < 0.0), tau, a)
        b = np.where(live & (g > 0.0), tau, b)
        dg = du * (p1 - p2 * vt) - ut * p2 * dv
        with np.errstate(divide="ignore", invalid="ignore"):
            tn = np.where(dg != 0.0, tau - g / dg, 0.5 * (a + b))
        bad = ~((tn > a) & (tn < b))
        tn = np.where(bad, 0.5 * (a + b), tn)
        done = live & (np.abs(tn - tau) <= 1e-15 * H)
        tau = np.where(live, tn, tau)
        live &= ~done
    ut, _ = _lv_step(p1, p2, p3, p4, tau, ua, va)
    out[idx] = ut
    return out


def lv_min_prey(p1, p2, p3, p4, u0, v0, T, dt):
    p1, p2, p3, p4 = (np.ascontiguousarray(p, dtype=float) for p in (p1, p2, p3, p4))
    m = p1.shape[0]
    n = int(np.ceil(T / dt - 1e-9))
    hlast = T - (n - 1) * dt
    if n < 1:
        n, hlast = 1, T
    u = np.full(m, float(u0))
    v = np.full(m, float(v0))
    umin = u.copy()
    imin = np.zeros(m, dtype=np.int64)
    ua, va, ub, vb = u.copy(), v.copy(), u.copy(), v.copy()
    hprev = np.zeros(m)
    hnext = np.full(m, dt if n > 1 else hlast)
    fail = np.full(m, np.nan)
    alive = np.ones(m, dtype=bool)
    t = 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(n):
            h = dt if i < n - 1 else hlast
            un, vn = _lv_step(p1, p2, p3, p4, h, u, v)
            t += h
            bad = alive & ~(np.isfinite(un) & np.isfinite(vn))
            if bad.any():
                fail[bad] = t
                alive &= ~bad
            upd = alive & (un < umin)
            if upd.any():
                umin = np.where(upd, un, umin)
                imin = np.where(upd, i + 1, imin)
                ua = np.where(upd, u, ua)
                va = np.where(upd, v, va)
                ub = np.where(upd, un, ub)
                vb = np.where(upd, vn, vb)
                hprev = np.where(upd, h, hprev)
                hnext = np.where(upd, dt if i + 1 < n - 1 else hlast, hnext)
            u, v = un, vn

        du = ub * (p1 - p2 * vb)
        cand = np.full(m, np.inf)
        fwd = alive & (du < 0.0) & (imin < n)
        bwd = alive & (du > 0.0) & (imin > 0)
        if fwd.any():
            k = np.flatnonzero(fwd)
            cand[k] = _refine_min(p1[k], p2[k], p3[k], p4[k], ub[k], vb[k], hnext[k])
        if bwd.any():
            k = np.flatnonzero(bwd)
            cand[k] = _refine_min(p1[k], p2[k], p3[k], p4[k], ua[k], va[k], hprev[k])
    out = np.where(cand < umin, cand, umin)
    out[~alive] = np.nan
    return out, fail
