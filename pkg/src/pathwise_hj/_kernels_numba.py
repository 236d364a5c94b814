"""Loop kernels compiled with numba.

Every function here has a vectorized twin in ``_kernels_numpy`` with the
same signature; ``kernels`` picks one at import time.  Hamiltonians and
diffusions are passed as an integer kind plus a parameter vector so the
kernels stay in nopython mode.
"""

import math

import numpy as np
from numba import njit

from ._codes import (
    FK_DEGENERATE,
    FK_LINEAR,
    HK_CONCAVE,
    HK_EIKONAL,
    HK_LINEAR,
    HK_QUADRATIC,
    HK_SMOOTH,
    SCHEME_LF1,
    SCHEME_LF2,
    SCHEME_TK,
    SCHEME_UPWIND,
)


@njit(cache=True)
def ham(kind, prm, p):
    a = prm[0]
    L = prm[1]
    if kind == HK_EIKONAL:
        return a * abs(p)
    if kind == HK_QUADRATIC:
        ap = abs(p)
        if ap <= L:
            return 0.5 * a * p * p
        return 0.5 * a * L * L + a * L * (ap - L)
    if kind == HK_SMOOTH:
        ap = abs(p)
        if ap <= L:
            return a * (math.sqrt(1.0 + p * p) - 1.0)
        return a * (math.sqrt(1.0 + L * L) - 1.0) + a * L / math.sqrt(1.0 + L * L) * (ap - L)
    if kind == HK_LINEAR:
        return a * p
    if kind == HK_CONCAVE:
        ap = abs(p)
        if ap <= L:
            return -0.5 * a * p * p
        return -0.5 * a * L * L - a * L * (ap - L)
    return np.nan


@njit(cache=True)
def ham_d(kind, prm, p):
    a = prm[0]
    L = prm[1]
    if kind == HK_EIKONAL:
        if p > 0.0:
            return a
        if p < 0.0:
            return -a
        return 0.0
    c = min(max(p, -L), L)
    if kind == HK_QUADRATIC:
        return a * c
    if kind == HK_SMOOTH:
        return a * c / math.sqrt(1.0 + c * c)
    if kind == HK_LINEAR:
        return a
    if kind == HK_CONCAVE:
        return -a * c
    return np.nan


@njit(cache=True)
def ham_star_dom(kind, prm):
    a = prm[0]
    L = prm[1]
    if kind == HK_EIKONAL:
        return -a, a
    if kind == HK_QUADRATIC:
        return -a * L, a * L
    if kind == HK_SMOOTH:
        s = a * L / math.sqrt(1.0 + L * L)
        return -s, s
    if kind == HK_LINEAR:
        return a, a
    return np.nan, np.nan


@njit(cache=True)
def ham_star(kind, prm, q):
    """Legendre transform on its (closed) effective domain; q is clipped into it."""
    a = prm[0]
    lo, hi = ham_star_dom(kind, prm)
    q = min(max(q, lo), hi)
    if kind == HK_EIKONAL:
        return 0.0
    if kind == HK_QUADRATIC:
        return 0.5 * q * q / a
    if kind == HK_SMOOTH:
        r = q / a
        return a * (1.0 - math.sqrt(max(1.0 - r * r, 0.0)))
    if kind == HK_LINEAR:
        return 0.0
    return np.nan


@njit(cache=True)
def diff_f(kind, prm, X):
    if kind == FK_LINEAR:
        return prm[0] * X
    if kind == FK_DEGENERATE:
        return prm[0] * max(X, 0.0)
    return 0.0


@njit(cache=True)
def lf1_step(u, dz, theta, hk, hp, h, out):
    M = u.shape[0]
    inv2h = 0.5 / h
    for i in range(M):
        um = u[i - 1] if i > 0 else u[M - 1]
        up = u[i + 1] if i < M - 1 else u[0]
        out[i] = u[i] + ham(hk, hp, (up - um) * inv2h) * dz + 0.5 * theta * (up + um - 2.0 * u[i])


@njit(cache=True)
def lf2_step(u, dz, dt, eps, hk, hp, fk, fp, h, out):
    M = u.shape[0]
    inv2h = 0.5 / h
    invh2 = 1.0 / (h * h)
    for i in range(M):
        um = u[i - 1] if i > 0 else u[M - 1]
        up = u[i + 1] if i < M - 1 else u[0]
        X = (up + um - 2.0 * u[i]) * invh2
        out[i] = u[i] + ham(hk, hp, (up - um) * inv2h) * dz + (diff_f(fk, fp, X) + eps * X) * dt


@njit(cache=True)
def upwind_step(u, dz, hk, hp, h, out):
    M = u.shape[0]
    dzp = max(dz, 0.0)
    dzm = max(-dz, 0.0)
    for i in range(M):
        um = u[i - 1] if i > 0 else u[M - 1]
        up = u[i + 1] if i < M - 1 else u[0]
        p = (up - u[i]) / h
        q = (u[i] - um) / h
        grow = ham(hk, hp, max(p, 0.0)) + ham(hk, hp, min(q, 0.0))
        shrink = ham(hk, hp, max(q, 0.0)) + ham(hk, hp, min(p, 0.0))
        out[i] = u[i] + grow * dzp - shrink * dzm


@njit(cache=True)
def _hl_forward(u, c, h, hk, hp, s, out):
    # out_i = sup_y  u~(y) - c * G*((y - x_i)/c)  with G(p) = H(s p), u~ the periodic interpolant
    M = u.shape[0]
    lo_q, hi_q = ham_star_dom(hk, hp)
    if s < 0:
        lo_q, hi_q = -hi_q, -lo_q
    wlo = c * lo_q
    whi = c * hi_q
    jlo = int(math.floor(wlo / h))
    jhi = int(math.floor(whi / h))
    for i in range(M):
        best = -np.inf
        for j in range(jlo, jhi + 1):
            a0 = j * h
            a1 = a0 + h
            lo = max(a0, wlo)
            hi = min(a1, whi)
            if lo > hi:
                continue
            k0 = (i + j) % M
            k1 = (k0 + 1) % M
            slope = (u[k1] - u[k0]) / h
            y = c * s * ham_d(hk, hp, s * slope)
            y = min(max(y, lo), hi)
            val = u[k0] + slope * (y - a0) - c * ham_star(hk, hp, s * y / c)
            if val > best:
                best = val
        out[i] = best


@njit(cache=True)
def hopf_lax(u, c, h, hk, hp, out):
    if c > 0.0:
        _hl_forward(u, c, h, hk, hp, 1.0, out)
    elif c < 0.0:
        _hl_forward(-u, -c, h, hk, hp, -1.0, out)
        for i in range(out.shape[0]):
            out[i] = -out[i]
    else:
        out[:] = u


@njit(cache=True)
def diffusion_substeps(u, dt, fk, fp, h, out):
    M = u.shape[0]
    nu = abs(fp[0])
    nsub = 1
    if nu > 0.0:
        nsub = max(1, int(math.ceil(2.0 * nu * dt / (h * h))))
    ds = dt / nsub
    invh2 = 1.0 / (h * h)
    cur = u.copy()
    nxt = np.empty_like(u)
    for _ in range(nsub):
        for i in range(M):
            um = cur[i - 1] if i > 0 else cur[M - 1]
            up = cur[i + 1] if i < M - 1 else cur[0]
            nxt[i] = cur[i] + ds * diff_f(fk, fp, (up + um - 2.0 * cur[i]) * invh2)
        cur, nxt = nxt, cur
    out[:] = cur


@njit(cache=True)
def tk_step(u, dz, dt, hk, hp, fk, fp, h, out):
    tmp = np.empty_like(u)
    hopf_lax(u, dz, h, hk, hp, tmp)
    if dt > 0.0 and fk != 0:
        diffusion_substeps(tmp, dt, fk, fp, h, out)
    else:
        out[:] = tmp


@njit(cache=True)
def _lip(u, h):
    M = u.shape[0]
    m = abs(u[0] - u[M - 1])
    for i in range(M - 1):
        d = abs(u[i + 1] - u[i])
        if d > m:
            m = d
    return m / h


@njit(cache=True)
def evolve(u0, dz, dt, scheme, theta, eps, hk, hp, fk, fp, h, probe_steps):
    M = u0.shape[0]
    N = dz.shape[0]
    snaps = np.empty((probe_steps.shape[0], M))
    vmax = np.empty(N + 1)
    vmin = np.empty(N + 1)
    cur = u0.copy()
    nxt = np.empty_like(cur)
    lip = _lip(cur, h)
    vmax[0] = cur.max()
    vmin[0] = cur.min()
    p = 0
    while p < probe_steps.shape[0] and probe_steps[p] == 0:
        snaps[p] = cur
        p += 1
    for n in range(N):
        if scheme == SCHEME_LF1:
            lf1_step(cur, dz[n], theta, hk, hp, h, nxt)
        elif scheme == SCHEME_LF2:
            lf2_step(cur, dz[n], dt[n], eps, hk, hp, fk, fp, h, nxt)
        elif scheme == SCHEME_UPWIND:
            upwind_step(cur, dz[n], hk, hp, h, nxt)
        elif scheme == SCHEME_TK:
            tk_step(cur, dz[n], dt[n], hk, hp, fk, fp, h, nxt)
        cur, nxt = nxt, cur
        l = _lip(cur, h)
        if l > lip:
            lip = l
        vmax[n + 1] = cur.max()
        vmin[n + 1] = cur.min()
        while p < probe_steps.shape[0] and probe_steps[p] == n + 1:
            snaps[p] = cur
            p += 1
    return snaps, lip, vmax, vmin


@njit(cache=True)
def stopping_times(t, w, eta, T):
    """Exact first-passage times of the running oscillation of a piecewise-linear path."""
    n = t.shape[0]
    out = np.empty(16)
    k = 0
    ta = t[0]
    wa = w[0]
    hi = wa
    lo = wa
    i = 1
    while i < n:
        tb = t[i]
        wb = w[i]
        if wb > hi and wb - lo > eta:
            level = lo + eta
        elif wb < lo and hi - wb > eta:
            level = hi - eta
        else:
            hi = max(hi, wb)
            lo = min(lo, wb)
            ta = tb
            wa = wb
            i += 1
            continue
        tc = ta + (level - wa) / (wb - wa) * (tb - ta)
        if tc > T:
            break
        if k == out.shape[0]:
            grown = np.empty(2 * k)
            grown[:k] = out
            out = grown
        out[k] = tc
        k += 1
        # restart the block at the crossing point and keep scanning the same segment
        ta = tc
        wa = level
        hi = level
        lo = level
    return out[:k]


@njit(cache=True)
def pair_candidates(t, z):
    """Pairs (dt^2, |dz|) that are running maxima of |dz| along each row i < j."""
    n = t.shape[0]
    cnt = 0
    for i in range(n):
        best = 0.0
        for j in range(i + 1, n):
            a = abs(z[j] - z[i])
            if a > best:
                best = a
                cnt += 1
    B = np.empty(cnt)
    A = np.empty(cnt)
    c = 0
    for i in range(n):
        best = 0.0
        for j in range(i + 1, n):
            a = abs(z[j] - z[i])
            if a > best:
                best = a
                d = t[j] - t[i]
                B[c] = d * d
                A[c] = a
                c += 1
    return B, A


@njit(cache=True)
def holder_constant(w, dt, alpha):
    n = w.shape[0]
    best = 0.0
    for k in range(1, n):
        scale = (k * dt) ** alpha
        m = 0.0
        for i in range(n - k):
            d = abs(w[i + k] - w[i])
            if d > m:
                m = d
        r = m / scale
        if r > best:
            best = r
    return best
