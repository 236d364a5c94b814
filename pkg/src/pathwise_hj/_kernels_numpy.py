"""Vectorized numpy kernels.

Signatures mirror ``_kernels_numba`` exactly so the two can be swapped
through the ``PATHWISE_HJ_BACKEND`` environment variable.  Loops run over
time steps or stencil offsets, never over grid nodes.
"""

import numpy as np

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


def ham(kind, prm, p):
    a, L = float(prm[0]), float(prm[1])
    p = np.asarray(p, dtype=float)
    ap = np.abs(p)
    if kind == HK_EIKONAL:
        return a * ap
    if kind == HK_QUADRATIC:
        return np.where(ap <= L, 0.5 * a * p * p, 0.5 * a * L * L + a * L * (ap - L))
    if kind == HK_SMOOTH:
        r = np.sqrt(1.0 + L * L)
        return np.where(ap <= L, a * (np.sqrt(1.0 + p * p) - 1.0), a * (r - 1.0) + a * L / r * (ap - L))
    if kind == HK_LINEAR:
        return a * p
    if kind == HK_CONCAVE:
        return np.where(ap <= L, -0.5 * a * p * p, -0.5 * a * L * L - a * L * (ap - L))
    return np.full_like(p, np.nan)


def ham_d(kind, prm, p):
    a, L = float(prm[0]), float(prm[1])
    p = np.asarray(p, dtype=float)
    if kind == HK_EIKONAL:
        return a * np.sign(p)
    c = np.clip(p, -L, L)
    if kind == HK_QUADRATIC:
        return a * c
    if kind == HK_SMOOTH:
        return a * c / np.sqrt(1.0 + c * c)
    if kind == HK_LINEAR:
        return np.full_like(p, a)
    if kind == HK_CONCAVE:
        return -a * c
    return np.full_like(p, np.nan)


def ham_star_dom(kind, prm):
    a, L = float(prm[0]), float(prm[1])
    if kind == HK_EIKONAL:
        return -a, a
    if kind == HK_QUADRATIC:
        return -a * L, a * L
    if kind == HK_SMOOTH:
        s = a * L / np.sqrt(1.0 + L * L)
        return -s, s
    if kind == HK_LINEAR:
        return a, a
    return np.nan, np.nan


def ham_star(kind, prm, q):
    """Legendre transform on its (closed) effective domain; q is clipped into it."""
    a = float(prm[0])
    lo, hi = ham_star_dom(kind, prm)
    q = np.clip(np.asarray(q, dtype=float), lo, hi)
    if kind in (HK_EIKONAL, HK_LINEAR):
        return np.zeros_like(q)
    if kind == HK_QUADRATIC:
        return 0.5 * q * q / a
    if kind == HK_SMOOTH:
        r = q / a
        return a * (1.0 - np.sqrt(np.maximum(1.0 - r * r, 0.0)))
    return np.full_like(q, np.nan)


def diff_f(kind, prm, X):
    X = np.asarray(X, dtype=float)
    if kind == FK_LINEAR:
        return prm[0] * X
    if kind == FK_DEGENERATE:
        return prm[0] * np.maximum(X, 0.0)
    return np.zeros_like(X)


def lf1_step(u, dz, theta, hk, hp, h, out):
    up = np.roll(u, -1)
    um = np.roll(u, 1)
    out[:] = u + ham(hk, hp, (up - um) * (0.5 / h)) * dz + 0.5 * theta * (up + um - 2.0 * u)


def lf2_step(u, dz, dt, eps, hk, hp, fk, fp, h, out):
    up = np.roll(u, -1)
    um = np.roll(u, 1)
    X = (up + um - 2.0 * u) / (h * h)
    out[:] = u + ham(hk, hp, (up - um) * (0.5 / h)) * dz + (diff_f(fk, fp, X) + eps * X) * dt


def upwind_step(u, dz, hk, hp, h, out):
    up = np.roll(u, -1)
    um = np.roll(u, 1)
    p = (up - u) / h
    q = (u - um) / h
    grow = ham(hk, hp, np.maximum(p, 0.0)) + ham(hk, hp, np.minimum(q, 0.0))
    shrink = ham(hk, hp, np.maximum(q, 0.0)) + ham(hk, hp, np.minimum(p, 0.0))
    out[:] = u + grow * max(dz, 0.0) - shrink * max(-dz, 0.0)


def _hl_forward(u, c, h, hk, hp, s, out):
    M = u.shape[0]
    lo_q, hi_q = ham_star_dom(hk, hp)
    if s < 0:
        lo_q, hi_q = -hi_q, -lo_q
    wlo = c * lo_q
    whi = c * hi_q
    idx = np.arange(M)
    best = np.full(M, -np.inf)
    for j in range(int(np.floor(wlo / h)), int(np.floor(whi / h)) + 1):
        a0 = j * h
        lo = max(a0, wlo)
        hi = min(a0 + h, whi)
        if lo > hi:
            continue
        k0 = (idx + j) % M
        u0 = u[k0]
        slope = (u[(k0 + 1) % M] - u0) / h
        y = np.clip(c * s * ham_d(hk, hp, s * slope), lo, hi)
        np.maximum(best, u0 + slope * (y - a0) - c * ham_star(hk, hp, s * y / c), out=best)
    out[:] = best


def hopf_lax(u, c, h, hk, hp, out):
    if c > 0.0:
        _hl_forward(u, c, h, hk, hp, 1.0, out)
    elif c < 0.0:
        _hl_forward(-u, -c, h, hk, hp, -1.0, out)
        np.negative(out, out=out)
    else:
        out[:] = u


def diffusion_substeps(u, dt, fk, fp, h, out):
    nu = abs(fp[0])
    nsub = max(1, int(np.ceil(2.0 * nu * dt / (h * h)))) if nu > 0.0 else 1
    ds = dt / nsub
    cur = u.copy()
    for _ in range(nsub):
        cur = cur + ds * diff_f(fk, fp, (np.roll(cur, -1) + np.roll(cur, 1) - 2.0 * cur) / (h * h))
    out[:] = cur


def tk_step(u, dz, dt, hk, hp, fk, fp, h, out):
    tmp = np.empty_like(u)
    hopf_lax(u, dz, h, hk, hp, tmp)
    if dt > 0.0 and fk != 0:
        diffusion_substeps(tmp, dt, fk, fp, h, out)
    else:
        out[:] = tmp


def _lip(u, h):
    return float(np.max(np.abs(np.roll(u, -1) - u))) / h


def evolve(u0, dz, dt, scheme, theta, eps, hk, hp, fk, fp, h, probe_steps):
    N = dz.shape[0]
    snaps = np.empty((probe_steps.shape[0], u0.shape[0]))
    vmax = np.empty(N + 1)
    vmin = np.empty(N + 1)
    cur = u0.copy()
    nxt = np.empty_like(cur)
    lip = _lip(cur, h)
    vmax[0] = cur.max()
    vmin[0] = cur.min()
    snaps[probe_steps == 0] = cur
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
        lip = max(lip, _lip(cur, h))
        vmax[n + 1] = cur.max()
        vmin[n + 1] = cur.min()
        hit = probe_steps == n + 1
        if hit.any():
            snaps[hit] = cur
    return snaps, lip, vmax, vmin


def stopping_times(t, w, eta, T):
    """Exact first-passage times of the running oscillation, scanned in chunks.

    Within each block the running max/min are accumulated over a chunk of
    fine samples; the first sample whose oscillation exceeds ``eta`` is
    located and the crossing point is interpolated on that segment.
    """
    n = t.shape[0]
    out = []
    ta, wa = float(t[0]), float(w[0])
    i = 1
    chunk = 256
    while i < n:
        stop = min(n, i + chunk)
        seg = w[i:stop]
        hi = np.maximum(np.maximum.accumulate(seg), wa)
        lo = np.minimum(np.minimum.accumulate(seg), wa)
        # oscillation including the block start, before each sample is absorbed
        hi_prev = np.concatenate(([wa], hi[:-1]))
        lo_prev = np.concatenate(([wa], lo[:-1]))
        up = (seg > hi_prev) & (seg - lo_prev > eta)
        dn = (seg < lo_prev) & (hi_prev - seg > eta)
        hits = np.flatnonzero(up | dn)
        if hits.size == 0:
            if stop == n:
                break
            # carry the block state: extend the chunk from the same start
            chunk *= 2
            continue
        r = int(hits[0])
        j = i + r
        level = lo_prev[r] + eta if up[r] else hi_prev[r] - eta
        t0, w0 = (ta, wa) if j == i else (float(t[j - 1]), float(w[j - 1]))
        tc = t0 + (level - w0) / (w[j] - w0) * (t[j] - t0)
        if tc > T:
            break
        out.append(tc)
        # the next block starts mid-segment j at (tc, level)
        ta, wa = tc, level
        i = j
        chunk = 256
    return np.asarray(out, dtype=float)


def pair_candidates(t, z):
    """Pairs (dt^2, |dz|) that are running maxima of |dz| along each row i < j."""
    Bs, As = [], []
    for i in range(t.shape[0] - 1):
        a = np.abs(z[i + 1 :] - z[i])
        run = np.maximum.accumulate(a)
        new = np.empty(a.shape[0], dtype=bool)
        new[0] = a[0] > 0.0
        new[1:] = a[1:] > run[:-1]
        sel = np.flatnonzero(new)
        d = t[i + 1 + sel] - t[i]
        Bs.append(d * d)
        As.append(a[sel])
    if not Bs:
        return np.empty(0), np.empty(0)
    return np.concatenate(Bs), np.concatenate(As)


def holder_constant(w, dt, alpha):
    n = w.shape[0]
    best = 0.0
    for k in range(1, n):
        m = float(np.max(np.abs(w[k:] - w[:-k])))
        best = max(best, m / (k * dt) ** alpha)
    return best
