"""Compiled inner loops.

Everything here works on plain arrays and scalars so it can be called both from
numba code and directly from Python. The public modules wrap these with
friendlier types.
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from numba import njit, prange

from .core import EPS

ECC = 0
EMCC = 1

# indices into the 10-element sums vector produced by ``pair_sums``
LL, RR, LR, LGR, RGR, GRGR, GLGL, LGL, GLR, GLGR = range(10)


class KernelData(NamedTuple):
    left: np.ndarray
    gleft: np.ndarray
    right: np.ndarray
    gright: np.ndarray
    d0: np.ndarray
    d0valid: np.ndarray
    eta_s: np.ndarray
    eta_d: np.ndarray
    subpix: np.ndarray  # per-pixel: estimate t here
    feasible: np.ndarray  # eta is finite
    growable: np.ndarray  # feasible and not depth-occluded


class KernelCfg(NamedTuple):
    half: int
    gamma_d: float
    use_weights: bool
    criterion: int
    lam: float
    r: int
    T: float
    dmin: int
    dmax: int
    t_lo: float
    t_hi: float


# ---------------------------------------------------------------------------
# rational quadratic maximisation


@njit(cache=True)
def rq_eval(a0, a1, a2, b0, b1, b2, t):
    return (a0 + t * (a1 + t * a2)) / (b0 + t * (b1 + t * b2))


@njit(cache=True)
def rq_derivative_coeffs(a0, a1, a2, b0, b1, b2):
    c0 = a1 * b0 - b1 * a0
    c1 = 2.0 * (a2 * b0 - b2 * a0)
    c2 = a2 * b1 - b2 * a1
    return c0, c1, c2


@njit(cache=True)
def rq_stationary(c0, c1, c2):
    """Roots of c0 + c1 t + c2 t^2 split into (maximiser, minimiser).

    The maximiser is the root where the derivative numerator is decreasing,
    i.e. ``2*c2*t + c1 = -sqrt(disc)``. NaN marks a missing root.
    """
    nan = np.nan
    if c2 == 0.0:
        if c1 == 0.0:
            return nan, nan
        t = -c0 / c1
        if c1 < 0.0:
            return t, nan
        return nan, t
    disc = c1 * c1 - 4.0 * c0 * c2
    if not disc > 0.0:
        return nan, nan
    sq = math.sqrt(disc)
    q = -0.5 * (c1 + sq) if c1 >= 0.0 else -0.5 * (c1 - sq)
    ra = q / c2
    rb = c0 / q if q != 0.0 else nan
    if 2.0 * c2 * ra + c1 < 0.0:
        return ra, rb
    return rb, ra


@njit(cache=True)
def rq_maximize(a0, a1, a2, b0, b1, b2, lo, hi):
    """Global maximiser of (a0+a1 t+a2 t^2)/(b0+b1 t+b2 t^2) on [lo, hi].

    Candidates are 0 (tie-break), the unique interior maximum and both ends.
    """
    c0, c1, c2 = rq_derivative_coeffs(a0, a1, a2, b0, b1, b2)
    tmax, _ = rq_stationary(c0, c1, c2)
    best_t = lo
    best = rq_eval(a0, a1, a2, b0, b1, b2, lo)
    if lo <= 0.0 <= hi:
        best_t = 0.0
        best = rq_eval(a0, a1, a2, b0, b1, b2, 0.0)
    if not math.isnan(tmax) and lo <= tmax <= hi:
        v = rq_eval(a0, a1, a2, b0, b1, b2, tmax)
        if v > best:
            best, best_t = v, tmax
    for t in (lo, hi):
        v = rq_eval(a0, a1, a2, b0, b1, b2, t)
        if v > best:
            best, best_t = v, t
    return best_t, best


# ---------------------------------------------------------------------------
# criteria from inner products


@njit(cache=True)
def emcc_coeffs(s):
    a0 = 2.0 * s[LR]
    a1 = s[LGR] - s[GLR]
    a2 = -0.5 * s[GLGR]
    b0 = s[LL] + s[RR]
    b1 = s[RGR] - s[LGL]
    b2 = 0.25 * (s[GLGL] + s[GRGR])
    return a0, a1, a2, b0, b1, b2


@njit(cache=True)
def _quad_min(q0, q1, q2, lo, hi):
    # min of q0 + q1 t + q2 t^2 over [lo, hi]
    m = min(q0 + q1 * lo + q2 * lo * lo, q0 + q1 * hi + q2 * hi * hi)
    if q2 > 0.0:
        tv = -q1 / (2.0 * q2)
        if lo <= tv <= hi:
            m = min(m, q0 + q1 * tv + q2 * tv * tv)
    return m


@njit(cache=True)
def ecc_value(s, t):
    q = s[RR] + 2.0 * t * s[RGR] + t * t * s[GRGR]
    nl = math.sqrt(s[LL])
    if nl < EPS or q < EPS * EPS:
        return np.nan
    return (s[LR] + t * s[LGR]) / (nl * math.sqrt(q))


@njit(cache=True)
def emcc_value(s, t):
    a0, a1, a2, b0, b1, b2 = emcc_coeffs(s)
    den = b0 + t * (b1 + t * b2)
    if den < EPS:
        return np.nan
    return (a0 + t * (a1 + t * a2)) / den


@njit(cache=True)
def ecc_degenerate(s, lo, hi, subpix):
    if s[LL] < EPS * EPS or s[RR] < EPS * EPS:
        return True
    if subpix:
        return _quad_min(s[RR], 2.0 * s[RGR], s[GRGR], lo, hi) < EPS * EPS
    return False


@njit(cache=True)
def emcc_degenerate(s, lo, hi, subpix):
    a0, a1, a2, b0, b1, b2 = emcc_coeffs(s)
    if b0 < EPS:
        return True
    if subpix:
        return _quad_min(b0, b1, b2, lo, hi) < EPS
    return False


@njit(cache=True)
def ecc_maximize_sums(s, lo, hi):
    """Maximise the ECC over t in [lo, hi]; stationary point is a linear solve."""
    a = s[LR]
    b = s[LGR]
    q0 = s[RR]
    q1 = s[RGR]
    q2 = s[GRGR]
    best_t = 0.0
    best = ecc_value(s, 0.0)
    den = b * q1 - a * q2
    scale = abs(b * q1) + abs(a * q2)
    if abs(den) > EPS * scale:
        ts = (a * q1 - b * q0) / den
        if lo <= ts <= hi:
            v = ecc_value(s, ts)
            if v > best:
                best, best_t = v, ts
    for t in (lo, hi):
        v = ecc_value(s, t)
        if v > best:
            best, best_t = v, t
    return best_t, best


@njit(cache=True)
def emcc_maximize_sums(s, lo, hi):
    a0, a1, a2, b0, b1, b2 = emcc_coeffs(s)
    return rq_maximize(a0, a1, a2, b0, b1, b2, lo, hi)


@njit(cache=True)
def criterion_best(s, criterion, subpix, lo, hi):
    """Returns (C, t, ok); ok is False for a degenerate window."""
    if criterion == ECC:
        if ecc_degenerate(s, lo, hi, subpix):
            return -1.0, 0.0, False
        if subpix:
            t, v = ecc_maximize_sums(s, lo, hi)
            return v, t, True
        return ecc_value(s, 0.0), 0.0, True
    if emcc_degenerate(s, lo, hi, subpix):
        return -1.0, 0.0, False
    if subpix:
        t, v = emcc_maximize_sums(s, lo, hi)
        return v, t, True
    return emcc_value(s, 0.0), 0.0, True


@njit(cache=True)
def vector_sums(uL, uR, gL, gR):
    s = np.zeros(10)
    for i in range(uL.shape[0]):
        l, r, a, b = uL[i], uR[i], gL[i], gR[i]
        s[LL] += l * l
        s[RR] += r * r
        s[LR] += l * r
        s[LGR] += l * b
        s[RGR] += r * b
        s[GRGR] += b * b
        s[GLGL] += a * a
        s[LGL] += l * a
        s[GLR] += a * r
        s[GLGR] += a * b
    return s


# ---------------------------------------------------------------------------
# window sums straight from images


@njit(cache=True)
def _clamp(v, n):
    if v < 0:
        return 0
    if v >= n:
        return n - 1
    return v


@njit(cache=True)
def fill_weights(d0, d0valid, x, y, half, gamma_d, wbuf):
    """Depth-consistency weights exp(-|d0_p - d0_q| / gamma_d), row-major."""
    h, w = d0.shape
    k = 0
    pv = d0valid[y, x]
    dp = d0[y, x]
    for j in range(-half, half + 1):
        yy = _clamp(y + j, h)
        for i in range(-half, half + 1):
            xx = _clamp(x + i, w)
            if pv and d0valid[yy, xx]:
                wbuf[k] = math.exp(-abs(dp - d0[yy, xx]) / gamma_d)
            else:
                wbuf[k] = 1.0
            k += 1


@njit(cache=True)
def pair_sums(L, GL, R, GR, x, y, d, half, wbuf, use_w, s):
    h, w = L.shape
    n = (2 * half + 1) * (2 * half + 1)
    ml = 0.0
    mgl = 0.0
    mr = 0.0
    mgr = 0.0
    for j in range(-half, half + 1):
        yy = _clamp(y + j, h)
        for i in range(-half, half + 1):
            xl = _clamp(x + i, w)
            xr = _clamp(x + d + i, w)
            ml += L[yy, xl]
            mgl += GL[yy, xl]
            mr += R[yy, xr]
            mgr += GR[yy, xr]
    ml /= n
    mgl /= n
    mr /= n
    mgr /= n
    for m in range(10):
        s[m] = 0.0
    k = 0
    for j in range(-half, half + 1):
        yy = _clamp(y + j, h)
        for i in range(-half, half + 1):
            xl = _clamp(x + i, w)
            xr = _clamp(x + d + i, w)
            wk = wbuf[k] if use_w else 1.0
            l = wk * (L[yy, xl] - ml)
            a = wk * (GL[yy, xl] - mgl)
            r = wk * (R[yy, xr] - mr)
            b = wk * (GR[yy, xr] - mgr)
            s[LL] += l * l
            s[RR] += r * r
            s[LR] += l * r
            s[LGR] += l * b
            s[RGR] += r * b
            s[GRGR] += b * b
            s[GLGL] += a * a
            s[LGL] += l * a
            s[GLR] += a * r
            s[GLGR] += a * b
            k += 1


@njit(cache=True)
def data_term_at(kd, cfg, x, y, d, wbuf, s, subpix):
    """(E_S, t) for left pixel (x, y) at integer disparity d."""
    pair_sums(kd.left, kd.gleft, kd.right, kd.gright, x, y, d, cfg.half,
              wbuf, cfg.use_weights, s)
    c, t, ok = criterion_best(s, cfg.criterion, subpix, cfg.t_lo, cfg.t_hi)
    if not ok:
        return 2.0, 0.0
    es = 1.0 - c
    if es < 0.0:
        es = 0.0
    elif es > 2.0:
        es = 2.0
    return es, t


@njit(cache=True)
def energy_at(kd, cfg, x, y, d, wbuf, s, subpix):
    """(E, t) of the adaptive local energy; eta must be finite."""
    es_w = kd.eta_s[y, x]
    ed_w = kd.eta_d[y, x]
    e = 0.0
    t = 0.0
    if es_w > 0.0:
        es, t = data_term_at(kd, cfg, x, y, d, wbuf, s, subpix)
        e += es_w * es
    if ed_w > 0.0:
        e += ed_w * cfg.lam * abs(d - kd.d0[y, x])
    return e, t


@njit(cache=True)
def best_candidate(kd, cfg, x, y, d_parent, wbuf, s):
    """Minimise the local energy over |d - d_parent| <= r.

    Ties go to the candidate closest to the parent, then the smaller d.
    Returns (d, t, E, n_evaluated); n_evaluated == 0 if no candidate is in range.
    """
    if cfg.use_weights:
        fill_weights(kd.d0, kd.d0valid, x, y, cfg.half, cfg.gamma_d, wbuf)
    sp = kd.subpix[y, x]
    best_e = np.inf
    best_d = d_parent
    best_t = 0.0
    n = 0
    for off in range(cfg.r + 1):
        for sgn in (-1, 1):
            if off == 0 and sgn == 1:
                continue
            dc = d_parent + sgn * off
            if dc < cfg.dmin or dc > cfg.dmax:
                continue
            e, t = energy_at(kd, cfg, x, y, dc, wbuf, s, sp)
            n += 1
            if e < best_e:
                best_e, best_d, best_t = e, dc, t
    return best_d, best_t, best_e, n


# ---------------------------------------------------------------------------
# region growing


@njit(cache=True)
def grow_kernel(kd, cfg, seed_idx, seed_d):
    h, w = kd.left.shape
    npix = h * w
    n = (2 * cfg.half + 1) ** 2
    wbuf = np.ones(n)
    s = np.zeros(10)

    d_out = np.zeros(npix, np.int64)
    t_out = np.zeros(npix)
    e_out = np.full(npix, np.inf)
    assigned = np.zeros(npix, np.bool_)
    visited = np.zeros(npix, np.bool_)
    parent = np.full(npix, -1, np.int64)
    parent_d = np.zeros(npix, np.int64)
    assign_step = np.full(npix, -1, np.int64)
    visit_step = np.full(npix, -1, np.int64)

    # heap entries: (energy, pixel, insertion counter, d, is_seed)
    heap = [(0.0, np.int64(0), np.int64(0), np.int64(0), False)]
    heap.pop()
    counter = 0
    for k in range(seed_idx.shape[0]):
        p = seed_idx[k]
        y = p // w
        x = p - y * w
        if not kd.feasible[y, x]:
            continue
        d = seed_d[k]
        if cfg.use_weights:
            fill_weights(kd.d0, kd.d0valid, x, y, cfg.half, cfg.gamma_d, wbuf)
        e, _ = energy_at(kd, cfg, x, y, d, wbuf, s, False)
        heap.append((e, p, np.int64(counter), d, True))
        counter += 1
    n_seeds = counter
    if n_seeds == 0:
        return (d_out, t_out, e_out, assigned, parent, parent_d, assign_step,
                visit_step, 0, 0, 0)
    # sort then heapify keeps the order fully deterministic
    heap.sort()
    step = 0
    n_visits = 0
    n_evals = 0
    offs = ((-1, 0), (1, 0), (0, -1), (0, 1))
    while len(heap) > 0:
        e, p, _, d, is_seed = _heappop(heap)
        if visited[p]:
            continue
        if is_seed and assigned[p]:
            # superseded by a grown assignment which is queued separately
            continue
        visited[p] = True
        visit_step[p] = step
        step += 1
        n_visits += 1
        y = p // w
        x = p - y * w
        for o in offs:
            xn = x + o[0]
            yn = y + o[1]
            if xn < 0 or xn >= w or yn < 0 or yn >= h:
                continue
            q = yn * w + xn
            if assigned[q] or not kd.growable[yn, xn]:
                continue
            dq, tq, eq, ne = best_candidate(kd, cfg, xn, yn, d, wbuf, s)
            n_evals += ne
            if ne > 0 and eq < cfg.T:
                assigned[q] = True
                d_out[q] = dq
                t_out[q] = tq
                e_out[q] = eq
                parent[q] = p
                parent_d[q] = d
                assign_step[q] = step
                step += 1
                if not visited[q]:
                    _heappush(heap, (eq, q, np.int64(counter), dq, False))
                    counter += 1
    return (d_out, t_out, e_out, assigned, parent, parent_d, assign_step,
            visit_step, n_visits, n_evals, n_seeds)


@njit(cache=True)
def _heappush(heap, item):
    heap.append(item)
    pos = len(heap) - 1
    while pos > 0:
        par = (pos - 1) >> 1
        if heap[pos] < heap[par]:
            heap[pos], heap[par] = heap[par], heap[pos]
            pos = par
        else:
            break


@njit(cache=True)
def _heappop(heap):
    last = heap.pop()
    if len(heap) == 0:
        return last
    top = heap[0]
    heap[0] = last
    pos = 0
    n = len(heap)
    while True:
        c = 2 * pos + 1
        if c >= n:
            break
        if c + 1 < n and heap[c + 1] < heap[c]:
            c += 1
        if heap[c] < heap[pos]:
            heap[c], heap[pos] = heap[pos], heap[c]
            pos = c
        else:
            break
    return top


@njit(cache=True, parallel=True)
def wta_kernel(kd, cfg):
    h, w = kd.left.shape
    n = (2 * cfg.half + 1) ** 2
    d_out = np.zeros((h, w), np.int64)
    t_out = np.zeros((h, w))
    e_out = np.full((h, w), np.inf)
    valid = np.zeros((h, w), np.bool_)
    for y in prange(h):
        wbuf = np.ones(n)
        s = np.zeros(10)
        for x in range(w):
            if not kd.feasible[y, x]:
                continue
            if cfg.use_weights:
                fill_weights(kd.d0, kd.d0valid, x, y, cfg.half, cfg.gamma_d, wbuf)
            sp = kd.subpix[y, x]
            best = np.inf
            for d in range(cfg.dmin, cfg.dmax + 1):
                e, t = energy_at(kd, cfg, x, y, d, wbuf, s, sp)
                if e < best:
                    best = e
                    d_out[y, x] = d
                    t_out[y, x] = t
            e_out[y, x] = best
            valid[y, x] = True
    return d_out, t_out, e_out, valid


# ---------------------------------------------------------------------------
# filters


@njit(cache=True, parallel=True)
def entropy_kernel(img, half, bins):
    h, w = img.shape
    out = np.zeros((h, w))
    n = (2 * half + 1) ** 2
    norm = math.log(bins)
    for y in prange(h):
        hist = np.zeros(bins, np.int64)
        for x in range(w):
            hist[:] = 0
            for j in range(-half, half + 1):
                yy = _clamp(y + j, h)
                for i in range(-half, half + 1):
                    v = img[yy, _clamp(x + i, w)]
                    b = int(v * bins)
                    if b < 0:
                        b = 0
                    elif b >= bins:
                        b = bins - 1
                    hist[b] += 1
            ent = 0.0
            for b in range(bins):
                if hist[b] > 0:
                    pb = hist[b] / n
                    ent -= pb * math.log(pb)
            out[y, x] = ent / norm
    return out


@njit(cache=True)
def upsample_scatter(guide, sx, sy, sd, radius, sigma_s, gamma_c, use_color):
    """Joint spatial/colour weighted splatting of sparse samples.

    Returns (weighted sum, weight sum, spatial-only weight sum, min, max) maps.
    """
    h, w, nc = guide.shape
    num = np.zeros((h, w))
    den = np.zeros((h, w))
    sden = np.zeros((h, w))
    lo = np.full((h, w), np.inf)
    hi = np.full((h, w), -np.inf)
    r2 = radius * radius
    inv = 1.0 / (2.0 * sigma_s * sigma_s)
    for k in range(sx.shape[0]):
        qx = sx[k]
        qy = sy[k]
        dq = sd[k]
        for j in range(max(0, qy - radius), min(h, qy + radius + 1)):
            dy = j - qy
            for i in range(max(0, qx - radius), min(w, qx + radius + 1)):
                dx = i - qx
                rr = dx * dx + dy * dy
                if rr > r2:
                    continue
                ws = math.exp(-rr * inv)
                wc = 1.0
                if use_color:
                    cd = 0.0
                    for c in range(nc):
                        cd += abs(guide[j, i, c] - guide[qy, qx, c])
                    wc = math.exp(-cd / gamma_c)
                num[j, i] += ws * wc * dq
                den[j, i] += ws * wc
                sden[j, i] += ws
                if dq < lo[j, i]:
                    lo[j, i] = dq
                if dq > hi[j, i]:
                    hi[j, i] = dq
    return num, den, sden, lo, hi


@njit(cache=True)
def fill_gather(guide, values, valid, tx, ty, radius, sigma_s, gamma_c):
    """Joint-filter estimate at target pixels from valid neighbours.

    Returns (value, weight sum, spatial weight sum) per target.
    """
    h, w, nc = guide.shape
    m = tx.shape[0]
    out = np.zeros(m)
    wsum = np.zeros(m)
    ssum = np.zeros(m)
    r2 = radius * radius
    inv = 1.0 / (2.0 * sigma_s * sigma_s)
    for k in range(m):
        px = tx[k]
        py = ty[k]
        num = 0.0
        den = 0.0
        sden = 0.0
        for j in range(max(0, py - radius), min(h, py + radius + 1)):
            dy = j - py
            for i in range(max(0, px - radius), min(w, px + radius + 1)):
                if not valid[j, i]:
                    continue
                dx = i - px
                rr = dx * dx + dy * dy
                if rr > r2:
                    continue
                ws = math.exp(-rr * inv)
                cd = 0.0
                for c in range(nc):
                    cd += abs(guide[j, i, c] - guide[py, px, c])
                wc = math.exp(-cd / gamma_c)
                num += ws * wc * values[j, i]
                den += ws * wc
                sden += ws
        if den > 0.0:
            out[k] = num / den
        wsum[k] = den
        ssum[k] = sden
    return out, wsum, ssum
