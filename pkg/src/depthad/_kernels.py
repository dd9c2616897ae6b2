"""Compiled inner loops for direction search.

Every approximate depth boils down to: project the sample on a direction,
take a median (and a MAD), compare with the query's projection.  With
n = 1000 this runs millions of times per experiment, so the selection step
uses a histogram-bucket scheme instead of sorting: the first range comes
from a small strided sample around the wanted rank (the rest of the time from
min/max), one pass bins values into 256 buckets, the bucket holding the
wanted rank is compacted and the process repeats on it.  The result is the
exact order statistic (bucket index is a monotone function of the value).

Notions are passed as small integers (see ``HALFSPACE`` etc.).  Random input
(normal vectors, uniforms) is drawn by the caller, so the kernels are pure
functions of their arguments.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

HALFSPACE = 0
PROJECTION = 1
PROJECTION_ASYMMETRIC = 2

_NBUCKETS = 256
_SMALL = 24
_SAMPLE = 16
_SAMPLE_HALF = 3
_SAMPLE_MIN = 256
_CDF_GRID = 2048


@nb.njit(cache=True, inline="always")
def _bucket(v, lo, scale):
    # Written with min/max so it compiles to selects, not branches.
    t = min(max((v - lo) * scale, 0.0), _NBUCKETS - 1.0)
    return int(t)


@nb.njit(cache=True)
def _insertion_sort(a, m):
    for i in range(1, m):
        v = a[i]
        j = i - 1
        while j >= 0 and a[j] > v:
            a[j + 1] = a[j]
            j -= 1
        a[j + 1] = v


@nb.njit(cache=True)
def _rank_pair(a, n, r, work, hist):
    """Order statistics of ranks r and r + 1 (0-based) of a[:n].

    ``a`` is left untouched; ``work`` (length >= n) and ``hist`` are scratch.
    When r + 1 == n the second value repeats the first.
    """
    src = a
    m = n
    below = 0
    r0 = r
    r1 = r + 1
    first = m > _SAMPLE_MIN
    while True:
        lo = 0.0
        hi = 0.0
        if first:
            # Bracket the wanted rank with a strided sample so that a few
            # extreme values cannot squeeze the bulk into a single bucket.
            # Values outside the bracket land in the end buckets.
            first = False
            for i in range(_SAMPLE):
                work[i] = src[(i * m) // _SAMPLE]
            _insertion_sort(work, _SAMPLE)
            j = (r0 * _SAMPLE) // m
            lo = work[max(0, j - _SAMPLE_HALF)]
            hi = work[min(_SAMPLE - 1, j + _SAMPLE_HALF)]
        if lo == hi:
            lo = src[0]
            hi = src[0]
            for i in range(1, m):
                v = src[i]
                lo = min(lo, v)
                hi = max(hi, v)
            if lo == hi:
                return lo, lo
        if m <= _SMALL:
            for i in range(m):
                work[i] = src[i]
            _insertion_sort(work, m)
            v0 = work[r0 - below]
            if r1 - below < m:
                return v0, work[r1 - below]
            return v0, v0
        scale = _NBUCKETS / (hi - lo)
        for b in range(_NBUCKETS):
            hist[b] = 0
        for i in range(m):
            b = _bucket(src[i], lo, scale)
            hist[b] += 1
        cum = below
        b0 = -1
        b1 = -1
        c0 = 0
        for b in range(_NBUCKETS):
            nxt = cum + hist[b]
            if b0 < 0 and r0 < nxt:
                b0 = b
                c0 = cum
            if r1 < nxt:
                b1 = b
                break
            cum = nxt
        if b1 < 0:
            b1 = b0
        if b0 == b1:
            c = 0
            for i in range(m):
                v = src[i]
                work[c] = v
                c += _bucket(v, lo, scale) == b0
            src = work
            m = c
            below = c0
            continue
        # r0 closes bucket b0 and r1 opens bucket b1 (buckets between are empty).
        v0 = -np.inf
        v1 = np.inf
        for i in range(m):
            v = src[i]
            b = _bucket(v, lo, scale)
            if b == b0:
                if v > v0:
                    v0 = v
            elif b == b1:
                if v < v1:
                    v1 = v
        return v0, v1


@nb.njit(cache=True)
def median_of(a, n, work, hist):
    k = n // 2
    if n % 2 == 1:
        v0, _ = _rank_pair(a, n, k, work, hist)
        return v0
    v0, v1 = _rank_pair(a, n, k - 1, work, hist)
    return 0.5 * (v0 + v1)


@nb.njit(cache=True)
def _project(XT, u, buf):
    d = XT.shape[0]
    n = XT.shape[1]
    for i in range(n):
        buf[i] = 0.0
    for j in range(d):
        uj = u[j]
        row = XT[j]
        for i in range(n):
            buf[i] += row[i] * uj


@nb.njit(cache=True)
def _dot(x, u):
    s = 0.0
    for j in range(x.shape[0]):
        s += x[j] * u[j]
    return s


@nb.njit(cache=True)
def depth_at(XT, x, u, notion, buf, work, hist):
    """Univariate depth of x'u among the projections X'u."""
    n = XT.shape[1]
    _project(XT, u, buf)
    xu = _dot(x, u)
    if notion == HALFSPACE:
        le = 0
        ge = 0
        for i in range(n):
            v = buf[i]
            if v <= xu:
                le += 1
            if v >= xu:
                ge += 1
        return min(le, ge) / n
    med = median_of(buf, n, work, hist)
    if notion == PROJECTION:
        num = abs(xu - med)
        for i in range(n):
            buf[i] = abs(buf[i] - med)
        scale = median_of(buf, n, work, hist)
    else:
        num = xu - med
        if num < 0.0:
            num = 0.0
        c = 0
        for i in range(n):
            dv = buf[i] - med
            if dv > 0.0:
                buf[c] = dv
                c += 1
        scale = median_of(buf, c, work, hist) if c > 0 else 0.0
    if scale > 0.0:
        return 1.0 / (1.0 + num / scale)
    return 1.0 if num == 0.0 else 0.0


@nb.njit(cache=True)
def side_at(XT, x, u, buf, work, hist):
    """x'u - med(X'u); positive when u points from the centre towards x."""
    n = XT.shape[1]
    _project(XT, u, buf)
    return _dot(x, u) - median_of(buf, n, work, hist)


@nb.njit(cache=True)
def depths_along(XT, x, U, notion):
    """Univariate depth for every row of U (directions assumed unit)."""
    n = XT.shape[1]
    buf = np.empty(n)
    work = np.empty(n)
    hist = np.zeros(_NBUCKETS, np.int64)
    out = np.empty(U.shape[0])
    for k in range(U.shape[0]):
        out[k] = depth_at(XT, x, U[k], notion, buf, work, hist)
    return out


@nb.njit(cache=True)
def _normalize(v, out):
    s = 0.0
    for j in range(v.shape[0]):
        s += v[j] * v[j]
    nrm = math.sqrt(s)
    if not (nrm > 1e-300) or not math.isfinite(nrm):
        return False
    for j in range(v.shape[0]):
        out[j] = v[j] / nrm
    return True


@nb.njit(cache=True)
def random_search(XT, x, notion, G):
    """Minimum univariate depth over the normalised rows of G.

    Returns (value, index of the first minimiser, evaluations).
    """
    n = XT.shape[1]
    d = XT.shape[0]
    buf = np.empty(n)
    work = np.empty(n)
    hist = np.zeros(_NBUCKETS, np.int64)
    u = np.empty(d)
    best = np.inf
    best_k = -1
    for k in range(G.shape[0]):
        if not _normalize(G[k], u):
            u[:] = 0.0
            u[0] = 1.0
        v = depth_at(XT, x, u, notion, buf, work, hist)
        if v < best:
            best = v
            best_k = k
    return best, best_k, G.shape[0]


@nb.njit(cache=True)
def _cap_inverse_cdf(theta, d, grid, cdf):
    # Polar angle density on a spherical cap of S^{d-1} is proportional to sin^{d-2}.
    m = grid.shape[0] - 1
    logs = np.empty(m + 1)
    top = -np.inf
    for i in range(m + 1):
        t = theta * i / m
        grid[i] = t
        if d <= 2:
            logs[i] = 0.0
        else:
            s = math.sin(t)
            logs[i] = (d - 2) * math.log(s) if s > 0.0 else -np.inf
        if logs[i] > top:
            top = logs[i]
    cdf[0] = 0.0
    prev = math.exp(logs[0] - top)
    for i in range(1, m + 1):
        cur = math.exp(logs[i] - top)
        cdf[i] = cdf[i - 1] + 0.5 * (prev + cur) * (grid[i] - grid[i - 1])
        prev = cur
    total = cdf[m]
    for i in range(m + 1):
        cdf[i] /= total


@nb.njit(cache=True)
def _invert(v, grid, cdf):
    lo = 0
    hi = cdf.shape[0] - 1
    while hi - lo > 1:
        mid = (lo + hi) >> 1
        if cdf[mid] <= v:
            lo = mid
        else:
            hi = mid
    span = cdf[hi] - cdf[lo]
    if span <= 0.0:
        return grid[lo]
    return grid[lo] + (v - cdf[lo]) / span * (grid[hi] - grid[lo])


@nb.njit(cache=True)
def refined_random_search(XT, x, notion, G, V, rounds, theta0, shrink):
    """Random search whose later rounds sample spherical caps around the incumbent.

    Round 0 uses the normalised rows of G as uniform directions.  Round r >= 1
    draws inside the cap of polar angle theta0 * shrink**(r - 1) centred at the
    incumbent: the tangent component comes from G, the polar angle from V via
    the tabulated inverse CDF.  Returns (value, direction, evaluations).
    """
    n = XT.shape[1]
    d = XT.shape[0]
    k = G.shape[0]
    buf = np.empty(n)
    work = np.empty(n)
    hist = np.zeros(_NBUCKETS, np.int64)
    grid = np.empty(_CDF_GRID + 1)
    cdf = np.empty(_CDF_GRID + 1)
    u = np.empty(d)
    w = np.empty(d)
    center = np.empty(d)
    best = np.inf
    best_u = np.zeros(d)
    best_u[0] = 1.0
    have_best = False
    base = k // rounds
    extra = k % rounds
    pos = 0
    for r in range(rounds):
        m = base + (1 if r < extra else 0)
        if m == 0:
            continue
        uniform = r == 0 or not have_best or d == 1
        if not uniform:
            theta = theta0 * shrink ** (r - 1)
            _cap_inverse_cdf(theta, d, grid, cdf)
            for j in range(d):
                center[j] = best_u[j]
        for i in range(pos, pos + m):
            if d == 1:
                u[0] = 1.0 if G[i, 0] >= 0.0 else -1.0
            elif uniform:
                if not _normalize(G[i], u):
                    u[:] = 0.0
                    u[0] = 1.0
            else:
                g = G[i]
                proj = _dot(g, center)
                for j in range(d):
                    w[j] = g[j] - proj * center[j]
                if not _normalize(w, w):
                    # g parallel to the centre: take any orthogonal unit vector
                    piv = 0
                    for j in range(d):
                        if abs(center[j]) < abs(center[piv]):
                            piv = j
                    for j in range(d):
                        w[j] = -center[piv] * center[j]
                    w[piv] += 1.0
                    _normalize(w, w)
                t = _invert(V[i], grid, cdf)
                ct = math.cos(t)
                st = math.sin(t)
                for j in range(d):
                    u[j] = ct * center[j] + st * w[j]
                _normalize(u, u)
            v = depth_at(XT, x, u, notion, buf, work, hist)
            if v < best:
                best = v
                have_best = True
                for j in range(d):
                    best_u[j] = u[j]
        pos += m
    return best, best_u, pos


@nb.njit(cache=True)
def _tangent_basis(u0, basis):
    """Orthonormal basis of the tangent space at u0 (rows of ``basis``)."""
    d = u0.shape[0]
    skip = 0
    for j in range(d):
        if abs(u0[j]) > abs(u0[skip]):
            skip = j
    row = 0
    v = np.empty(d)
    for j in range(d):
        if j == skip:
            continue
        for t in range(d):
            v[t] = 0.0
        v[j] = 1.0
        # Gram-Schmidt against u0 and previous rows, twice for stability.
        for _ in range(2):
            p = _dot(v, u0)
            for t in range(d):
                v[t] -= p * u0[t]
            for q in range(row):
                p = _dot(v, basis[q])
                for t in range(d):
                    v[t] -= p * basis[q, t]
        _normalize(v, basis[row])
        row += 1


@nb.njit(cache=True)
def nelder_mead_sphere(XT, x, notion, starts, budgets, alpha, gamma, beta, sigma, init_angle, tol):
    """Nelder-Mead over the unit sphere with multiple restarts.

    The simplex has d unit vectors.  Reflection, expansion and contraction
    points are formed in the ambient space and projected back onto the sphere.
    Restart r starts from the normalised row ``starts[r]`` and may spend at
    most ``budgets[r]`` evaluations.  Returns (value, direction, evaluations).
    """
    d = XT.shape[0]
    n = XT.shape[1]
    buf = np.empty(n)
    work = np.empty(n)
    hist = np.zeros(_NBUCKETS, np.int64)
    best = np.inf
    best_u = np.zeros(d)
    best_u[0] = 1.0
    evals = 0
    u = np.empty(d)
    if d == 1:
        for s in (1.0, -1.0):
            u[0] = s
            v = depth_at(XT, x, u, notion, buf, work, hist)
            evals += 1
            if v < best:
                best = v
                best_u[0] = s
        return best, best_u, evals

    S = np.empty((d, d))
    f = np.empty(d)
    order = np.empty(d, np.int64)
    basis = np.empty((d - 1, d))
    c = np.empty(d)
    xr = np.empty(d)
    ur = np.empty(d)
    xt = np.empty(d)
    ut = np.empty(d)
    ca = math.cos(init_angle)
    sa = math.sin(init_angle)

    for r in range(starts.shape[0]):
        budget = budgets[r]
        used = 0
        if not _normalize(starts[r], u):
            u[:] = 0.0
            u[0] = 1.0
        _tangent_basis(u, basis)
        for j in range(d):
            S[0, j] = u[j]
        for q in range(1, d):
            for j in range(d):
                S[q, j] = ca * u[j] + sa * basis[q - 1, j]
            _normalize(S[q], S[q])
        for q in range(d):
            if used >= budget:
                break
            f[q] = depth_at(XT, x, S[q], notion, buf, work, hist)
            used += 1
            if f[q] < best:
                best = f[q]
                for j in range(d):
                    best_u[j] = S[q, j]
        if used < d:
            evals += used
            break

        while used < budget:
            # stable insertion sort of vertex indices by value
            for q in range(d):
                order[q] = q
            for q in range(1, d):
                key = order[q]
                p = q - 1
                while p >= 0 and f[order[p]] > f[key]:
                    order[p + 1] = order[p]
                    p -= 1
                order[p + 1] = key
            ib = order[0]
            iw = order[d - 1]
            isw = order[d - 2]

            spread = 0.0
            for q in range(d):
                gap = 1.0 - _dot(S[q], S[ib])
                if gap > spread:
                    spread = gap
            if spread < tol:
                break

            for j in range(d):
                c[j] = 0.0
            for q in range(d):
                if q != iw:
                    for j in range(d):
                        c[j] += S[q, j]
            for j in range(d):
                c[j] /= d - 1

            for j in range(d):
                xr[j] = c[j] + alpha * (c[j] - S[iw, j])
            if not _normalize(xr, ur):
                break
            fr = depth_at(XT, x, ur, notion, buf, work, hist)
            used += 1
            if fr < best:
                best = fr
                for j in range(d):
                    best_u[j] = ur[j]

            if fr < f[ib]:
                accepted = False
                if used < budget:
                    for j in range(d):
                        xt[j] = c[j] + gamma * (xr[j] - c[j])
                    if _normalize(xt, ut):
                        fe = depth_at(XT, x, ut, notion, buf, work, hist)
                        used += 1
                        if fe < best:
                            best = fe
                            for j in range(d):
                                best_u[j] = ut[j]
                        if fe < fr:
                            for j in range(d):
                                S[iw, j] = ut[j]
                            f[iw] = fe
                            accepted = True
                if not accepted:
                    for j in range(d):
                        S[iw, j] = ur[j]
                    f[iw] = fr
            elif fr < f[isw]:
                for j in range(d):
                    S[iw, j] = ur[j]
                f[iw] = fr
            else:
                if used >= budget:
                    break
                outside = fr < f[iw]
                if outside:
                    for j in range(d):
                        xt[j] = c[j] + beta * (xr[j] - c[j])
                else:
                    for j in range(d):
                        xt[j] = c[j] + beta * (S[iw, j] - c[j])
                ok = _normalize(xt, ut)
                fc = np.inf
                if ok:
                    fc = depth_at(XT, x, ut, notion, buf, work, hist)
                    used += 1
                    if fc < best:
                        best = fc
                        for j in range(d):
                            best_u[j] = ut[j]
                if ok and ((outside and fc <= fr) or ((not outside) and fc < f[iw])):
                    for j in range(d):
                        S[iw, j] = ut[j]
                    f[iw] = fc
                else:
                    for q in range(d):
                        if q == ib:
                            continue
                        if used >= budget:
                            break
                        for j in range(d):
                            xt[j] = S[ib, j] + sigma * (S[q, j] - S[ib, j])
                        if not _normalize(xt, S[q]):
                            continue
                        f[q] = depth_at(XT, x, S[q], notion, buf, work, hist)
                        used += 1
                        if f[q] < best:
                            best = f[q]
                            for j in range(d):
                                best_u[j] = S[q, j]
        evals += used
    return best, best_u, evals
