"""Exact depth computation, d=2 specialisations and brute-force oracles.

The oracles here are deliberately simple (enumeration over candidate
directions or subsets) and are meant for tests and small problems.  For
projection-property depths in higher dimension see :mod:`depthad.optimize`.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import linprog, nnls

from . import _kernels, robust_stats
from .core import (
    BudgetExceeded,
    DepthNotion,
    DepthValue,
    DimensionMismatch,
    Exactness,
    LocationScatter,
    SingularScatter,
    as_data_matrix,
    as_point,
    check_dimension,
    moment_estimates,
)

# Largest number of subsets enumerated by the combinatorial depths.
MAX_SUBSETS = 20_000_000
# Largest number of candidate directions tried by the halfspace oracle.
MAX_ORACLE_DIRECTIONS = 10_000_000
BARYCENTRIC_TOL = 1e-12
# Sweep intervals shorter than this (radians) are treated as rounding noise.
ANGLE_TOL = 1e-12
ORACLE_PERTURBATION = 1e-7
MIN_MC_BUDGET = 1000

_CHUNK = 100_000


def _inputs(x, data):
    X = as_data_matrix(data)
    p = as_point(x)
    check_dimension(p, X)
    return p, X


def _require_dim(X, d, what):
    if X.shape[1] != d:
        raise DimensionMismatch(f"{what} needs d={d}, data has d={X.shape[1]}")


# --------------------------------------------------------------------------
# Mahalanobis


def mahalanobis_depth(x, ls: LocationScatter) -> DepthValue:
    """1 / (1 + (x - mu)' Sigma^{-1} (x - mu))."""
    p = as_point(x, ls.d)
    dist2 = float(ls.mahalanobis_sq(p)[0])
    return DepthValue(1.0 / (1.0 + dist2), DepthNotion.MAHALANOBIS, Exactness.EXACT)


def mahalanobis_depths(points, ls: LocationScatter) -> np.ndarray:
    P = as_data_matrix(points, name="points")
    if P.shape[1] != ls.d:
        raise DimensionMismatch(f"points have dimension {P.shape[1]}, model has {ls.d}")
    return 1.0 / (1.0 + ls.mahalanobis_sq(P))


# --------------------------------------------------------------------------
# Halfspace


def halfspace_depth_2d(x, data) -> DepthValue:
    """Exact bivariate halfspace depth by an angular sweep around ``x``.

    A closed halfplane with x on its boundary and inner normal u contains the
    points whose angle is within pi/2 of u.  Its complement is an open
    halfplane, so the depth is (n - max open-halfplane count) / n.  The open
    count is piecewise constant in the halfplane's angle and only changes
    where a data point enters or leaves, so evaluating it at the midpoints of
    consecutive breakpoints finds the maximum.
    """
    p, X = _inputs(x, data)
    _require_dim(X, 2, "halfspace_depth_2d")
    n = X.shape[0]
    v = X - p
    nonzero = np.any(v != 0.0, axis=1)
    m = int(np.count_nonzero(nonzero))
    if m == 0:
        return DepthValue(1.0, DepthNotion.HALFSPACE, Exactness.EXACT)
    theta = np.mod(np.arctan2(v[nonzero, 1], v[nonzero, 0]), 2 * math.pi)
    theta.sort()
    # The open halfplane starting at angle phi holds the angles in (phi, phi + pi).
    breaks = np.unique(np.mod(np.concatenate([theta, theta - math.pi]), 2 * math.pi))
    nxt = np.append(breaks[1:], breaks[0] + 2 * math.pi)
    keep = (nxt - breaks) > ANGLE_TOL
    if not np.any(keep):
        keep[:] = True
    phi = 0.5 * (breaks[keep] + nxt[keep])
    ext = np.concatenate([theta, theta + 2 * math.pi, theta + 4 * math.pi])
    inside = np.searchsorted(ext, phi + math.pi, side="left") - np.searchsorted(ext, phi, side="right")
    best_open = int(inside.max())
    return DepthValue((n - best_open) / n, DepthNotion.HALFSPACE, Exactness.EXACT)


def _halfspace_min_count(v, directions):
    best = v.shape[0]
    step = max(1, 4_000_000 // max(1, v.shape[0]))
    for start in range(0, directions.shape[0], step):
        W = directions[start:start + step]
        counts = np.count_nonzero(v @ W.T >= 0.0, axis=0)
        best = min(best, int(counts.min()))
    return best


def halfspace_depth_oracle(x, data) -> DepthValue:
    """Brute-force halfspace depth for d <= 3.

    Every closed halfspace through x can be rotated until its boundary
    contains d - 1 of the vectors x_i - x without losing its minimality.
    The normal u of such a boundary is perturbed by a tiny step into each of
    the adjacent cells of the hyperplane arrangement (all sign patterns) and
    the closed count is evaluated there, for u and -u.  Coordinate directions
    are added as a fallback for degenerate configurations.

    Raises:
        BudgetExceeded: when more than 1e7 directions would be needed.
    """
    p, X = _inputs(x, data)
    n, d = X.shape
    if d > 3:
        raise DimensionMismatch(f"halfspace_depth_oracle supports d <= 3, got d={d}")
    v = X - p
    norms = np.linalg.norm(v, axis=1)
    zero = norms == 0.0
    z = int(np.count_nonzero(zero))
    w = v[~zero]
    m = w.shape[0]
    if m == 0:
        return DepthValue(1.0, DepthNotion.HALFSPACE, Exactness.ORACLE)
    if d == 1:
        dirs = np.array([[1.0], [-1.0]])
        return DepthValue((z + _halfspace_min_count(w, dirs)) / n, DepthNotion.HALFSPACE, Exactness.ORACLE)
    k = d - 1
    n_subsets = math.comb(m, k)
    n_dirs = n_subsets * 2 * (2 ** k) + 2 * d
    if n_dirs > MAX_ORACLE_DIRECTIONS:
        raise BudgetExceeded(f"oracle would evaluate {n_dirs} directions (cap {MAX_ORACLE_DIRECTIONS})")
    signs = np.array(list(itertools.product((-1.0, 1.0), repeat=k)))
    unit = w / np.linalg.norm(w, axis=1, keepdims=True)
    candidates = [np.vstack([np.eye(d), -np.eye(d)])]
    for subset in itertools.combinations(range(m), k):
        V = unit[list(subset)]  # k x d
        # Null space of V gives the boundary normal.
        _, s, vt = np.linalg.svd(V, full_matrices=True)
        if s[-1] < 1e-12 * max(1.0, s[0]):
            continue
        u = vt[-1]
        step = np.linalg.pinv(V) @ signs.T  # d x 2^k, V @ step = signs
        perturbed = u[None, :] + ORACLE_PERTURBATION * step.T
        candidates.append(perturbed)
        candidates.append(-perturbed)
    dirs = np.vstack(candidates)
    count = _halfspace_min_count(w, dirs)
    return DepthValue((z + count) / n, DepthNotion.HALFSPACE, Exactness.ORACLE)


def halfspace_depth_1d(x, data) -> DepthValue:
    p, X = _inputs(x, data)
    _require_dim(X, 1, "halfspace_depth_1d")
    value = robust_stats.univariate_halfspace_depth(float(p[0]), X[:, 0])
    return DepthValue(value, DepthNotion.HALFSPACE, Exactness.EXACT)


def _depth_region_center(A, b):
    """Chebyshev centre of {x : A x <= b}, or None if the region is empty."""
    norms = np.linalg.norm(A, axis=1)
    res = linprog(c=[0.0, 0.0, -1.0], A_ub=np.column_stack([A, norms]), b_ub=b,
                  bounds=[(None, None), (None, None), (None, 1.0)], method="highs")
    if not res.success or res.x[2] < -1e-9:
        return None
    return np.asarray(res.x[:2])


def halfspace_deepest_point_2d(data) -> np.ndarray:
    """A point of maximal bivariate halfspace depth.

    The region of depth >= k/n is the intersection of the closed halfplanes
    holding at least n - k + 1 points, and only halfplanes bounded by lines
    through two data points are needed.  Levels are raised until that
    polygon is empty; the centre of the last nonempty one is returned.
    """
    X = as_data_matrix(data)
    _require_dim(X, 2, "halfspace_deepest_point_2d")
    n = X.shape[0]
    i, j = np.triu_indices(n, 1)
    diff = X[j] - X[i]
    keep = np.any(diff != 0, axis=1)
    i, diff = i[keep], diff[keep]
    normals = np.column_stack([-diff[:, 1], diff[:, 0]])
    offsets = np.einsum("kj,kj->k", normals, X[i])
    side = X @ normals.T - offsets
    tol = 1e-12 * np.maximum(1.0, np.abs(offsets))
    below = np.count_nonzero(side <= tol, axis=0)
    above = np.count_nonzero(side >= -tol, axis=0)
    A = np.vstack([normals, -normals])
    b = np.concatenate([offsets, -offsets])
    counts = np.concatenate([below, above])

    depth_of = [halfspace_depth_2d(x, X).value for x in X]
    best = X[int(np.argmax(depth_of))].copy()
    k = int(round(max(depth_of) * n)) + 1
    while k <= n:
        rows = counts >= n - k + 1
        center = _depth_region_center(A[rows], b[rows]) if rows.any() else X.mean(axis=0)
        if center is None or halfspace_depth_2d(center, X).value * n < k - 0.5:
            break
        best = center
        k += 1
    return best


# --------------------------------------------------------------------------
# Projection


def projection_depth_1d(x, data, asymmetric: bool = False) -> DepthValue:
    """Exact univariate projection depth, maximising outlyingness over u = +1, -1."""
    p, X = _inputs(x, data)
    _require_dim(X, 1, "projection_depth_1d")
    col = X[:, 0]
    xv = float(p[0])
    out = max(
        robust_stats.projected_outlyingness(xv, col, asymmetric),
        robust_stats.projected_outlyingness(-xv, -col, asymmetric),
    )
    notion = DepthNotion.PROJECTION_ASYMMETRIC if asymmetric else DepthNotion.PROJECTION
    return DepthValue(robust_stats.outlyingness_to_depth(out), notion, Exactness.EXACT)


def _projection_code(asymmetric: bool) -> int:
    return _kernels.PROJECTION_ASYMMETRIC if asymmetric else _kernels.PROJECTION


def _min_along(p, X, U, code) -> float:
    XT = np.ascontiguousarray(X.T)
    best = 1.0
    for start in range(0, U.shape[0], _CHUNK):
        vals = _kernels.depths_along(XT, p, np.ascontiguousarray(U[start:start + _CHUNK]), code)
        best = min(best, float(vals.min()))
    return best


def projection_depth_grid(x, data, asymmetric: bool = False, n_grid: int = 3600) -> DepthValue:
    """Bivariate projection depth over ``n_grid`` equally spaced directions.

    A dense-grid oracle; slightly above the exact value in general.
    """
    p, X = _inputs(x, data)
    _require_dim(X, 2, "projection_depth_grid")
    U = grid_directions_2d(n_grid)
    notion = DepthNotion.PROJECTION_ASYMMETRIC if asymmetric else DepthNotion.PROJECTION
    return DepthValue(_min_along(p, X, U, _projection_code(asymmetric)), notion, Exactness.ORACLE)


def grid_directions_2d(n_grid: int) -> np.ndarray:
    angles = 2 * math.pi * np.arange(n_grid) / n_grid
    return np.column_stack([np.cos(angles), np.sin(angles)])


def _normals(vectors: np.ndarray) -> np.ndarray:
    vectors = vectors[np.any(vectors != 0.0, axis=1)]
    u = np.column_stack([-vectors[:, 1], vectors[:, 0]])
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return np.vstack([u, -u])


def projection_critical_directions_2d(x, data) -> np.ndarray:
    """Directions where the ordering behind med, MAD or x'u - med can change.

    Between two consecutive such angles the projected outlyingness is a ratio
    of two linear functions of u with a fixed sign pattern, which is monotone
    in the angle; the maximum is therefore attained at one of them.
    """
    p, X = _inputs(x, data)
    _require_dim(X, 2, "projection_critical_directions_2d")
    Y = np.vstack([X, p[None, :]])
    n = Y.shape[0]
    vecs = []
    i, j = np.triu_indices(n, 1)
    vecs.append(Y[i] - Y[j])
    s = Y[i] + Y[j]
    for m in range(n):
        vecs.append(s - 2.0 * Y[m])
    if X.shape[0] % 2 == 0:
        # Even n: the median is the midpoint of two order statistics.
        for a in range(s.shape[0]):
            vecs.append(s[a + 1:] - s[a])
    return _normals(np.vstack(vecs))


def projection_depth_2d_exact(x, data, asymmetric: bool = False) -> DepthValue:
    """Exact bivariate projection depth via the critical directions.

    Cost grows like n^4 for even n; intended for n up to a few dozen.
    """
    p, X = _inputs(x, data)
    U = projection_critical_directions_2d(p, X)
    if U.shape[0] > MAX_SUBSETS:
        raise BudgetExceeded(f"{U.shape[0]} critical directions exceed cap {MAX_SUBSETS}")
    notion = DepthNotion.PROJECTION_ASYMMETRIC if asymmetric else DepthNotion.PROJECTION
    value = _min_along(p, X, U, _projection_code(asymmetric))
    if asymmetric:
        value = min(value, _asymmetric_side_limits(p, X, U))
    return DepthValue(value, notion, Exactness.EXACT)


def _asymmetric_side_limits(p, X, U) -> float:
    """Smallest one-sided limit of the asymmetric depth at the critical angles.

    MAD_+ jumps when a point crosses the median, so the infimum over a cell
    may be a limit at its end.  The positive set is read just beside each
    angle and the deviations at the angle itself.
    """
    theta = np.sort(np.unique(np.arctan2(U[:, 1], U[:, 0])))
    gaps = np.diff(np.concatenate([theta, theta[:1] + 2 * np.pi]))
    before = np.roll(gaps, 1)
    best = 1.0
    for side, room in ((1.0, gaps), (-1.0, before)):
        delta = side * np.minimum(1e-7, 0.5 * room)
        for start in range(0, theta.size, _CHUNK):
            t = theta[start:start + _CHUNK]
            u = np.column_stack([np.cos(t), np.sin(t)])
            v = np.column_stack([np.cos(t + delta[start:start + _CHUNK]), np.sin(t + delta[start:start + _CHUNK])])
            Pv = X @ v.T
            positive = Pv > np.median(Pv, axis=0)
            Pu = X @ u.T
            med = np.median(Pu, axis=0)
            dev = np.where(positive, Pu - med, np.nan)
            has = positive.any(axis=0)
            scale = np.full(t.size, 0.0)
            scale[has] = np.nanmedian(dev[:, has], axis=0)
            num = np.maximum(p @ u.T - med, 0.0)
            ok = scale > 0
            depth = np.where(num == 0.0, 1.0, 0.0)
            depth[ok] = 1.0 / (1.0 + num[ok] / scale[ok])
            best = min(best, float(depth.min()))
    return best


def projection_grid_deepest_point(data, n_grid: int = 3600) -> np.ndarray:
    """Maximiser of the symmetric grid projection depth, by linear programming.

    Minimises t subject to |x'u_k - med_k| <= t MAD_k for every grid
    direction with positive MAD.
    """
    X = as_data_matrix(data)
    _require_dim(X, 2, "projection_grid_deepest_point")
    U = grid_directions_2d(n_grid)
    proj = X @ U.T
    med = np.median(proj, axis=0)
    mad = np.median(np.abs(proj - med), axis=0)
    ok = mad > 0
    U, med, mad = U[ok], med[ok], mad[ok]
    A = np.vstack([np.column_stack([U, -mad]), np.column_stack([-U, -mad])])
    b = np.concatenate([med, -med])
    res = linprog(c=[0.0, 0.0, 1.0], A_ub=A, b_ub=b, bounds=[(None, None)] * 2 + [(0, None)],
                  method="highs")
    if not res.success:
        raise RuntimeError(f"deepest-point LP failed: {res.message}")
    return np.asarray(res.x[:2])


# --------------------------------------------------------------------------
# Simplicial and simplicial volume


def _subset_count(n, k):
    count = math.comb(n, k)
    if count > MAX_SUBSETS:
        raise BudgetExceeded(f"C({n},{k}) = {count} subsets exceed cap {MAX_SUBSETS}")
    return count


def _index_chunks(n, k, size=_CHUNK):
    it = itertools.combinations(range(n), k)
    while True:
        block = list(itertools.islice(it, size))
        if not block:
            return
        yield np.array(block, dtype=np.int64)


def _in_degenerate_hull(vertices, x, scale) -> bool:
    # Nonnegative weights summing to one, with the sum enforced by a heavy row.
    k = vertices.shape[0]
    weight = 1e6 * max(scale, 1.0)
    A = np.vstack([vertices.T, weight * np.ones((1, k))])
    b = np.append(x, weight)
    _, resid = nnls(A, b)
    return resid <= BARYCENTRIC_TOL * max(scale, 1.0) * 1e3


def _contains(simplices, x) -> np.ndarray:
    """Closed containment of x in each simplex, shape (m, d+1, d)."""
    base = simplices[:, 0, :]
    edges = simplices[:, 1:, :] - base[:, None, :]  # m x d x d, rows are edges
    A = np.transpose(edges, (0, 2, 1))
    det = np.linalg.det(A)
    scale = np.prod(np.linalg.norm(edges, axis=2), axis=1)
    regular = np.abs(det) > 1e-12 * np.maximum(scale, np.finfo(float).tiny)
    out = np.zeros(simplices.shape[0], dtype=bool)
    if np.any(regular):
        rhs = (x - base[regular])[:, :, None]
        lam = np.linalg.solve(A[regular], rhs)[:, :, 0]
        lam0 = 1.0 - lam.sum(axis=1)
        out[regular] = (lam.min(axis=1) >= -BARYCENTRIC_TOL) & (lam0 >= -BARYCENTRIC_TOL)
    for idx in np.flatnonzero(~regular):
        verts = simplices[idx]
        span = float(np.max(np.abs(verts - x))) if verts.size else 1.0
        out[idx] = _in_degenerate_hull(verts, x, span)
    return out


def simplicial_depth(x, data) -> DepthValue:
    """Fraction of closed (d+1)-point simplices of the data containing ``x``.

    Raises:
        BudgetExceeded: when C(n, d+1) exceeds 2e7.
    """
    p, X = _inputs(x, data)
    n, d = X.shape
    if n < d + 1:
        raise ValueError(f"simplicial depth needs n >= d+1={d + 1}, got n={n}")
    total = _subset_count(n, d + 1)
    hits = 0
    for idx in _index_chunks(n, d + 1):
        hits += int(np.count_nonzero(_contains(X[idx], p)))
    return DepthValue(hits / total, DepthNotion.SIMPLICIAL, Exactness.EXACT)


def _volumes(simplices_minus_x) -> np.ndarray:
    d = simplices_minus_x.shape[1]
    return np.abs(np.linalg.det(simplices_minus_x)) / math.factorial(d)


def _volume_scale(X, affine_invariant, ls):
    if not affine_invariant:
        return 1.0
    if ls is None:
        ls = moment_estimates(X)
    if ls.d != X.shape[1]:
        raise DimensionMismatch(f"location/scatter has dimension {ls.d}, data has {X.shape[1]}")
    if not ls.sigma_det > 0.0:
        raise SingularScatter("scatter determinant must be positive")
    return math.sqrt(ls.sigma_det)


def _volume_notion(affine_invariant):
    return DepthNotion.SIMPLICIAL_VOLUME_AFFINE_INVARIANT if affine_invariant else DepthNotion.SIMPLICIAL_VOLUME


def simplicial_volume_depth(x, data, affine_invariant: bool = False,
                            ls: LocationScatter | None = None) -> DepthValue:
    """1 / (1 + mean volume of the simplices spanned by x and d data points).

    The affine-invariant form divides each volume by sqrt(det Sigma); when
    ``ls`` is omitted the moment estimates of ``data`` are used.
    """
    p, X = _inputs(x, data)
    n, d = X.shape
    if n < d:
        raise ValueError(f"simplicial volume depth needs n >= d={d}, got n={n}")
    scale = _volume_scale(X, affine_invariant, ls)
    total = _subset_count(n, d)
    V = X - p
    acc = 0.0
    for idx in _index_chunks(n, d):
        acc += float(_volumes(V[idx]).sum())
    mean = acc / total / scale
    return DepthValue(1.0 / (1.0 + mean), _volume_notion(affine_invariant), Exactness.EXACT)


def random_subsets(n: int, k: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` uniformly random k-subsets of range(n) (rows sorted)."""
    if k > n:
        raise ValueError(f"cannot draw {k} distinct indices from {n}")
    idx = rng.integers(0, n, size=(count, k))
    idx.sort(axis=1)
    while True:
        bad = np.flatnonzero(np.any(idx[:, 1:] == idx[:, :-1], axis=1)) if k > 1 else np.empty(0, int)
        if bad.size == 0:
            return idx
        redraw = rng.integers(0, n, size=(bad.size, k))
        redraw.sort(axis=1)
        idx[bad] = redraw


def monte_carlo_simplex_depth(x, data, notion, budget: int, seed: int,
                              ls: LocationScatter | None = None) -> DepthValue:
    """Unbiased subsample estimate of simplicial or simplicial volume depth.

    Draws ``budget`` uniform index subsets and averages the per-simplex
    statistic (containment indicator, or volume).
    """
    notion = DepthNotion.parse(notion)
    if notion not in (DepthNotion.SIMPLICIAL, DepthNotion.SIMPLICIAL_VOLUME,
                      DepthNotion.SIMPLICIAL_VOLUME_AFFINE_INVARIANT):
        raise ValueError(f"Monte Carlo estimate is not defined for {notion.value} depth")
    if budget < MIN_MC_BUDGET:
        raise ValueError(f"budget must be at least {MIN_MC_BUDGET}, got {budget}")
    p, X = _inputs(x, data)
    n, d = X.shape
    rng = np.random.default_rng(seed)
    if notion is DepthNotion.SIMPLICIAL:
        idx = random_subsets(n, d + 1, budget, rng)
        hits = 0
        for start in range(0, budget, _CHUNK):
            hits += int(np.count_nonzero(_contains(X[idx[start:start + _CHUNK]], p)))
        return DepthValue(hits / budget, notion, Exactness.APPROXIMATE)
    affine = notion is DepthNotion.SIMPLICIAL_VOLUME_AFFINE_INVARIANT
    scale = _volume_scale(X, affine, ls)
    idx = random_subsets(n, d, budget, rng)
    V = X - p
    acc = 0.0
    for start in range(0, budget, _CHUNK):
        acc += float(_volumes(V[idx[start:start + _CHUNK]]).sum())
    mean = acc / budget / scale
    return DepthValue(1.0 / (1.0 + mean), notion, Exactness.APPROXIMATE)


# --------------------------------------------------------------------------
# Dispatch


def exact_depth(x, data, notion, ls: LocationScatter | None = None) -> DepthValue:
    """Exact depth where an exact algorithm is available.

    Mahalanobis uses ``ls`` or the moment estimates of ``data``; halfspace is
    exact for d <= 2; projection for d = 1; the simplicial notions within the
    subset budget.

    Raises:
        ValueError: if the notion has no exact algorithm at this dimension.
    """
    notion = DepthNotion.parse(notion)
    p, X = _inputs(x, data)
    d = X.shape[1]
    if notion is DepthNotion.MAHALANOBIS:
        return mahalanobis_depth(p, ls if ls is not None else moment_estimates(X))
    if notion is DepthNotion.HALFSPACE and d <= 2:
        return halfspace_depth_1d(p, X) if d == 1 else halfspace_depth_2d(p, X)
    if notion in (DepthNotion.PROJECTION, DepthNotion.PROJECTION_ASYMMETRIC) and d == 1:
        return projection_depth_1d(p, X, notion is DepthNotion.PROJECTION_ASYMMETRIC)
    if notion is DepthNotion.SIMPLICIAL:
        return simplicial_depth(p, X)
    if notion is DepthNotion.SIMPLICIAL_VOLUME:
        return simplicial_volume_depth(p, X)
    if notion is DepthNotion.SIMPLICIAL_VOLUME_AFFINE_INVARIANT:
        return simplicial_volume_depth(p, X, affine_invariant=True, ls=ls)
    raise ValueError(f"no exact algorithm for {notion.value} depth in dimension {d}")


def has_exact(notion, d: int) -> bool:
    notion = DepthNotion.parse(notion)
    if notion is DepthNotion.HALFSPACE:
        return d <= 2
    if notion in (DepthNotion.PROJECTION, DepthNotion.PROJECTION_ASYMMETRIC):
        return d == 1
    return True
