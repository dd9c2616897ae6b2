"""Approximate projection-property depths by searching directions on the sphere.

Halfspace, projection and asymmetric projection depth are all the minimum of
a univariate depth over directions u.  Evaluating only finitely many
directions therefore gives an upper bound on the depth; the strategies here
differ in how the directions are chosen:

* ``RS``  - independent uniform directions;
* ``RRS`` - rounds of uniform directions followed by rounds in shrinking
  spherical caps around the best direction so far;
* ``NelderMead`` - Nelder-Mead simplex steps computed in the ambient space and
  projected back onto the sphere, with restarts.

Each query point gets its own random stream derived from the budget seed and
the point's index, so results do not depend on how a batch is split up.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np
from joblib import Parallel, delayed

from . import _kernels
from .core import (
    DepthNotion,
    DepthValue,
    Exactness,
    as_data_matrix,
    as_point,
    as_unit_direction,
    check_dimension,
)

# Classic Nelder-Mead coefficients.
NM_REFLECTION = 1.0
NM_EXPANSION = 2.0
NM_CONTRACTION = 0.5
NM_SHRINK = 0.5
NM_INIT_ANGLE = 0.1
NM_TOLERANCE = 1e-12

# Points per parallel job; fixed so output never depends on the worker count.
CHUNK_SIZE = 64

_NOTION_CODES = {
    DepthNotion.HALFSPACE: _kernels.HALFSPACE,
    DepthNotion.PROJECTION: _kernels.PROJECTION,
    DepthNotion.PROJECTION_ASYMMETRIC: _kernels.PROJECTION_ASYMMETRIC,
}


class Strategy(str, enum.Enum):
    RS = "RS"
    RRS = "RRS"
    NELDER_MEAD = "NelderMead"

    @classmethod
    def parse(cls, value: "str | Strategy") -> "Strategy":
        if isinstance(value, cls):
            return value
        lowered = str(value).lower().replace("-", "").replace("_", "")
        for member in cls:
            if member.value.lower() == lowered or member.name.lower().replace("_", "") == lowered:
                return member
        raise ValueError(f"unknown strategy {value!r}; expected RS, RRS or NelderMead")


@dataclass(frozen=True)
class SearchBudget:
    """How many directions to evaluate, and how to pick them.

    ``restarts`` applies to Nelder-Mead only; ``None`` means
    ``max(1, n_directions // (20 * d))``.  ``rounds``, ``cap_angle`` and
    ``cap_shrink`` configure RRS.
    """

    n_directions: int = 500
    strategy: Strategy = Strategy.NELDER_MEAD
    seed: int = 0
    restarts: int | None = None
    rounds: int = 10
    cap_angle: float = math.pi / 2
    cap_shrink: float = 0.5

    def __post_init__(self) -> None:
        object.__setattr__(self, "strategy", Strategy.parse(self.strategy))
        if self.n_directions < 1:
            raise ValueError("n_directions must be at least 1")
        if self.restarts is not None and self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        if self.rounds < 1:
            raise ValueError("rounds must be at least 1")
        if not 0.0 < self.cap_angle <= math.pi:
            raise ValueError("cap_angle must lie in (0, pi]")
        if not 0.0 < self.cap_shrink <= 1.0:
            raise ValueError("cap_shrink must lie in (0, 1]")

    def restarts_for(self, d: int) -> int:
        if self.restarts is not None:
            return self.restarts
        return max(1, self.n_directions // (20 * d))

    def check(self, d: int) -> None:
        if self.strategy is Strategy.NELDER_MEAD:
            need = (d + 1) * self.restarts_for(d)
            if self.n_directions < need:
                raise ValueError(
                    f"Nelder-Mead in dimension {d} with {self.restarts_for(d)} restart(s) "
                    f"needs at least {need} directions, got {self.n_directions}"
                )

    def with_seed(self, seed: int) -> "SearchBudget":
        return replace(self, seed=int(seed))


@dataclass(frozen=True, eq=False)
class ApproxDepthResult:
    """Best (lowest) univariate depth found and where it was found.

    ``side`` is x'u - med(X'u) at ``best_direction``; its sign fixes the
    canonical orientation used by :func:`optimal_direction`.
    """

    value: DepthValue
    best_direction: np.ndarray
    evaluations_used: int
    side: float = 0.0

    @property
    def ambiguous(self) -> bool:
        """No evaluated direction showed any outlyingness (depth 1)."""
        return self.value.notion.has_directions and self.value.value >= 1.0


def point_rng(seed: int, index: int) -> np.random.Generator:
    """Random stream for query ``index`` under budget ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index),)))


def uniform_sphere_direction(d: int, rng: np.random.Generator) -> np.ndarray:
    """A direction uniformly distributed on the unit sphere in R^d."""
    if d < 1:
        raise ValueError("dimension must be at least 1")
    while True:
        g = rng.standard_normal(d)
        norm = float(np.linalg.norm(g))
        if norm > 0.0:
            return g / norm


def _notion_code(notion) -> int:
    notion = DepthNotion.parse(notion)
    try:
        return _NOTION_CODES[notion]
    except KeyError:
        raise ValueError(f"{notion.value} depth has no direction-search approximation") from None


def _prepare(x, data):
    X = as_data_matrix(data)
    p = as_point(x)
    check_dimension(p, X)
    return p, X, np.ascontiguousarray(X.T)


def _search(p, XT, code, budget: SearchBudget, index: int):
    d = XT.shape[0]
    rng = point_rng(budget.seed, index)
    k = budget.n_directions
    if budget.strategy is Strategy.RS:
        G = rng.standard_normal((k, d))
        value, best_k, used = _kernels.random_search(XT, p, code, G)
        u = G[best_k] / np.linalg.norm(G[best_k])
    elif budget.strategy is Strategy.RRS:
        G = rng.standard_normal((k, d))
        V = rng.random(k)
        value, u, used = _kernels.refined_random_search(
            XT, p, code, G, V, budget.rounds, budget.cap_angle, budget.cap_shrink
        )
    else:
        budget.check(d)
        restarts = budget.restarts_for(d)
        starts = rng.standard_normal((restarts, d))
        budgets = np.full(restarts, k // restarts, dtype=np.int64)
        budgets[: k % restarts] += 1
        value, u, used = _kernels.nelder_mead_sphere(
            XT, p, code, starts, budgets, NM_REFLECTION, NM_EXPANSION,
            NM_CONTRACTION, NM_SHRINK, NM_INIT_ANGLE, NM_TOLERANCE,
        )
    return float(value), np.array(u, dtype=np.float64), int(used)


def _side(p, XT, u) -> float:
    n = XT.shape[1]
    buf = np.empty(n)
    work = np.empty(n)
    hist = np.zeros(256, np.int64)
    return float(_kernels.side_at(XT, p, u, buf, work, hist))


def _result(p, XT, notion: DepthNotion, budget: SearchBudget, index: int) -> ApproxDepthResult:
    value, u, used = _search(p, XT, _notion_code(notion), budget, index)
    return ApproxDepthResult(
        value=DepthValue(value, notion, Exactness.APPROXIMATE),
        best_direction=u,
        evaluations_used=used,
        side=_side(p, XT, u),
    )


def approx_depth(x, data, notion, budget: SearchBudget, index: int = 0) -> ApproxDepthResult:
    """Approximate depth of ``x`` with the strategy named in ``budget``."""
    notion = DepthNotion.parse(notion)
    _notion_code(notion)
    p, _, XT = _prepare(x, data)
    return _result(p, XT, notion, budget, index)


def _with_strategy(budget: SearchBudget, strategy: Strategy) -> SearchBudget:
    if budget.strategy is not strategy:
        raise ValueError(f"budget strategy is {budget.strategy.value}, expected {strategy.value}")
    return budget


def approx_depth_rs(x, data, notion, budget: SearchBudget, index: int = 0) -> ApproxDepthResult:
    """Minimum univariate depth over ``n_directions`` uniform directions."""
    return approx_depth(x, data, notion, _with_strategy(budget, Strategy.RS), index)


def approx_depth_rrs(x, data, notion, budget: SearchBudget, index: int = 0) -> ApproxDepthResult:
    """Refined random search: uniform first round, then shrinking caps.

    With ``rounds == 1`` this reproduces :func:`approx_depth_rs` exactly.
    """
    return approx_depth(x, data, notion, _with_strategy(budget, Strategy.RRS), index)


def approx_depth_neldermead(x, data, notion, budget: SearchBudget, index: int = 0) -> ApproxDepthResult:
    """Spherical Nelder-Mead with restarts; at most ``n_directions`` evaluations."""
    return approx_depth(x, data, notion, _with_strategy(budget, Strategy.NELDER_MEAD), index)


def _chunk(points, X, notion, budget, start):
    XT = np.ascontiguousarray(X.T)
    return [_result(points[i], XT, notion, budget, start + i) for i in range(points.shape[0])]


def approx_depths(points, data, notion, budget: SearchBudget, *, workers: int = 1,
                  first_index: int = 0) -> list[ApproxDepthResult]:
    """Approximate depths of every row of ``points``.

    Row i uses the random stream of index ``first_index + i``.  Rows are
    processed in fixed chunks, so ``workers`` only changes the wall time.
    """
    notion = DepthNotion.parse(notion)
    _notion_code(notion)
    X = as_data_matrix(data)
    P = np.asarray(points, dtype=np.float64)
    if P.ndim == 1:
        P = P.reshape(-1, X.shape[1]) if P.size else P.reshape(0, X.shape[1])
    if P.shape[0] == 0:
        return []
    if P.shape[1] != X.shape[1]:
        check_dimension(P[0], X)
    if budget.strategy is Strategy.NELDER_MEAD:
        budget.check(X.shape[1])
    starts = range(0, P.shape[0], CHUNK_SIZE)
    if workers <= 1 or P.shape[0] <= CHUNK_SIZE:
        parts = [_chunk(P[s:s + CHUNK_SIZE], X, notion, budget, first_index + s) for s in starts]
    else:
        parts = Parallel(n_jobs=workers)(
            delayed(_chunk)(P[s:s + CHUNK_SIZE], X, notion, budget, first_index + s) for s in starts
        )
    return [r for part in parts for r in part]


def univariate_depth(x, data, direction, notion) -> float:
    """Univariate depth of x'u among X'u, i.e. the search objective at ``u``."""
    p, X, XT = _prepare(x, data)
    u = as_unit_direction(direction, X.shape[1])
    n = X.shape[0]
    return float(_kernels.depth_at(XT, p, u, _notion_code(notion), np.empty(n), np.empty(n),
                                   np.zeros(256, np.int64)))


def optimal_direction(result: ApproxDepthResult) -> np.ndarray:
    """Best direction oriented so that x'u - med(X'u) >= 0.

    For a point with no outlyingness in any evaluated direction every
    direction is optimal; check ``result.ambiguous``.
    """
    u = result.best_direction
    return -u if result.side < 0.0 else u.copy()
