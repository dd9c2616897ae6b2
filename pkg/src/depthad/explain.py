"""Explanations from projection-depth optimal directions.

For a point x the optimal direction u* is the one along which x looks most
outlying.  Its coordinates say which variables drive the abnormality, the
sorted projections on u* show where x sits relative to the rest, and the
matrix of scalar products between optimal directions groups anomalies that
deviate the same way.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from . import detect, optimize
from .core import AmbiguousDirection, DepthNotion, as_data_matrix

GROUP_THRESHOLD = 0.95


@dataclass(frozen=True, eq=False)
class ProjectionSequence:
    """Sorted projections on u*, shifted so the left-most value is 0.

    ``own_position`` is the 1-based position of the explained point.
    """

    point_index: int
    projections: np.ndarray
    own_position: int


@dataclass(frozen=True, eq=False)
class PointExplanation:
    point_index: int
    depth: float
    direction: np.ndarray
    sequence: ProjectionSequence

    @property
    def contribution(self) -> np.ndarray:
        """Signed per-variable responsibility: the coordinates of u*."""
        return self.direction


@dataclass(frozen=True, eq=False)
class DirectionSimilarity:
    """Scalar products of optimal directions, rows ordered by increasing depth."""

    order: np.ndarray
    matrix: np.ndarray
    depths: np.ndarray
    directions: np.ndarray


def _require_directions(model: detect.DepthModel) -> None:
    if model.notion not in (DepthNotion.PROJECTION, DepthNotion.PROJECTION_ASYMMETRIC):
        raise ValueError(f"{model.notion.value} depth does not provide optimal directions")


def projection_sequence(data, direction, i: int) -> ProjectionSequence:
    X = as_data_matrix(data)
    proj = X @ np.asarray(direction, dtype=np.float64)
    order = np.argsort(proj, kind="stable")
    values = proj[order]
    own = int(np.flatnonzero(order == i)[0]) + 1
    return ProjectionSequence(point_index=int(i), projections=values - values[0], own_position=own)


def explain_point(model: detect.DepthModel, data, i: int) -> PointExplanation:
    """Optimal direction, projection sequence and contribution for row ``i``.

    Row i is scored with stream index i, exactly as in a batch over ``data``.

    Raises:
        AmbiguousDirection: if no direction shows any outlyingness for the point.
    """
    _require_directions(model)
    X = as_data_matrix(data)
    if not 0 <= i < X.shape[0]:
        raise IndexError(f"point index {i} out of range for {X.shape[0]} rows")
    result = optimize.approx_depths(X[i:i + 1], model.sample, model.notion, model.budget,
                                    first_index=i)[0]
    if result.ambiguous:
        raise AmbiguousDirection(f"point {i} has zero outlyingness in every evaluated direction")
    u = optimize.optimal_direction(result)
    return PointExplanation(int(i), result.value.value, u, projection_sequence(X, u, i))


def depth_order(depths) -> np.ndarray:
    """Indices by increasing depth, ties broken by index."""
    arr = np.asarray(depths, dtype=np.float64)
    return np.lexsort((np.arange(arr.size), arr))


def direction_similarity(model: detect.DepthModel, data, *, workers: int = 1) -> DirectionSimilarity:
    """Matrix of u*_i' u*_j over all rows of ``data``, ordered by depth."""
    _require_directions(model)
    X = as_data_matrix(data)
    values, dirs = detect.depth_values(model, X, workers=workers)
    order = depth_order(values)
    U = dirs[order]
    M = U @ U.T
    M = 0.5 * (M + M.T)
    np.clip(M, -1.0, 1.0, out=M)
    return DirectionSimilarity(order=order, matrix=M, depths=values, directions=dirs)


def anomaly_groups(similarity: DirectionSimilarity, flagged, threshold: float = GROUP_THRESHOLD) -> list[list[int]]:
    """Connected components of flagged points linked by similarity >= threshold.

    Groups hold original row indices in ascending order and are listed by
    the depth rank of their deepest-ranked (most outlying) member.
    """
    flagged = np.asarray(flagged, dtype=bool)
    rank_of = np.empty(similarity.order.size, dtype=np.int64)
    rank_of[similarity.order] = np.arange(similarity.order.size)
    members = np.flatnonzero(flagged)
    if members.size == 0:
        return []
    ranks = rank_of[members]
    sub = similarity.matrix[np.ix_(ranks, ranks)] >= threshold
    _, comp = connected_components(csr_matrix(sub), directed=False)
    groups: dict[int, list[int]] = {}
    for idx, c in zip(members, comp):
        groups.setdefault(int(c), []).append(int(idx))
    ordered = sorted(groups.values(), key=lambda g: min(rank_of[g]))
    return [sorted(g) for g in ordered]


def mean_pairwise_similarity(directions) -> float:
    """Mean of u_i' u_j over distinct pairs."""
    U = np.asarray(directions, dtype=np.float64)
    k = U.shape[0]
    if k < 2:
        return 1.0
    M = U @ U.T
    return float((M.sum() - np.trace(M)) / (k * (k - 1)))
