import numpy as np
import pytest

from depthad import bench, detect, explain
from depthad.core import AmbiguousDirection
from depthad.optimize import SearchBudget
from depthad.robust_stats import median


def _model(X, k=200, seed=1):
    return detect.fit(X, "projection", SearchBudget(k, seed=seed))


def test_projection_sequence_shape():
    X = np.random.default_rng(0).standard_normal((30, 2))
    seq = explain.projection_sequence(X, [0.6, 0.8], 4)
    assert seq.projections[0] == 0.0
    assert np.all(np.diff(seq.projections) >= 0)
    assert 1 <= seq.own_position <= 30


def test_own_position_rightmost_for_extreme_point():
    X = np.random.default_rng(1).standard_normal((40, 2))
    X[7] = [10.0, 0.0]
    assert explain.projection_sequence(X, [1.0, 0.0], 7).own_position == 40
    e = explain.explain_point(_model(X), X, 7)
    assert e.sequence.own_position == 40
    np.testing.assert_array_equal(e.contribution, e.direction)


def test_deepest_point_sits_mid_sequence():
    X = np.random.default_rng(2).standard_normal((201, 2))
    m = _model(X)
    values, _ = detect.depth_values(m, X)
    i = int(np.argmax(values))
    e = explain.explain_point(m, X, i)
    assert abs(e.sequence.own_position - 201 / 2) <= 0.15 * 201


def test_explain_point_canonical_sign_and_consistency():
    X = np.random.default_rng(3).standard_normal((50, 3))
    m = _model(X)
    values, dirs = detect.depth_values(m, X)
    for i in (0, 10, 49):
        e = explain.explain_point(m, X, i)
        assert e.depth == values[i]
        np.testing.assert_array_equal(e.direction, dirs[i])
        assert X[i] @ e.direction - median(X @ e.direction) >= 0


def test_explain_ambiguous_and_non_projection():
    X = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0], [0.0, 0.0]])
    with pytest.raises(AmbiguousDirection):
        explain.explain_point(_model(X, k=30), X, 4)
    with pytest.raises(ValueError):
        explain.explain_point(detect.fit(X * 1.0 + np.arange(10).reshape(5, 2), "mahalanobis"), X, 0)


def test_direction_similarity_properties():
    X = np.random.default_rng(4).standard_normal((60, 2))
    X = np.vstack([X, X[:5]])
    sim = explain.direction_similarity(_model(X), X)
    M = sim.matrix
    np.testing.assert_allclose(np.diag(M), 1.0, atol=1e-12)
    np.testing.assert_array_equal(M, M.T)
    assert np.all(np.abs(M) <= 1.0)
    assert np.all(np.diff(sim.depths[sim.order]) >= 0)


def test_depth_order_breaks_ties_by_index():
    np.testing.assert_array_equal(explain.depth_order([0.3, 0.1, 0.3, 0.1]), [1, 3, 0, 2])


def test_anomaly_groups_on_clustered_s4():
    s = bench.generate(bench.Scenario.default("clustered_s4", seed=0))
    m = _model(s.data, k=500)
    sim = explain.direction_similarity(m, s.data)
    groups = explain.anomaly_groups(sim, s.labels)
    assert sorted(i for g in groups for i in g) == sorted(np.flatnonzero(s.labels).tolist())
    assert max(len(g) for g in groups) >= 8
    assert explain.mean_pairwise_similarity(sim.directions[s.labels]) >= 0.95


def test_anomaly_groups_components():
    dirs = np.array([[1.0, 0.0], [0.99, 0.141], [0.0, 1.0], [-1.0, 0.0]])
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    sim = explain.DirectionSimilarity(order=np.arange(4), matrix=dirs @ dirs.T,
                                      depths=np.arange(4) / 10, directions=dirs)
    assert explain.anomaly_groups(sim, [True, True, True, False]) == [[0, 1], [2]]
    assert explain.anomaly_groups(sim, [False] * 4) == []
    assert explain.mean_pairwise_similarity(dirs[:1]) == 1.0
