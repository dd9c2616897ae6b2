import numpy as np
import pytest

from depthad import bench
from depthad.bench import MethodConfig, Scenario, generate, p_metric
from depthad.core import BadScenario, NoAnomalies
from depthad.optimize import SearchBudget, Strategy


@pytest.mark.parametrize("tag", [t.value for t in bench.ScenarioTag])
def test_generate_counts_and_determinism(tag):
    s = Scenario.default(tag, seed=3)
    a, b = generate(s), generate(s)
    assert a.data.shape == (s.n, s.d)
    np.testing.assert_array_equal(a.data, b.data)
    np.testing.assert_array_equal(a.labels, b.labels)
    n_norm, n_anom = bench.contamination_counts(s.n, s.epsilon)
    assert a.n_anomalies == n_anom
    assert not np.array_equal(generate(s.with_seed(4)).data, a.data)


def test_contamination_counts():
    assert bench.contamination_counts(1000, 0.05) == (950, 50)
    assert bench.contamination_counts(100, 0.1) == (90, 10)
    assert bench.contamination_counts(7, 0.3) == (4, 3)


def test_clustered_s4_parameters():
    s = Scenario.default("clustered_s4")
    assert (s.n, s.d, s.epsilon) == (100, 2, 0.1)
    # the stated anomaly mean is the normal mean moved 2.5 units along the
    # stated second principal vector (0.872, -0.489)
    np.testing.assert_allclose(bench.S4_MEAN + 2.5 * np.array([0.872, -0.489]), [3.181, -0.222], atol=1e-3)
    big = generate(Scenario.default("clustered_s4", seed=1, n=20000))
    anomalies = big.data[big.labels]
    np.testing.assert_allclose(anomalies.mean(axis=0), [3.181, -0.222], atol=0.02)
    np.testing.assert_allclose(np.cov(anomalies.T), bench.S4_COV / 36, atol=0.005)
    np.testing.assert_allclose(big.data[~big.labels].mean(axis=0), [1.0, 1.0], atol=0.03)


def test_s4_second_principal_vector_matches_stated_direction():
    u = bench.s4_second_principal_vector()
    assert abs(u @ np.array([0.872, -0.489])) / np.linalg.norm([0.872, -0.489]) > 0.999


@pytest.mark.parametrize("eps", [0.05, 0.25, 0.45])
def test_robust_s51_norm_condition(eps):
    s = generate(Scenario.default("robust_s51", seed=2, epsilon=eps))
    norms = np.linalg.norm(s.data, axis=1)
    assert norms[s.labels].min() > 1.5 * norms[~s.labels].max()


def test_extrap_test_split():
    s = Scenario.default("extrap_s52", split="test", seed=5)
    assert (s.n, s.d) == (300, 2)
    sample = generate(s)
    assert sample.n_anomalies == 50
    A = sample.data[sample.labels]
    assert np.count_nonzero(A[:, 0] < 0.5) == 25
    assert np.count_nonzero(A[:, 0] > 0.5) == 25


def test_extrap_train_split():
    sample = generate(Scenario.default("extrap_s52", seed=1))
    A = sample.data[sample.labels]
    assert np.all(A[:, 0] < 0.5)


def test_toeplitz_anomaly_center():
    for d, rho in ((10, 0.5), (50, 0.5), (5, -0.3)):
        cov = bench.toeplitz_covariance(d, rho)
        c = bench.toeplitz_anomaly_center(d, rho, 1.25)
        assert np.sqrt(c @ np.linalg.solve(cov, c)) == pytest.approx(1.25, abs=1e-9)
        values, vectors = np.linalg.eigh(cov)
        assert abs(c @ vectors[:, 0]) / np.linalg.norm(c) == pytest.approx(1.0, abs=1e-12)
    assert bench.toeplitz_covariance(3, 0.5)[0, 2] == 0.25


def test_masked_counts():
    sample = generate(Scenario.default("masked_s4", seed=0))
    assert sample.data.shape == (125, 2)
    assert sample.n_anomalies == 35


def test_bad_scenarios():
    with pytest.raises(BadScenario):
        Scenario.default("nope")
    with pytest.raises(BadScenario):
        Scenario.default("toeplitz_s6", bogus=1)
    with pytest.raises(BadScenario):
        generate(Scenario.default("toeplitz_s6", rho=1.5))
    with pytest.raises(BadScenario):
        Scenario.default("clustered_s4", epsilon=0.7)
    with pytest.raises(BadScenario):
        generate(Scenario.default("clustered_s4", d=3))


def test_p_metric_examples():
    labels = np.array([True] * 10 + [False] * 20)
    depths = np.concatenate([np.linspace(0.01, 0.1, 10), np.linspace(0.2, 0.9, 20)])
    assert p_metric(depths, labels) == 1.0
    depths2 = depths.copy()
    depths2[15] = 0.05
    assert p_metric(depths2, labels) == pytest.approx(10 / 11)
    assert p_metric(np.full(30, 0.3), labels) == pytest.approx(10 / 30)
    with pytest.raises(NoAnomalies):
        p_metric(depths, np.zeros(30, bool))


def test_p_metric_range():
    rng = np.random.default_rng(0)
    for _ in range(100):
        labels = rng.random(40) < 0.2
        labels[0] = True
        p = p_metric(rng.random(40), labels)
        assert labels.sum() / 40 <= p <= 1.0


def test_run_repetitions_determinism_and_single_rep():
    s = Scenario.default("clustered_s4")
    m = MethodConfig("projection", SearchBudget(60, Strategy.RS))
    a = bench.run_repetitions(s, m, 3, base_seed=7)
    b = bench.run_repetitions(s, m, 3, base_seed=7)
    np.testing.assert_array_equal(a.p_values, b.p_values)
    assert len(a.reps) == 3
    q = a.quartiles
    assert q[0] <= q[2] <= q[4]
    one = bench.run_repetitions(s, m, 1, base_seed=7)
    s_seed, m_seed = bench.rep_seeds(7, 0)
    sample = generate(s.with_seed(s_seed))
    depths = bench.training_depths(sample, m, m_seed)
    assert one.reps[0].p == p_metric(depths, sample.labels)
    with pytest.raises(BadScenario):
        bench.run_repetitions(s, m, 0)


def test_subsample_study_grid():
    s = Scenario.default("clustered_s4")
    cells = bench.subsample_study(s, [1.0, 0.5], [30, 60], 2, strategy=Strategy.RS, base_seed=3)
    assert [(c.fraction, c.n_directions) for c in cells] == [(1.0, 30), (1.0, 60), (0.5, 30), (0.5, 60)]
    full = bench.run_repetitions(s, MethodConfig("projection", SearchBudget(30, Strategy.RS)), 2, base_seed=3)
    np.testing.assert_array_equal(cells[0].summary.p_values, full.p_values)
    with pytest.raises(BadScenario):
        bench.subsample_study(s, [0.02], [30], 1)
    with pytest.raises(BadScenario):
        bench.subsample_study(s, [1.5], [30], 1)


def test_method_labels():
    assert MethodConfig("projection", SearchBudget(200, Strategy.RRS)).label == "projection-RRS-200"
    assert MethodConfig("mahalanobis", None).label == "mahalanobis"
    assert MethodConfig("projection", SearchBudget(50, Strategy.RS), 0.1).label == "projection-RS-50-f0.1"
