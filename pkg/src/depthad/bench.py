"""Synthetic scenarios, the p-metric, and the repetition/timing harness.

Every generator is deterministic given the scenario seed.  Anomalies are
appended after the normal points and the combined sample is shuffled.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Mapping

import numpy as np
from scipy import stats

from . import detect
from .core import BadScenario, DepthNotion, NoAnomalies
from .optimize import SearchBudget, Strategy

MAX_CAUCHY_ATTEMPTS = 1_000_000


class ScenarioTag(str, enum.Enum):
    INTRO_500 = "intro_500"
    INTRO_25 = "intro_25"
    CLUSTERED_S4 = "clustered_s4"
    MASKED_S4 = "masked_s4"
    ROBUST_S51 = "robust_s51"
    EXTRAP_S52 = "extrap_s52"
    TOEPLITZ_S6 = "toeplitz_s6"

    @classmethod
    def parse(cls, value) -> "ScenarioTag":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            choices = ", ".join(t.value for t in cls)
            raise BadScenario(f"unknown scenario {value!r}; expected one of {choices}") from None


# Shared bivariate Gaussian of the clustered and masked examples.
S4_MEAN = np.array([1.0, 1.0])
S4_COV = np.array([[1.0, 1.0], [1.0, 2.0]])

# Designed probe points of the introductory example: four normal items,
# three anomalies outside the marginal ranges and one ("cross") inside them
# but far off the correlation axis.
INTRO_NORMALS = np.array([[0.8, 1.0], [-1.0, -0.6], [1.8, 1.4], [-1.6, -1.9]])
INTRO_ANOMALIES = np.array([[6.0, 5.8], [-5.8, -6.0], [0.2, 4.6], [1.5, -1.5]])
INTRO_CROSS = 3

_DEFAULTS: dict[ScenarioTag, dict] = {
    ScenarioTag.INTRO_500: dict(d=2, n=500, epsilon=0.0, params={"rho": 0.85}),
    ScenarioTag.INTRO_25: dict(d=2, n=25, epsilon=4 / 25, params={"rho": 0.85}),
    ScenarioTag.CLUSTERED_S4: dict(d=2, n=100, epsilon=0.1, params={
        "anomaly_mean_x": 3.181, "anomaly_mean_y": -0.222, "scale_divisor": 36.0}),
    ScenarioTag.MASKED_S4: dict(d=2, n=125, epsilon=35 / 125, params={
        "anomaly_mean_x": 3.181, "anomaly_mean_y": -0.222, "scale_divisor": 36.0,
        "n_clustered": 10, "n_masking": 25}),
    ScenarioTag.ROBUST_S51: dict(d=10, n=1000, epsilon=0.05, params={
        "normal_mean": 1.0, "norm_factor": 1.5}),
    ScenarioTag.EXTRAP_S52: dict(d=2, n=100, epsilon=0.1, params={"split": "train"}),
    ScenarioTag.TOEPLITZ_S6: dict(d=10, n=1000, epsilon=0.05, params={
        "rho": 0.5, "mahalanobis_shift": 1.25, "anomaly_variance": 0.1}),
}


@dataclass(frozen=True)
class Scenario:
    """A seedable description of one synthetic experiment."""

    tag: ScenarioTag
    d: int
    n: int
    epsilon: float
    params: Mapping[str, float | str] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "tag", ScenarioTag.parse(self.tag))
        object.__setattr__(self, "params", MappingProxyType(dict(self.params)))
        if not 0.0 <= self.epsilon <= 0.5:
            raise BadScenario(f"epsilon must lie in [0, 0.5], got {self.epsilon}")
        if self.n < 1 or self.d < 1:
            raise BadScenario("n and d must be positive")
        missing = set(_DEFAULTS[self.tag]["params"]) - set(self.params)
        if missing:
            raise BadScenario(f"{self.tag.value} is missing params: {sorted(missing)}")

    @classmethod
    def default(cls, tag, *, seed: int = 0, **overrides) -> "Scenario":
        """Scenario with the tag's default settings.

        Keyword overrides may name ``d``, ``n``, ``epsilon`` or any param.
        """
        tag = ScenarioTag.parse(tag)
        base = _DEFAULTS[tag]
        params = dict(base["params"])
        fields = {k: base[k] for k in ("d", "n", "epsilon")}
        for key, value in overrides.items():
            if value is None:
                continue
            if key in fields:
                fields[key] = value
            elif key in params:
                params[key] = value
            else:
                raise BadScenario(f"{tag.value} has no parameter {key!r}")
        if tag is ScenarioTag.EXTRAP_S52 and params["split"] == "test" and overrides.get("n") is None:
            fields["n"], fields["epsilon"] = 300, 50 / 300
        return cls(tag, int(fields["d"]), int(fields["n"]), float(fields["epsilon"]), params, int(seed))

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, seed=int(seed))


@dataclass(frozen=True, eq=False)
class LabeledSample:
    """Generated data with anomaly labels.

    ``probes`` holds extra query points (with ``probe_labels``) for the
    introductory scenarios; it is empty otherwise.
    """

    data: np.ndarray
    labels: np.ndarray
    probes: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    probe_labels: np.ndarray = field(default_factory=lambda: np.empty(0, bool))

    @property
    def n_anomalies(self) -> int:
        return int(np.count_nonzero(self.labels))


def contamination_counts(n: int, epsilon: float) -> tuple[int, int]:
    """(floor(n (1 - eps)), ceil(n eps)), computed robustly to rounding."""
    n_anom = math.ceil(n * epsilon - 1e-9)
    return n - n_anom, n_anom


def toeplitz_covariance(d: int, rho: float) -> np.ndarray:
    idx = np.arange(d)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def principal_axes(cov) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and unit eigenvectors (columns) of ``cov``.

    Each eigenvector is oriented so its first nonzero coordinate is positive.
    """
    values, vectors = np.linalg.eigh(np.asarray(cov, dtype=np.float64))
    for k in range(vectors.shape[1]):
        col = vectors[:, k]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0:
            vectors[:, k] = -col
    return values, vectors


def s4_second_principal_vector() -> np.ndarray:
    """Unit eigenvector of the smaller eigenvalue of the clustered-example covariance."""
    return principal_axes(S4_COV)[1][:, 0]


def _assemble(rng, normals, anomalies, probes=None, probe_labels=None) -> LabeledSample:
    data = np.vstack([normals, anomalies]) if anomalies.size else normals
    labels = np.concatenate([np.zeros(normals.shape[0], bool), np.ones(anomalies.shape[0], bool)])
    perm = rng.permutation(data.shape[0])
    data = np.ascontiguousarray(data[perm])
    labels = labels[perm]
    if probes is None:
        probes = np.empty((0, data.shape[1]))
        probe_labels = np.empty(0, bool)
    return LabeledSample(data=data, labels=labels, probes=probes, probe_labels=probe_labels)


def _check(cond: bool, message: str) -> None:
    if not cond:
        raise BadScenario(message)


def _intro(s: Scenario, rng) -> LabeledSample:
    _check(s.d == 2, "introductory scenarios are bivariate")
    rho = float(s.params["rho"])
    _check(-1.0 < rho < 1.0, "rho must lie in (-1, 1)")
    cov = np.array([[1.0, rho], [rho, 1.0]])
    probes = np.vstack([INTRO_NORMALS, INTRO_ANOMALIES])
    probe_labels = np.array([False] * 4 + [True] * 4)
    if s.tag is ScenarioTag.INTRO_500:
        normals = rng.multivariate_normal(np.zeros(2), cov, size=s.n)
        return _assemble(rng, normals, np.empty((0, 2)), probes, probe_labels)
    _check(s.n > 8, "intro_25 needs more than the 8 designed points")
    gauss = rng.multivariate_normal(np.zeros(2), cov, size=s.n - 8)
    return _assemble(rng, np.vstack([gauss, INTRO_NORMALS]), INTRO_ANOMALIES, probes, probe_labels)


def _s4_anomalies(s: Scenario, rng, count: int) -> np.ndarray:
    mean = np.array([float(s.params["anomaly_mean_x"]), float(s.params["anomaly_mean_y"])])
    divisor = float(s.params["scale_divisor"])
    _check(divisor > 0, "scale_divisor must be positive")
    return rng.multivariate_normal(mean, S4_COV / divisor, size=count)


def _clustered(s: Scenario, rng) -> LabeledSample:
    _check(s.d == 2, "clustered_s4 is bivariate")
    n_norm, n_anom = contamination_counts(s.n, s.epsilon)
    normals = rng.multivariate_normal(S4_MEAN, S4_COV, size=n_norm)
    anomalies = _s4_anomalies(s, rng, n_anom)
    return _assemble(rng, normals, anomalies)


def _masked(s: Scenario, rng) -> LabeledSample:
    _check(s.d == 2, "masked_s4 is bivariate")
    n_clu = int(s.params["n_clustered"])
    n_mask = int(s.params["n_masking"])
    n_norm = s.n - n_clu - n_mask
    _check(n_clu >= 1 and n_mask >= 0 and n_norm >= 1, "inconsistent masked_s4 counts")
    normals = rng.multivariate_normal(S4_MEAN, S4_COV, size=n_norm)
    clustered = _s4_anomalies(s, rng, n_clu)
    # Masking points follow the normal law's shape with Mahalanobis radius
    # between the smallest and largest radius of the clustered anomalies.
    chol = np.linalg.cholesky(S4_COV)
    white = np.linalg.solve(chol, (clustered - S4_MEAN).T).T
    radii = np.linalg.norm(white, axis=1)
    lo, hi = float(radii.min()), float(radii.max())
    dist = stats.chi(df=2)
    p_lo, p_hi = dist.cdf(lo), dist.cdf(hi)
    r = dist.ppf(p_lo + (p_hi - p_lo) * rng.random(n_mask))
    r = np.clip(r, lo, hi)
    angle = rng.uniform(0.0, 2 * math.pi, size=n_mask)
    w = np.column_stack([np.cos(angle), np.sin(angle)]) * r[:, None]
    masking = S4_MEAN + w @ chol.T
    return _assemble(rng, normals, np.vstack([clustered, masking]))


def _robust(s: Scenario, rng) -> LabeledSample:
    n_norm, n_anom = contamination_counts(s.n, s.epsilon)
    _check(n_norm >= 1, "robust_s51 needs normal points")
    d = s.d
    normals = float(s.params["normal_mean"]) + rng.standard_normal((n_norm, d))
    bound = float(s.params["norm_factor"]) * float(np.linalg.norm(normals, axis=1).max())
    anomalies = np.empty((n_anom, d))
    for k in range(n_anom):
        for _ in range(MAX_CAUCHY_ATTEMPTS):
            z = rng.standard_normal(d) / abs(rng.standard_normal())
            if np.linalg.norm(z) > bound:
                break
        else:  # pragma: no cover - probability of reaching this is negligible
            z = z / np.linalg.norm(z) * bound * (1 + 1e-12)
        anomalies[k] = z
    _check(bool(np.all(np.linalg.norm(anomalies, axis=1) > bound)) if n_anom else True,
           "generated anomaly violates the norm condition")
    return _assemble(rng, normals, anomalies)


def _extrap(s: Scenario, rng) -> LabeledSample:
    _check(s.d == 2, "extrap_s52 is bivariate")
    split = str(s.params["split"])
    normal_mean, normal_sd = np.array([0.5, 0.5]), 0.25
    left_mean, right_mean, anomaly_sd = np.array([-0.75, 0.5]), np.array([1.75, 0.5]), 0.1
    if split == "train":
        n_norm, n_anom = contamination_counts(s.n, s.epsilon)
        normals = normal_mean + normal_sd * rng.standard_normal((n_norm, 2))
        anomalies = left_mean + anomaly_sd * rng.standard_normal((n_anom, 2))
        return _assemble(rng, normals, anomalies)
    _check(split == "test", "split must be 'train' or 'test'")
    _check(s.n % 12 == 0, "test split needs n divisible by 12 (10:1:1 proportions)")
    n_side = s.n // 12
    normals = normal_mean + normal_sd * rng.standard_normal((s.n - 2 * n_side, 2))
    left = left_mean + anomaly_sd * rng.standard_normal((n_side, 2))
    right = right_mean + anomaly_sd * rng.standard_normal((n_side, 2))
    return _assemble(rng, normals, np.vstack([left, right]))


def toeplitz_anomaly_center(d: int, rho: float, shift: float) -> np.ndarray:
    """Point at Mahalanobis distance ``shift`` along the smallest principal vector."""
    cov = toeplitz_covariance(d, rho)
    values, vectors = principal_axes(cov)
    return shift * math.sqrt(values[0]) * vectors[:, 0]


def _toeplitz(s: Scenario, rng) -> LabeledSample:
    d = s.d
    rho = float(s.params["rho"])
    _check(-1.0 < rho < 1.0, "rho must lie in (-1, 1)")
    var = float(s.params["anomaly_variance"])
    _check(var > 0, "anomaly_variance must be positive")
    cov = toeplitz_covariance(d, rho)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise BadScenario("Toeplitz covariance is not positive definite") from None
    n_norm, n_anom = contamination_counts(s.n, s.epsilon)
    normals = rng.standard_normal((n_norm, d)) @ chol.T
    center = toeplitz_anomaly_center(d, rho, float(s.params["mahalanobis_shift"]))
    check = float(np.sqrt(center @ np.linalg.solve(cov, center)))
    _check(abs(check - float(s.params["mahalanobis_shift"])) <= 1e-9, "anomaly center misplaced")
    anomalies = center + math.sqrt(var) * rng.standard_normal((n_anom, d))
    return _assemble(rng, normals, anomalies)


_GENERATORS = {
    ScenarioTag.INTRO_500: _intro,
    ScenarioTag.INTRO_25: _intro,
    ScenarioTag.CLUSTERED_S4: _clustered,
    ScenarioTag.MASKED_S4: _masked,
    ScenarioTag.ROBUST_S51: _robust,
    ScenarioTag.EXTRAP_S52: _extrap,
    ScenarioTag.TOEPLITZ_S6: _toeplitz,
}


def generate(s: Scenario) -> LabeledSample:
    """Draw the labelled sample described by ``s``."""
    rng = np.random.default_rng(s.seed)
    sample = _GENERATORS[s.tag](s, rng)
    _check(sample.data.shape == (s.n, s.d), f"generated shape {sample.data.shape} != {(s.n, s.d)}")
    return sample


# --------------------------------------------------------------------------
# Metric and harness


def p_metric(depths, labels) -> float:
    """Share of anomalies among the points flagged by the detect-all threshold."""
    arr = np.asarray(depths, dtype=np.float64).reshape(-1)
    mask = np.asarray(labels, dtype=bool).reshape(-1)
    if not np.any(mask):
        raise NoAnomalies("p-metric needs at least one anomaly")
    t = detect.threshold_detect_all(arr, mask)
    flagged = int(np.count_nonzero(arr < t))
    return int(np.count_nonzero(mask)) / flagged


@dataclass(frozen=True)
class MethodConfig:
    """Depth notion, search budget and reference subsample share of one method."""

    notion: DepthNotion = DepthNotion.PROJECTION
    budget: SearchBudget = field(default_factory=SearchBudget)
    subsample_fraction: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "notion", DepthNotion.parse(self.notion))

    @property
    def label(self) -> str:
        b = self.budget
        if self.notion.has_projection_property and self.budget is not None:
            text = f"{self.notion.value}-{b.strategy.value}-{b.n_directions}"
        else:
            text = self.notion.value
        if self.subsample_fraction != 1.0:
            text += f"-f{self.subsample_fraction:g}"
        return text


@dataclass(frozen=True, eq=False)
class RepResult:
    rep: int
    scenario_seed: int
    method_seed: int
    p: float
    millis: float
    depths: np.ndarray
    labels: np.ndarray


@dataclass(frozen=True, eq=False)
class RepetitionSummary:
    scenario: Scenario
    method: MethodConfig
    reps: tuple[RepResult, ...]

    @property
    def p_values(self) -> np.ndarray:
        return np.array([r.p for r in self.reps])

    @property
    def millis(self) -> np.ndarray:
        return np.array([r.millis for r in self.reps])

    @property
    def quartiles(self) -> tuple[float, float, float, float, float]:
        """min, lower quartile, median, upper quartile, max of p."""
        q = np.quantile(self.p_values, [0.0, 0.25, 0.5, 0.75, 1.0])
        return tuple(float(v) for v in q)

    @property
    def median(self) -> float:
        return float(np.median(self.p_values))


def rep_seeds(base_seed: int, rep: int) -> tuple[int, int]:
    """Scenario and method seeds of repetition ``rep``."""
    state = np.random.SeedSequence(int(base_seed), spawn_key=(int(rep),)).generate_state(2)
    return int(state[0]), int(state[1])


def training_depths(sample: LabeledSample, method: MethodConfig, seed: int, workers: int = 1) -> np.ndarray:
    """Depth of every training point with respect to the (subsampled) training data."""
    budget = method.budget.with_seed(seed) if method.budget is not None else None
    n, d = sample.data.shape
    if method.subsample_fraction != 1.0 and detect.subsample_size(n, method.subsample_fraction) < d + 1:
        raise BadScenario(
            f"subsample fraction {method.subsample_fraction} leaves fewer than d+1={d + 1} points")
    model = detect.fit(sample.data, method.notion, budget, detect.ThresholdPolicy.fixed(0.0),
                       subsample_fraction=method.subsample_fraction, seed=seed)
    values, _ = detect.depth_values(model, sample.data, workers=workers)
    return values


def run_repetitions(s: Scenario, method: MethodConfig, reps: int, *, base_seed: int | None = None,
                    workers: int = 1) -> RepetitionSummary:
    """Generate, score and evaluate ``reps`` independent repetitions.

    Repetition r uses seeds derived from ``(base_seed, r)``; ``base_seed``
    defaults to the scenario seed.
    """
    if reps < 1:
        raise BadScenario("reps must be at least 1")
    base = s.seed if base_seed is None else int(base_seed)
    out = []
    for r in range(reps):
        s_seed, m_seed = rep_seeds(base, r)
        sample = generate(s.with_seed(s_seed))
        start = time.perf_counter()
        values = training_depths(sample, method, m_seed, workers)
        millis = (time.perf_counter() - start) * 1000.0
        out.append(RepResult(r, s_seed, m_seed, p_metric(values, sample.labels), millis, values,
                             sample.labels))
    return RepetitionSummary(s, method, tuple(out))


@dataclass(frozen=True, eq=False)
class SubsampleCell:
    fraction: float
    n_directions: int
    summary: RepetitionSummary


def subsample_study(s: Scenario, fractions, budgets, reps: int, *, strategy=Strategy.NELDER_MEAD,
                    notion=DepthNotion.PROJECTION, base_seed: int | None = None,
                    workers: int = 1) -> list[SubsampleCell]:
    """p-metric summaries over a grid of reference fractions and budgets."""
    fractions = [float(f) for f in fractions]
    for f in fractions:
        if not 0.0 < f <= 1.0:
            raise BadScenario(f"fractions must lie in (0, 1], got {f}")
        if detect.subsample_size(s.n, f) < s.d + 1:
            raise BadScenario(f"fraction {f} leaves fewer than d+1={s.d + 1} reference points")
    cells = []
    for f in fractions:
        for k in budgets:
            method = MethodConfig(notion, SearchBudget(int(k), strategy), f)
            cells.append(SubsampleCell(f, int(k), run_repetitions(s, method, reps, base_seed=base_seed,
                                                                  workers=workers)))
    return cells
