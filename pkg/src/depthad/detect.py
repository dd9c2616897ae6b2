"""Depth-based anomaly detection: fitting, thresholds, scoring and persistence.

A point is flagged as an anomaly when its depth with respect to the training
data falls strictly below the model threshold.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import depths as _depths
from . import optimize
from .core import (
    DepthNotion,
    DepthValue,
    DimensionMismatch,
    Exactness,
    FormatError,
    LocationScatter,
    NoAnomalies,
    as_data_matrix,
    as_point,
    moment_estimates,
)
from .optimize import SearchBudget

FORMAT_VERSION = 1
DETECT_ALL_EPSILON = 1e-12
DEFAULT_ALPHA = 0.05
# Monte Carlo draws used when an exact simplicial enumeration is too large.
MC_DRAWS = 100_000
# Spawn key of the subsampling stream; point streams use one-element keys.
_SUBSAMPLE_KEY = (0, 1)


# --------------------------------------------------------------------------
# Thresholds


def threshold_quantile(depths, alpha: float = DEFAULT_ALPHA) -> float:
    """Empirical alpha-quantile of training depths, lower interpolation."""
    arr = np.asarray(depths, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise ValueError("need at least one depth value")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return float(np.quantile(arr, alpha, method="lower"))


def threshold_detect_all(depths, anomaly_mask) -> float:
    """Smallest threshold that flags every labelled anomaly: max depth + 1e-12."""
    arr = np.asarray(depths, dtype=np.float64).reshape(-1)
    mask = np.asarray(anomaly_mask, dtype=bool).reshape(-1)
    if mask.shape != arr.shape:
        raise ValueError("depths and anomaly mask differ in length")
    if not np.any(mask):
        raise NoAnomalies("threshold_detect_all needs at least one anomaly")
    return float(arr[mask].max()) + DETECT_ALL_EPSILON


class PolicyKind(str, enum.Enum):
    QUANTILE = "quantile"
    DETECT_ALL = "detect_all"
    FIXED = "fixed"


@dataclass(frozen=True)
class ThresholdPolicy:
    """How ``fit`` picks the threshold.

    ``quantile`` uses ``alpha``; ``fixed`` uses ``value``; ``detect_all``
    needs anomaly labels for the training data.
    """

    kind: PolicyKind = PolicyKind.QUANTILE
    alpha: float = DEFAULT_ALPHA
    value: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", PolicyKind(self.kind))
        if self.kind is PolicyKind.QUANTILE and not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.kind is PolicyKind.FIXED:
            if self.value is None or not 0.0 <= self.value <= 1.0:
                raise ValueError("fixed threshold must lie in [0, 1]")

    @classmethod
    def quantile(cls, alpha: float = DEFAULT_ALPHA) -> "ThresholdPolicy":
        return cls(PolicyKind.QUANTILE, alpha=alpha)

    @classmethod
    def detect_all(cls) -> "ThresholdPolicy":
        return cls(PolicyKind.DETECT_ALL)

    @classmethod
    def fixed(cls, value: float) -> "ThresholdPolicy":
        return cls(PolicyKind.FIXED, value=value)


# --------------------------------------------------------------------------
# Box rule


@dataclass(frozen=True)
class BoxRule:
    """Per-variable validation bounds; anything outside one of them is an anomaly."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        if np.any(self.lower > self.upper):
            raise ValueError("every lower bound must not exceed its upper bound")


def box_rule_fit(data, coverage: float = 1.0) -> BoxRule:
    """Bounds at the (1 - coverage)/2 and (1 + coverage)/2 empirical quantiles."""
    if not 0.0 < coverage <= 1.0:
        raise ValueError(f"coverage must lie in (0, 1], got {coverage}")
    X = as_data_matrix(data)
    lo = np.quantile(X, (1.0 - coverage) / 2.0, axis=0)
    hi = np.quantile(X, (1.0 + coverage) / 2.0, axis=0)
    if coverage == 1.0:
        lo, hi = X.min(axis=0), X.max(axis=0)
    return BoxRule(lower=np.asarray(lo, dtype=np.float64), upper=np.asarray(hi, dtype=np.float64))


def box_rule_apply(rule: BoxRule, x) -> bool:
    p = as_point(x, rule.lower.shape[0])
    return bool(np.any(p < rule.lower) or np.any(p > rule.upper))


# --------------------------------------------------------------------------
# Model


@dataclass(frozen=True, eq=False)
class DepthModel:
    """Trained detector.

    Mahalanobis models keep only the location/scatter estimate; all other
    notions keep the (possibly subsampled) training sample.
    """

    notion: DepthNotion
    threshold: float
    d: int
    budget: SearchBudget | None = None
    ls: LocationScatter | None = None
    sample: np.ndarray | None = None
    subsample_fraction: float = 1.0
    seed: int = 0
    policy: ThresholdPolicy = field(default_factory=ThresholdPolicy)

    def __post_init__(self) -> None:
        object.__setattr__(self, "notion", DepthNotion.parse(self.notion))
        if not 0.0 <= self.threshold <= 1.0 + DETECT_ALL_EPSILON:
            raise ValueError(f"threshold must lie in [0, 1], got {self.threshold}")
        if self.notion is DepthNotion.MAHALANOBIS and self.ls is None:
            raise ValueError("a Mahalanobis model needs a location/scatter estimate")
        if self.notion is not DepthNotion.MAHALANOBIS and self.sample is None:
            raise ValueError(f"a {self.notion.value} model needs its training sample")

    @property
    def uses_search(self) -> bool:
        """True when depths come from a direction search (and carry directions)."""
        if self.notion in (DepthNotion.PROJECTION, DepthNotion.PROJECTION_ASYMMETRIC):
            return True
        return self.notion is DepthNotion.HALFSPACE and self.d > 2

    def with_threshold(self, threshold: float) -> "DepthModel":
        return replace(self, threshold=float(threshold), policy=ThresholdPolicy.fixed(min(threshold, 1.0)))


@dataclass(frozen=True, eq=False)
class DepthReport:
    depth: DepthValue
    is_anomaly: bool
    direction: np.ndarray | None = None
    evaluations_used: int = 0


def _subsample(X: np.ndarray, fraction: float, seed: int) -> np.ndarray:
    n, d = X.shape
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"subsample fraction must lie in (0, 1], got {fraction}")
    if fraction == 1.0:
        return X
    size = subsample_size(n, fraction)
    if size < d + 1:
        raise ValueError(f"subsample of {size} points is smaller than d+1={d + 1}")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=_SUBSAMPLE_KEY))
    idx = np.sort(rng.choice(n, size=size, replace=False))
    return X[idx]


def subsample_size(n: int, fraction: float) -> int:
    return max(1, min(n, math.ceil(fraction * n - 1e-9)))


def _raw_depths(model: DepthModel, P: np.ndarray, first_index: int, workers: int):
    """Depth values, directions (or None), evaluation counts and exactness."""
    m = P.shape[0]
    if m == 0:
        return np.empty(0), None, np.zeros(0, np.int64), Exactness.EXACT
    if model.notion is DepthNotion.MAHALANOBIS:
        return _depths.mahalanobis_depths(P, model.ls), None, np.zeros(m, np.int64), Exactness.EXACT
    X = model.sample
    if model.uses_search:
        results = optimize.approx_depths(P, X, model.notion, model.budget, workers=workers,
                                         first_index=first_index)
        values = np.array([r.value.value for r in results])
        dirs = np.array([optimize.optimal_direction(r) for r in results])
        used = np.array([r.evaluations_used for r in results], dtype=np.int64)
        return values, dirs, used, Exactness.APPROXIMATE
    values = np.empty(m)
    exactness = Exactness.EXACT
    for i in range(m):
        try:
            values[i] = _depths.exact_depth(P[i], X, model.notion).value
        except _depths.BudgetExceeded:
            seed = model.budget.seed if model.budget is not None else model.seed
            values[i] = _depths.monte_carlo_simplex_depth(
                P[i], X, model.notion, MC_DRAWS, seed + first_index + i).value
            exactness = Exactness.APPROXIMATE
    return values, None, np.zeros(m, np.int64), exactness


def _as_queries(points, d: int) -> np.ndarray:
    P = np.asarray(points, dtype=np.float64)
    if P.ndim == 1:
        P = P.reshape(1, -1) if P.size else P.reshape(0, d)
    if P.ndim != 2:
        raise ValueError(f"query points must be two-dimensional, got shape {P.shape}")
    if P.shape[0] and P.shape[1] != d:
        raise DimensionMismatch(f"query points have dimension {P.shape[1]}, model has {d}")
    if not np.all(np.isfinite(P)):
        raise ValueError("query points contain NaN or infinite entries")
    return P.reshape(-1, d)


def depth_values(model: DepthModel, points, *, first_index: int = 0, workers: int = 1):
    """Depths of ``points`` under ``model`` as ``(values, directions)``.

    Row i uses the random stream of index ``first_index + i``.
    """
    P = _as_queries(points, model.d)
    values, dirs, _, _ = _raw_depths(model, P, first_index, workers)
    return values, dirs


def score_many(model: DepthModel, points, *, first_index: int = 0, workers: int = 1) -> list[DepthReport]:
    """Score every row of ``points``; see :func:`score`."""
    P = _as_queries(points, model.d)
    values, dirs, used, exactness = _raw_depths(model, P, first_index, workers)
    reports = []
    for i, v in enumerate(values):
        reports.append(DepthReport(
            depth=DepthValue(float(min(max(v, 0.0), 1.0)), model.notion, exactness),
            is_anomaly=bool(v < model.threshold),
            direction=None if dirs is None else dirs[i],
            evaluations_used=int(used[i]),
        ))
    return reports


def score(model: DepthModel, x, *, index: int = 0) -> DepthReport:
    """Depth of ``x`` with respect to the model and the anomaly decision.

    ``index`` selects the per-point random stream, so scoring the i-th row of
    a batch alone reproduces its batch result.
    """
    p = as_point(x)
    if p.shape[0] != model.d:
        raise DimensionMismatch(f"point has dimension {p.shape[0]}, model has {model.d}")
    return score_many(model, p.reshape(1, -1), first_index=index)[0]


def _policy_threshold(policy: ThresholdPolicy, values: np.ndarray, labels) -> float:
    if policy.kind is PolicyKind.FIXED:
        return float(policy.value)
    if policy.kind is PolicyKind.QUANTILE:
        return threshold_quantile(values, policy.alpha)
    if labels is None:
        raise NoAnomalies("the detect_all policy needs anomaly labels")
    return threshold_detect_all(values, labels)


def fit_with_depths(data, notion, budget: SearchBudget | None = None,
                    policy: ThresholdPolicy | None = None, *, subsample_fraction: float = 1.0,
                    seed: int | None = None, labels=None, workers: int = 1):
    """Fit a model and also return the training depths used for its threshold.

    Training point i is scored with stream index i.
    """
    notion = DepthNotion.parse(notion)
    policy = policy if policy is not None else ThresholdPolicy()
    X = as_data_matrix(data)
    n, d = X.shape
    budget = budget if budget is not None else SearchBudget()
    seed = budget.seed if seed is None else int(seed)
    if labels is not None and np.asarray(labels).reshape(-1).shape[0] != n:
        raise ValueError("labels and data differ in length")
    if notion is DepthNotion.MAHALANOBIS:
        ls = moment_estimates(X)
        model = DepthModel(notion, 0.0, d, budget=None, ls=ls, sample=None,
                           subsample_fraction=1.0, seed=seed, policy=policy)
    else:
        sample = _subsample(X, subsample_fraction, seed)
        sample = np.array(sample)
        sample.setflags(write=False)
        model = DepthModel(notion, 0.0, d, budget=budget, ls=None, sample=sample,
                           subsample_fraction=float(subsample_fraction), seed=seed, policy=policy)
    if policy.kind is PolicyKind.FIXED:
        return replace(model, threshold=float(policy.value)), None
    values, _ = depth_values(model, X, workers=workers)
    threshold = _policy_threshold(policy, values, labels)
    return replace(model, threshold=threshold), values


def fit(data, notion, budget: SearchBudget | None = None, policy: ThresholdPolicy | None = None, *,
        subsample_fraction: float = 1.0, seed: int | None = None, labels=None,
        workers: int = 1) -> DepthModel:
    """Train a depth-based detector on ``data``.

    Args:
        data: training sample, one observation per row.
        notion: depth notion.
        budget: direction-search budget for approximate notions.
        policy: threshold policy; quantile with alpha 0.05 by default.
        subsample_fraction: keep a uniform random subset of this share of the
            rows as the reference sample (drawn once, seeded).
        seed: subsampling seed; defaults to the budget seed.
        labels: anomaly flags, required by the detect_all policy.
    """
    model, _ = fit_with_depths(data, notion, budget, policy, subsample_fraction=subsample_fraction,
                               seed=seed, labels=labels, workers=workers)
    return model


# --------------------------------------------------------------------------
# Persistence


def _fmt(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if not math.isfinite(v):
            raise ValueError("cannot serialise non-finite numbers")
        text = "%.17g" % v
        return text if any(c in text for c in ".en") else text + ".0"
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, np.ndarray):
        return _fmt(value.tolist())
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    raise TypeError(f"cannot serialise {type(value).__name__}")


def _write(doc: dict, indent: str = "") -> str:
    inner = indent + "  "
    lines = []
    for key, value in doc.items():
        if isinstance(value, dict):
            body = _write(value, inner)
        elif isinstance(value, np.ndarray) and value.ndim == 2:
            rows = ",\n".join(inner + "  " + _fmt(row) for row in value)
            body = "[\n" + rows + "\n" + inner + "]" if value.shape[0] else "[]"
        else:
            body = _fmt(value)
        lines.append(f"{inner}{json.dumps(key)}: {body}")
    return "{\n" + ",\n".join(lines) + "\n" + indent + "}"


def _budget_doc(b: SearchBudget | None):
    if b is None:
        return None
    return {
        "n_directions": b.n_directions,
        "strategy": b.strategy.value,
        "seed": b.seed,
        "restarts": b.restarts,
        "rounds": b.rounds,
        "cap_angle": b.cap_angle,
        "cap_shrink": b.cap_shrink,
    }


def save_model(model: DepthModel) -> bytes:
    """Serialise a model as a UTF-8 structured-text document."""
    ls = None
    if model.ls is not None:
        ls = {"mu": model.ls.mu, "sigma": model.ls.sigma, "sigma_inv": model.ls.sigma_inv,
              "sigma_det": model.ls.sigma_det}
    doc = {
        "format_version": FORMAT_VERSION,
        "notion": model.notion.value,
        "d": model.d,
        "threshold": model.threshold,
        "policy": {"kind": model.policy.kind.value, "alpha": model.policy.alpha,
                   "value": model.policy.value},
        "budget": _budget_doc(model.budget),
        "ls": ls,
        "sample": model.sample,
        "subsample_fraction": model.subsample_fraction,
        "seed": model.seed,
    }
    return (_write(doc) + "\n").encode("utf-8")


def load_model(payload: bytes | str) -> DepthModel:
    """Inverse of :func:`save_model`.

    Raises:
        FormatError: on a version mismatch or a damaged payload.
    """
    try:
        text = payload.decode("utf-8") if isinstance(payload, (bytes, bytearray)) else payload
        doc = json.loads(text)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"model document cannot be decoded: {exc}") from None
    if not isinstance(doc, dict):
        raise FormatError("model document must be an object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported model format version {version!r} (expected {FORMAT_VERSION})")
    try:
        notion = DepthNotion.parse(doc["notion"])
        b = doc["budget"]
        budget = None if b is None else SearchBudget(
            n_directions=int(b["n_directions"]), strategy=b["strategy"], seed=int(b["seed"]),
            restarts=None if b["restarts"] is None else int(b["restarts"]), rounds=int(b["rounds"]),
            cap_angle=float(b["cap_angle"]), cap_shrink=float(b["cap_shrink"]))
        ls = None
        if doc["ls"] is not None:
            ls = LocationScatter.from_scatter(doc["ls"]["mu"], doc["ls"]["sigma"])
        sample = None
        if doc["sample"] is not None:
            sample = as_data_matrix(doc["sample"], name="stored sample")
        p = doc["policy"]
        policy = ThresholdPolicy(PolicyKind(p["kind"]), alpha=float(p["alpha"]),
                                 value=None if p["value"] is None else float(p["value"]))
        return DepthModel(
            notion=notion, threshold=float(doc["threshold"]), d=int(doc["d"]), budget=budget,
            ls=ls, sample=sample, subsample_fraction=float(doc["subsample_fraction"]),
            seed=int(doc["seed"]), policy=policy,
        )
    except FormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"model document is incomplete or invalid: {exc}") from None
