"""Multivariate data depth: exact and approximate depths, depth-based anomaly
detection, direction-based explanations and synthetic benchmarks."""

from .core import (
    AmbiguousDirection,
    BadScenario,
    BudgetExceeded,
    DepthError,
    DepthNotion,
    DepthValue,
    DimensionMismatch,
    EmptyData,
    Exactness,
    FormatError,
    LocationScatter,
    NoAnomalies,
    SingularScatter,
    moment_estimates,
    whiten,
)

__version__ = "0.1.0"
