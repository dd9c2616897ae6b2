"""Shared numeric types, validation helpers and moment estimates.

Data matrices, points and directions are plain ``numpy`` arrays; the helpers
below validate and normalise them (float64, C-contiguous, finite) so the rest
of the package can assume clean input.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

# Condition numbers above this are treated as singular scatter.
MAX_CONDITION = 1e12


class DepthError(Exception):
    """Base class for all errors raised by this package."""


class SingularScatter(DepthError, ValueError):
    """Scatter matrix is singular, not positive definite, or too ill-conditioned."""


class DimensionMismatch(DepthError, ValueError):
    """Point, direction or model dimensions disagree."""


class BudgetExceeded(DepthError, RuntimeError):
    """A combinatorial computation would exceed its evaluation cap."""


class EmptyData(DepthError, ValueError):
    """No observations were supplied."""


class NoAnomalies(DepthError, ValueError):
    """An operation needed at least one labelled anomaly."""


class FormatError(DepthError, ValueError):
    """A persisted model could not be decoded."""


class BadScenario(DepthError, ValueError):
    """Scenario parameters are inconsistent."""


class AmbiguousDirection(DepthError, ValueError):
    """No direction shows any outlyingness for the point."""


class DepthNotion(str, enum.Enum):
    MAHALANOBIS = "mahalanobis"
    HALFSPACE = "halfspace"
    PROJECTION = "projection"
    PROJECTION_ASYMMETRIC = "projection_asymmetric"
    SIMPLICIAL = "simplicial"
    SIMPLICIAL_VOLUME = "simplicial_volume"
    SIMPLICIAL_VOLUME_AFFINE_INVARIANT = "simplicial_volume_affine_invariant"

    @classmethod
    def parse(cls, value: "str | DepthNotion") -> "DepthNotion":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            choices = ", ".join(n.value for n in cls)
            raise ValueError(f"unknown depth notion {value!r}; expected one of {choices}") from None

    @property
    def has_projection_property(self) -> bool:
        """True for notions approximated by searching over directions."""
        return self in (DepthNotion.HALFSPACE, DepthNotion.PROJECTION, DepthNotion.PROJECTION_ASYMMETRIC)

    @property
    def has_directions(self) -> bool:
        return self in (DepthNotion.PROJECTION, DepthNotion.PROJECTION_ASYMMETRIC)


class Exactness(str, enum.Enum):
    EXACT = "exact"
    APPROXIMATE = "approximate"
    ORACLE = "oracle"


@dataclass(frozen=True)
class DepthValue:
    """A depth in [0, 1] tagged with the notion and how it was obtained."""

    value: float
    notion: DepthNotion
    exactness: Exactness

    def __post_init__(self) -> None:
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"depth must lie in [0, 1], got {self.value!r}")

    def __float__(self) -> float:
        return float(self.value)


def as_data_matrix(values, *, name: str = "data") -> np.ndarray:
    """Return ``values`` as a finite float64 (n, d) array with n, d >= 1.

    One-dimensional input is read as n observations of a single variable.
    """
    arr = np.array(values, dtype=np.float64, order="C", copy=True)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional, got shape {arr.shape}")
    if arr.shape[0] < 1:
        raise EmptyData(f"{name} has no observations")
    if arr.shape[1] < 1:
        raise ValueError(f"{name} has no variables")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or infinite entries")
    arr.setflags(write=False)
    return arr


def as_point(values, d: int | None = None, *, name: str = "point") -> np.ndarray:
    """Return ``values`` as a finite float64 vector, optionally checking its length."""
    arr = np.array(values, dtype=np.float64, copy=True).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or infinite entries")
    if d is not None and arr.shape[0] != d:
        raise DimensionMismatch(f"{name} has dimension {arr.shape[0]}, expected {d}")
    return arr


def as_unit_direction(values, d: int | None = None) -> np.ndarray:
    """Return ``values`` as a vector on the unit sphere (norm within 1e-9 of 1)."""
    u = as_point(values, d, name="direction")
    norm = float(np.linalg.norm(u))
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"direction norm {norm!r} is not 1")
    return u


def check_dimension(point: np.ndarray, data: np.ndarray) -> None:
    if point.shape[0] != data.shape[1]:
        raise DimensionMismatch(
            f"point has dimension {point.shape[0]} but data has dimension {data.shape[1]}"
        )


@dataclass(frozen=True, eq=False)
class LocationScatter:
    """Location vector and scatter matrix with cached inverse and determinant.

    Build it with :meth:`from_scatter` (or :func:`moment_estimates`) so the
    inverse, determinant and whitening factor are computed consistently.
    """

    mu: np.ndarray
    sigma: np.ndarray
    sigma_inv: np.ndarray
    sigma_det: float
    # Lower-triangular L with L.T @ L == sigma_inv (inverse Cholesky factor).
    whitening: np.ndarray

    @classmethod
    def from_scatter(cls, mu, sigma) -> "LocationScatter":
        mu = as_point(mu, name="mu")
        sigma = np.array(sigma, dtype=np.float64, copy=True)
        d = mu.shape[0]
        if sigma.shape != (d, d):
            raise DimensionMismatch(f"scatter has shape {sigma.shape}, expected {(d, d)}")
        if not np.all(np.isfinite(sigma)):
            raise SingularScatter("scatter contains non-finite entries")
        scale = max(float(np.max(np.abs(sigma))), np.finfo(float).tiny)
        if np.max(np.abs(sigma - sigma.T)) > 1e-9 * scale:
            raise ValueError("scatter matrix is not symmetric")
        sigma = 0.5 * (sigma + sigma.T)
        try:
            chol = np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError:
            raise SingularScatter("scatter matrix is not positive definite") from None
        cond = np.linalg.cond(sigma)
        if not np.isfinite(cond) or cond > MAX_CONDITION:
            raise SingularScatter(f"scatter condition number {cond:.3g} exceeds {MAX_CONDITION:g}")
        eye = np.eye(d)
        chol_inv = np.linalg.solve(chol, eye)  # lower triangular, inverse of chol
        sigma_inv = chol_inv.T @ chol_inv
        sigma_inv = 0.5 * (sigma_inv + sigma_inv.T)
        det = float(np.prod(np.diag(chol)) ** 2)
        if not det > 0.0:
            raise SingularScatter("scatter determinant is not positive")
        for arr in (mu, sigma, sigma_inv, chol_inv):
            arr.setflags(write=False)
        # sigma^{-1} = chol_inv.T @ chol_inv, so L = chol_inv.
        return cls(mu=mu, sigma=sigma, sigma_inv=sigma_inv, sigma_det=det, whitening=chol_inv)

    @property
    def d(self) -> int:
        return int(self.mu.shape[0])

    def mahalanobis_sq(self, points: np.ndarray) -> np.ndarray:
        """Squared Mahalanobis distances of the rows of ``points``."""
        z = (np.atleast_2d(points) - self.mu) @ self.whitening.T
        return np.einsum("ij,ij->i", z, z)


def moment_estimates(data) -> LocationScatter:
    """Sample mean and unbiased (n - 1) covariance of ``data``.

    Raises:
        SingularScatter: if n <= d or the covariance is numerically singular.
    """
    X = as_data_matrix(data)
    n, d = X.shape
    if n <= d:
        raise SingularScatter(f"need more than d={d} observations for a covariance, got n={n}")
    mu = X.mean(axis=0)
    centered = X - mu
    sigma = centered.T @ centered / (n - 1)
    return LocationScatter.from_scatter(mu, sigma)


def whiten(data, ls: LocationScatter) -> np.ndarray:
    """Map each row x to L (x - mu) where L.T @ L is the inverse scatter."""
    X = as_data_matrix(data)
    if X.shape[1] != ls.d:
        raise DimensionMismatch(f"data has dimension {X.shape[1]}, location/scatter has {ls.d}")
    return (X - ls.mu) @ ls.whitening.T
